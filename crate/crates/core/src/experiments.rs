//! Reproducible experiment suite: one runner per acceptance item, each a list of
//! named measurements with the limit it must meet.

use std::fmt;

use rand::Rng;
use serde::Serialize;

use crate::cumulants::{
    cumulants_to_moments, make_nu, moments_to_cumulants, power_eta, CumulantTensor, Species,
};
use crate::dist::{cp_check, moments_of, MomentTensor, RealizedCP};
use crate::error::{Error, Result};
use crate::flow::{
    arcsine_flow_exact, cp_h_eval, divisor_convergence_check, flow_vs_series, generator_perturbation_check,
    picard_flow, recover_sigma, rk4_flow, sample_grid, semigroup_defect, FlowState, Generator,
};
use crate::limits::{richardson, run_bp, species_power, ScalarSeed, TriangularArray};
use crate::matalg::{CMatrix, HalfPlanePoint, C64};
use crate::ncseries::{evolution_check, monotone_convolve};
use crate::partitions::{enumerate, order_count, order_count_bruteforce, Partition, PartitionClass};
use crate::random::{
    random_cp, random_distribution, random_hermitian, random_matrix, random_tensor, random_unit_vector, split,
    SeededRng,
};
use crate::tensor::Multilinear;

pub const DEFAULT_SEED: u64 = 20_240_601;

pub const ITEMS: [&str; 11] = [
    "partitions and orders",
    "species m_4 table",
    "moment-cumulant round trip",
    "evolution identity",
    "monotone powers",
    "flow suite",
    "flow against truncated series",
    "recover sigma",
    "Bercovici-Pata harness",
    "divisor and perturbation checks",
    "CP positivity",
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Limit {
    AtMost { max: f64 },
    AtLeast { min: f64 },
    Within { min: f64, max: f64 },
}

impl Limit {
    pub fn admits(self, x: f64) -> bool {
        match self {
            Limit::AtMost { max } => x <= max,
            Limit::AtLeast { min } => x >= min,
            Limit::Within { min, max } => (min..=max).contains(&x),
        }
    }
}

impl fmt::Display for Limit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Limit::AtMost { max } => write!(f, "<= {max:e}"),
            Limit::AtLeast { min } => write!(f, ">= {min:e}"),
            Limit::Within { min, max } => write!(f, "in [{min}, {max}]"),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: Limit,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, limit: Limit) -> Self {
        Check {
            name: name.into(),
            value,
            limit,
            passed: limit.admits(value),
        }
    }

    fn at_most(name: impl Into<String>, value: f64, max: f64) -> Self {
        Check::new(name, value, Limit::AtMost { max })
    }

    fn failures(name: impl Into<String>, count: usize) -> Self {
        Check::new(name, count as f64, Limit::AtMost { max: 0.0 })
    }

    fn slope(name: impl Into<String>, slope: Option<f64>) -> Self {
        Check::new(name, slope.unwrap_or(f64::NAN), Limit::Within { min: -1.2, max: -0.8 })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ItemReport {
    pub item: usize,
    pub title: &'static str,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl ItemReport {
    fn new(item: usize, seed: u64, checks: Vec<Check>) -> Self {
        ItemReport {
            item,
            title: ITEMS[item - 1],
            seed,
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    /// One summary line, followed by the failing checks if any.
    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let mut out = format!(
            "criterion {:>2} {verdict}  {} ({} check{})",
            self.item,
            self.title,
            self.checks.len(),
            if self.checks.len() == 1 { "" } else { "s" }
        );
        for c in self.checks.iter().filter(|c| !c.passed) {
            out.push_str(&format!("\n    failed: {} = {:e}, needs {}", c.name, c.value, c.limit));
        }
        out
    }
}

/// Runs acceptance item `item` (1..=11).
pub fn run_item(item: usize, seed: u64) -> Result<ItemReport> {
    let checks = match item {
        1 => partitions_suite(seed)?,
        2 => species_table()?,
        3 => round_trip(seed)?,
        4 => evolution(seed)?,
        5 => monotone_powers(seed)?,
        6 => flow_suite(seed)?,
        7 => series_comparison(seed)?,
        8 => sigma_recovery(seed)?,
        9 => bp_harness(seed)?,
        10 => divisor_and_perturbation(seed)?,
        11 => cp_positivity(seed)?,
        _ => return Err(Error::size("acceptance item", item, 1, ITEMS.len())),
    };
    Ok(ItemReport::new(item, seed, checks))
}

fn catalan(n: u64) -> u64 {
    // C_n = binom(2n, n) / (n + 1), built up exactly
    (1..=n).fold(1u64, |c, i| c * 2 * (2 * i - 1) / (i + 1))
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

/// Uniform non-crossing partition of `{1..n}` with `n` uniform in `1..=max_n`.
fn random_nc(r: &mut SeededRng, max_n: usize) -> Result<Partition> {
    let n = r.gen_range(1..=max_n);
    let all = enumerate(n, PartitionClass::NonCrossing)?;
    Ok(all[r.gen_range(0..all.len())].clone())
}

/// Blocks of `s` whose first element is flagged.
fn flagged_blocks(s: &Partition, flag: &[bool]) -> (Vec<usize>, Vec<usize>) {
    (0..s.num_blocks()).partition(|&i| flag[s.blocks()[i][0] - 1])
}

/// `S = U (chain) + V` with `V` inside the innermost block of the chain.
fn nested_split(r: &mut SeededRng) -> Result<(Partition, Vec<usize>, Vec<usize>)> {
    let mut s = random_nc(r, 4)?;
    let mut in_u = vec![false; s.n()];
    for _ in 0..r.gen_range(1..=3) {
        let size = r.gen_range(2..=3);
        let gap = r.gen_range(1..size);
        s = Partition::full(size).insert(gap, &s)?;
        in_u = [vec![true; gap], in_u, vec![true; size - gap]].concat();
    }
    let (u, v) = flagged_blocks(&s, &in_u);
    Ok((s, u, v))
}

/// `S = U + V` with `V` placed in an outer gap of `U`, so the two are unrelated.
fn unrelated_split(r: &mut SeededRng) -> Result<(Partition, Vec<usize>, Vec<usize>)> {
    let u = random_nc(r, 5)?;
    let v = random_nc(r, 4)?;
    let gaps: Vec<usize> = (0..=u.n())
        .filter(|&p| u.blocks().iter().all(|b| !(b[0] <= p && p < *b.last().unwrap())))
        .collect();
    let pos = gaps[r.gen_range(0..gaps.len())];
    let s = u.insert(pos, &v)?;
    let flag: Vec<bool> = (1..=s.n()).map(|x| x <= pos || x > pos + v.n()).collect();
    let (ub, vb) = flagged_blocks(&s, &flag);
    Ok((s, ub, vb))
}

fn partitions_suite(seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let bad = (1..=10)
        .filter(|&n| enumerate(n, PartitionClass::NonCrossing).map(|v| v.len() as u64).ok() != Some(catalan(n as u64)))
        .count();
    checks.push(Check::failures("|NC(n)| != Catalan(n), n <= 10", bad));

    let mut bad = 0;
    let mut total = 0;
    for n in 1..=8 {
        for p in enumerate(n, PartitionClass::NonCrossing)? {
            total += 1;
            if order_count(&p)? != order_count_bruteforce(&p)? {
                bad += 1;
            }
        }
    }
    checks.push(Check::failures(format!("order_count != brute force on {total} NC partitions"), bad));

    let mut r = split(seed, 1);
    let mut bad = 0;
    for _ in 0..100 {
        let (s, u, v) = nested_split(&mut r)?;
        let related = u.iter().all(|&a| v.iter().all(|&b| s.covers(a, b)));
        let o = order_count_bruteforce(&s)?;
        let prod = order_count(&s.restrict(&u)?)? * order_count(&s.restrict(&v)?)?;
        if !related || o != prod || o != order_count(&s)? {
            bad += 1;
        }
    }
    checks.push(Check::failures("o(S) != o(U) o(V) on 100 nested splits", bad));

    let mut bad = 0;
    for _ in 0..100 {
        let (s, u, v) = unrelated_split(&mut r)?;
        let unrelated = u.iter().all(|&a| v.iter().all(|&b| !s.covers(a, b) && !s.covers(b, a)));
        let os = order_count_bruteforce(&s)? as u128;
        let ou = order_count(&s.restrict(&u)?)? as u128;
        let ov = order_count(&s.restrict(&v)?)? as u128;
        let lhs = os * factorial(u.len()) * factorial(v.len());
        let rhs = ou * ov * factorial(s.num_blocks());
        if !unrelated || lhs != rhs {
            bad += 1;
        }
    }
    checks.push(Check::failures("o(S)/|S|! != o(U)/|U|! o(V)/|V|! on 100 unrelated splits", bad));
    Ok(checks)
}

fn scalar_cumulants(species: Species, vals: &[f64]) -> Result<CumulantTensor> {
    let maps = vals
        .iter()
        .enumerate()
        .map(|(i, &v)| Multilinear::from_data(1, i, vec![C64::new(v, 0.0)]))
        .collect();
    CumulantTensor::new(species, 1, maps)
}

const M4_TABLE: [(Species, f64); 4] = [
    (Species::Classical, 3.0),
    (Species::Free, 2.0),
    (Species::Boolean, 1.0),
    (Species::Monotone, 1.5),
];

fn species_table() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (species, want) in M4_TABLE {
        let m = cumulants_to_moments(&scalar_cumulants(species, &[0.0, 1.0, 0.0, 0.0])?)?;
        let got = m.map(4).data()[0];
        checks.push(Check::at_most(format!("{species} |m_4 - {want}|"), (got - want).norm(), 1e-12));
    }
    Ok(checks)
}

fn round_trip(seed: u64) -> Result<Vec<Check>> {
    let mut worst = [0.0f64; 4];
    for s in 0..50 {
        let mut r = split(seed, 100 + s);
        let d = 1 + (s as usize % 2);
        let m = random_tensor(&mut r, d, 6);
        for (i, species) in Species::ALL.into_iter().enumerate() {
            if species == Species::Classical && d > 1 {
                continue;
            }
            let back = cumulants_to_moments(&moments_to_cumulants(&m, species)?)?;
            worst[i] = worst[i].max(back.max_abs_diff(&m));
        }
    }
    Ok(Species::ALL
        .into_iter()
        .zip(worst)
        .map(|(sp, w)| Check::at_most(format!("{sp} max round-trip error over 50 seeds"), w, 1e-10))
        .collect())
}

fn evolution(seed: u64) -> Result<Vec<Check>> {
    let mut worst: f64 = 0.0;
    for s in 0..20 {
        let mut r = split(seed, 200 + s);
        let d = 1 + (s as usize % 2);
        let order = 3 + (s as usize % 3);
        let m = moments_of(&random_distribution(&mut r, d, 2, 1.0), order)?;
        worst = worst.max(evolution_check(&m, &[0.3, 1.0, 2.0])?);
    }
    Ok(vec![Check::at_most("max evolution residual, 20 tensors, t in {0.3, 1, 2}", worst, 1e-10)])
}

fn monotone_powers(seed: u64) -> Result<Vec<Check>> {
    let mut iterate: f64 = 0.0;
    let mut root: f64 = 0.0;
    for s in 0..4 {
        let mut r = split(seed, 300 + s);
        let d = 1 + (s as usize % 2);
        let m = moments_of(&random_distribution(&mut r, d, 2, 0.5), 6)?;
        let id = CMatrix::identity(d * d);
        let mut iterated = m.clone();
        for k in 2..=8 {
            iterated = monotone_convolve(&iterated, &m)?;
            let power = power_eta(&m, &id.scale_re(k as f64))?;
            iterate = iterate.max(power.max_abs_diff(&iterated));
        }
        let half = power_eta(&m, &id.scale_re(0.5))?;
        root = root.max(monotone_convolve(&half, &half)?.max_abs_diff(&m));
    }
    Ok(vec![
        Check::at_most("power_eta(k id) vs k-fold monotone convolution, k <= 8", iterate, 1e-9),
        Check::at_most("square-root round trip", root, 1e-10),
    ])
}

fn random_generator(r: &mut SeededRng, d: usize) -> Result<Generator> {
    Generator::new(random_hermitian(r, d), random_cp(r, d, 2, 1.0, 1.0))
}

fn arcsine_generator() -> Result<Generator> {
    let one = C64::new(1.0, 0.0);
    Generator::new(CMatrix::zeros(1), RealizedCP::new(1, 1, CMatrix::zeros(1), vec![vec![one]])?)
}

fn shifted_point(r: &mut SeededRng, d: usize, im: f64) -> Result<HalfPlanePoint> {
    HalfPlanePoint::new(&random_hermitian(r, d) + &CMatrix::scalar(d, C64::new(0.0, im)), d)
}

/// Picard grid for the Picard/Runge-Kutta comparison.
pub const PICARD_GRID_STEPS: usize = 2048;

fn flow_suite(seed: u64) -> Result<Vec<Check>> {
    let mut r = split(seed, 400);
    let mut trajectories: Vec<FlowState> = Vec::new();

    let mut linear: f64 = 0.0;
    for d in [1, 2] {
        let gamma = random_hermitian(&mut r, d);
        let g = Generator::new(gamma.clone(), RealizedCP::zero(d))?;
        let b = shifted_point(&mut r, d, 1.0)?;
        let f = rk4_flow(&g, &b, 2.0, 0.1)?;
        for (t, v) in f.times.iter().zip(&f.values) {
            linear = linear.max(v.max_abs_diff(&(b.value() - &gamma.scale_re(*t))));
        }
        let p = picard_flow(&g, &b, 2.0, 32, 10, 1e-13)?;
        for (t, v) in p.times.iter().zip(&p.values) {
            linear = linear.max(v.max_abs_diff(&(b.value() - &gamma.scale_re(*t))));
        }
        trajectories.extend([f, p]);
    }

    let arcsine = arcsine_generator()?;
    let i = HalfPlanePoint::scalar_imag(1.0, 1, 1)?;
    let f = rk4_flow(&arcsine, &i, 1.0, 0.01)?;
    let closed = [0.25, 0.5, 1.0]
        .iter()
        .map(|&t| (f.at(t).get(0, 0) - arcsine_flow_exact(C64::new(0.0, 1.0), t)).norm())
        .fold(0.0, f64::max);
    trajectories.push(f);

    let mut semigroup: f64 = 0.0;
    let mut picard_gap: f64 = 0.0;
    let mut gens = vec![arcsine];
    for d in [1, 2, 2] {
        gens.push(random_generator(&mut r, d)?);
    }
    for g in &gens {
        let b = shifted_point(&mut r, g.d(), 1.0)?;
        semigroup = semigroup.max(semigroup_defect(g, b.value(), 0.5, 0.25, 0.01)?);
        let rk = rk4_flow(g, &b, 1.0, 0.01)?;
        let p = picard_flow(g, &b, 1.0, PICARD_GRID_STEPS, 200, 1e-13)?;
        picard_gap = picard_gap.max(rk.last().dist(p.last()));
        trajectories.extend([rk, p]);
    }
    let not_monotone = trajectories.iter().filter(|f| !f.im_monotone()).count();

    Ok(vec![
        Check::at_most("sigma = 0 flow vs b - t gamma", linear, 1e-12),
        Check::at_most("arcsine flow vs sqrt(b^2 - 2t), t in {0.25, 0.5, 1}", closed, 1e-8),
        Check::at_most("semigroup defect F_s o F_t vs F_{s+t}", semigroup, 1e-6),
        Check::failures(format!("trajectories losing Im-monotonicity (of {})", trajectories.len()), not_monotone),
        Check::at_most("Picard vs Runge-Kutta at t = 1", picard_gap, 1e-6),
    ])
}

fn series_comparison(seed: u64) -> Result<Vec<Check>> {
    let mut outside = 0;
    let mut ratio: f64 = 0.0;
    for s in 0..20 {
        let mut r = split(seed, 500 + s);
        let d = 1 + (s as usize % 2);
        let g = random_generator(&mut r, d)?;
        let m = make_nu(g.gamma(), g.sigma(), Species::Monotone, 6)?;
        let b = HalfPlanePoint::scalar_imag(20.0, d, 1)?;
        let cmp = flow_vs_series(&g, &m, &b, 1.0, 0.05)?;
        if !cmp.within_bound() {
            outside += 1;
        }
        ratio = ratio.max(cmp.residual / cmp.bound);
    }
    Ok(vec![
        Check::failures("residuals above the geometric tail bound (of 20)", outside),
        Check::at_most("max residual / bound", ratio, 1.0),
    ])
}

fn sigma_recovery(seed: u64) -> Result<Vec<Check>> {
    let mut worst: f64 = 0.0;
    for s in 0..20 {
        let mut r = split(seed, 600 + s);
        let d = 1 + (s as usize % 2);
        let sigma = random_cp(&mut r, d, 2, 1.0, 1.0);
        let radius = 1.0 / sigma.bound();
        for len in 1..=4 {
            let word: Vec<CMatrix> = (0..len).map(|_| random_matrix(&mut r, d)).collect();
            let got = recover_sigma(|b| cp_h_eval(&sigma, b), &word, d, radius)?;
            worst = worst.max(got.max_abs_diff(&sigma.word(&word)?));
        }
    }
    Ok(vec![Check::at_most("max recovery error, 20 CP maps, words of length <= 4", worst, 1e-8)])
}

/// The schedule used by the harness checks.
pub const BP_SCHEDULE: [usize; 6] = [2, 4, 8, 16, 32, 64];

/// Matrix central-limit array at base dimension `d` with random data.
pub fn random_clt_array(r: &mut SeededRng, d: usize, order: usize) -> Result<TriangularArray> {
    let gamma = random_hermitian(r, d).scale_re(0.5);
    let y = random_hermitian(r, 2 * d).scale_re(0.7);
    let v = random_unit_vector(r, 2);
    TriangularArray::clt(gamma, y, v, BP_SCHEDULE.to_vec(), order)
}

fn bp_harness(seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let mut r = split(seed, 700);
    for d in [1, 2] {
        let arr = random_clt_array(&mut r, d, 4)?;
        let rep = run_bp(&arr, &[Species::Free, Species::Boolean, Species::Monotone])?;
        for s in &rep.species {
            checks.push(Check::slope(format!("{} distance slope, d = {d}", s.species), s.slope));
        }
    }

    let seed_law = ScalarSeed::Clt;
    let (gamma, sigma) = seed_law.limit();
    for (species, want) in M4_TABLE {
        let m4 = |k: usize| -> Result<C64> {
            Ok(species_power(&seed_law.entry(k, 4), k, species)?.map(4).data()[0])
        };
        let extrapolated = richardson(m4(64)?.re, m4(32)?.re);
        checks.push(Check::at_most(
            format!("{species} scalar CLT m_4 extrapolated from k = 32, 64"),
            (extrapolated - want).abs(),
            1e-3,
        ));
        let c = moments_to_cumulants(&seed_law.entry(64, 4), species)?;
        let k_c2 = c.map(2).data()[0] * 64.0;
        let limit = cumulants_to_moments(&CumulantTensor::from_cp(&gamma, &sigma, species, 4)?)?;
        let cumulant_level = (k_c2 - 1.0).norm().max((limit.map(4).data()[0] - want).norm());
        checks.push(Check::at_most(
            format!("{species} cumulant level: k c_2 at k = 64 and limit m_4"),
            cumulant_level,
            1e-10,
        ));
    }
    Ok(checks)
}

fn divisor_and_perturbation(seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let mut r = split(seed, 800);
    let ks = [2, 4, 8, 16, 32];
    for (name, g) in [("arcsine", arcsine_generator()?), ("random d = 2", random_generator(&mut r, 2)?)] {
        let rep = divisor_convergence_check(&g, &ks, &sample_grid(g.d()), 0.02)?;
        checks.push(Check::slope(format!("divisor distance slope, {name}"), rep.slope));
    }

    let mut violations = 0;
    for s in 0..50 {
        let mut r = split(seed, 900 + s);
        let d = 1 + (s as usize % 2);
        let g1 = random_generator(&mut r, d)?;
        let eps = 1e-3 * r.gen_range(1.0..10.0);
        let sigma = g1.sigma();
        let a = sigma.a() + &random_hermitian(&mut r, sigma.a().dim()).scale_re(eps);
        let perturbed = RealizedCP::new(d, sigma.k(), a, sigma.v_rows())?.scale_v(1.0 + eps);
        let gamma = g1.gamma() + &random_hermitian(&mut r, d).scale_re(eps);
        let g2 = Generator::new(gamma, perturbed)?;
        if !generator_perturbation_check(&g1, &g2, &sample_grid(d), 0.05)?.holds {
            violations += 1;
        }
    }
    checks.push(Check::failures("perturbation bound violations (of 50)", violations));
    Ok(checks)
}

fn cp_positivity(seed: u64) -> Result<Vec<Check>> {
    let mut tensors: Vec<MomentTensor> = Vec::new();
    for s in 0..10 {
        let mut r = split(seed, 1000 + s);
        let d = 1 + (s as usize % 2);
        let gamma = random_hermitian(&mut r, d);
        let sigma = random_cp(&mut r, d, 2, 1.0, 1.0);
        for species in [Species::Free, Species::Boolean, Species::Monotone] {
            tensors.push(make_nu(&gamma, &sigma, species, 6)?);
        }
    }
    let made = tensors.len();
    for s in 0..20 {
        let mut r = split(seed, 1100 + s);
        let d = 1 + (s as usize % 2);
        let k = 1 + (s as usize % 3);
        tensors.push(moments_of(&random_distribution(&mut r, d, k, 1.0), 6)?);
    }
    let mut rr = split(seed, 1200);
    for d in [1, 2] {
        let arr = random_clt_array(&mut rr, d, 6)?;
        for i in 0..arr.k_schedule.len() {
            tensors.push(arr.entry(i)?);
        }
    }
    let mut min_eig = f64::INFINITY;
    for t in &tensors {
        min_eig = min_eig.min(cp_check(t, 3)?.min_eigenvalue);
    }
    Ok(vec![Check::new(
        format!(
            "smallest Gram eigenvalue over {made} make_nu outputs and {} realized moment tensors",
            tensors.len() - made
        ),
        min_eig,
        Limit::AtLeast { min: -1e-8 },
    )])
}
