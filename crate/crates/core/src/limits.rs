//! Triangular-array limit theorems: `k_i`-fold convolutions of `mu_i` in each
//! species compared with the matching `nu^{gamma,sigma}`.
//!
//! Convergence is measured on moments of compactly supported laws, not weakly.

use serde::Serialize;

use crate::cumulants::{cumulants_to_moments, make_nu, moments_to_cumulants, monotone_power, CumulantTensor, Species};
use crate::dist::{moments_of, MomentTensor, RealizedCP, RealizedDistribution, State};
use crate::error::{Error, Result};
use crate::matalg::{CMatrix, C64};
use crate::ncseries::{monotone_convolve, voiculescu_series};
use crate::tensor::Multilinear;

/// Budget of [`run_bp`]: truncation order, matrix size, largest `k`.
pub const MAX_BP_ORDER: usize = 6;
pub const MAX_BP_DIM: usize = 2;
pub const MAX_BP_K: usize = 64;

/// Largest `k` for which the monotone power is checked against iterated convolution.
pub const MAX_ITERATE_CHECK: usize = 8;

/// Agreement required between `mu^{|>k}` and `k` iterated monotone convolutions.
pub const ITERATE_TOL: f64 = 1e-9;

/// Distances at or below this are treated as exact zeros when fitting slopes.
pub const EXACT_TOL: f64 = 1e-13;

pub const REPORT_NOTE: &str = "moment convergence of compactly supported laws (not weak convergence)";

/// Least-squares slope of `log y` against `log x`; `None` with fewer than two
/// points or any non-positive value.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|&v| !(v > 0.0 && v.is_finite())) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `2 f(k) - f(k/2)`: removes the `1/k` term of an expansion in `1/k`.
pub fn richardson(at_k: f64, at_half_k: f64) -> f64 {
    2.0 * at_k - at_half_k
}

/// How the array `mu_i` is built.
#[derive(Clone, Debug)]
pub enum ArrayRule {
    /// `mu_i = nu_(+)^{gamma/k_i, sigma/k_i}` (Boolean-type seed).
    BooleanSeed,
    /// Matrix central-limit array: `mu_i` is the law of `gamma/k_i + (Y (x) s)/sqrt(k_i)`
    /// under the state `v (x) (1, 1)/sqrt 2`, with `s = diag(1, -1)`; see [`TriangularArray::clt`].
    Clt { y: CMatrix, v: Vec<C64> },
    /// One tensor per entry of the schedule.
    Custom(Vec<MomentTensor>),
}

#[derive(Clone, Debug)]
pub struct TriangularArray {
    pub gamma: CMatrix,
    pub sigma: RealizedCP,
    pub k_schedule: Vec<usize>,
    pub rule: ArrayRule,
    pub order: usize,
}

impl TriangularArray {
    pub fn new(gamma: CMatrix, sigma: RealizedCP, k_schedule: Vec<usize>, rule: ArrayRule, order: usize) -> Result<Self> {
        let d = gamma.dim();
        if sigma.d() != d {
            return Err(Error::dim(d, sigma.d()));
        }
        if d > MAX_BP_DIM {
            return Err(Error::size("d", d, 1, MAX_BP_DIM));
        }
        if order == 0 || order > MAX_BP_ORDER {
            return Err(Error::size("truncation order", order, 1, MAX_BP_ORDER));
        }
        if k_schedule.is_empty() {
            return Err(Error::Invalid("empty k schedule".into()));
        }
        for &k in &k_schedule {
            if k == 0 || k > MAX_BP_K {
                return Err(Error::size("k", k, 1, MAX_BP_K));
            }
        }
        if let ArrayRule::Custom(list) = &rule {
            if list.len() != k_schedule.len() {
                return Err(Error::dim(k_schedule.len(), list.len()));
            }
            for m in list {
                if m.d() != d || m.order() != order {
                    return Err(Error::Invalid("custom array tensors must match d and N".into()));
                }
            }
        }
        Ok(TriangularArray {
            gamma,
            sigma,
            k_schedule,
            rule,
            order,
        })
    }

    /// Central-limit array for a Hermitian `y` on `C^d (x) C^k` and a unit vector `v` in `C^k`.
    /// Odd moments of `Y (x) s` vanish, so `k_i mu_i` tends to the law with mean `gamma`
    /// and `sigma(b) = E[Y (b (x) 1) Y]`, i.e. `A = 0` and `V = Y (1_d (x) v)`, at rate `1/k_i`.
    pub fn clt(gamma: CMatrix, y: CMatrix, v: Vec<C64>, k_schedule: Vec<usize>, order: usize) -> Result<Self> {
        let d = gamma.dim();
        let k = v.len();
        // validates y, v and the model size once, at k_i = 1
        RealizedDistribution::new(d, 2 * k, y.kron(&CMatrix::identity(2)), State::Vector(
            v.iter().flat_map(|&z| [z * std::f64::consts::FRAC_1_SQRT_2; 2]).collect(),
        ))?;
        let vv: Vec<Vec<C64>> = (0..d * k)
            .map(|row| {
                (0..d)
                    .map(|col| (0..k).map(|b| y.get(row, col * k + b) * v[b]).sum())
                    .collect()
            })
            .collect();
        let sigma = RealizedCP::new(d, k, CMatrix::zeros(d * k), vv)?;
        TriangularArray::new(gamma, sigma, k_schedule, ArrayRule::Clt { y, v }, order)
    }

    /// `mu_i` for schedule entry `i`.
    pub fn entry(&self, i: usize) -> Result<MomentTensor> {
        let k = self.k_schedule[i] as f64;
        match &self.rule {
            ArrayRule::BooleanSeed => make_nu(
                &self.gamma.scale_re(1.0 / k),
                &self.sigma.scale(1.0 / k),
                Species::Boolean,
                self.order,
            ),
            ArrayRule::Clt { y, v } => {
                let d = self.gamma.dim();
                let sign = CMatrix::diag(&[C64::new(1.0, 0.0), C64::new(-1.0, 0.0)]);
                let model_k = v.len() * 2;
                let a = &self.gamma.kron(&CMatrix::identity(model_k)).scale_re(1.0 / k)
                    + &y.kron(&sign).scale_re(1.0 / k.sqrt());
                let h = std::f64::consts::FRAC_1_SQRT_2;
                let state: Vec<C64> = v.iter().flat_map(|&z| [z * h, z * h]).collect();
                let r = RealizedDistribution::new(d, model_k, a.real_part(), State::Vector(state))?;
                moments_of(&r, self.order)
            }
            ArrayRule::Custom(list) => Ok(list[i].clone()),
        }
    }

    /// Limit law of the given species.
    pub fn target(&self, species: Species) -> Result<MomentTensor> {
        match species {
            Species::Classical => {
                cumulants_to_moments(&CumulantTensor::from_cp(&self.gamma, &self.sigma, species, self.order)?)
            }
            _ => make_nu(&self.gamma, &self.sigma, species, self.order),
        }
    }
}

/// `mu^{*k}` in the given species; the monotone power is checked against
/// iterated convolution for `k <= MAX_ITERATE_CHECK`.
pub fn species_power(m: &MomentTensor, k: usize, species: Species) -> Result<MomentTensor> {
    match species {
        Species::Monotone => {
            let fast = monotone_power(m, k as f64)?;
            if k <= MAX_ITERATE_CHECK {
                let mut it = m.clone();
                for _ in 1..k {
                    it = monotone_convolve(&it, m)?;
                }
                let gap = it.max_abs_diff(&fast);
                if !(gap <= ITERATE_TOL) {
                    return Err(Error::Numerical(format!(
                        "monotone power {k} differs from iterated convolution by {gap:e}"
                    )));
                }
            }
            Ok(fast)
        }
        _ => {
            let c = moments_to_cumulants(m, species)?;
            cumulants_to_moments(&c.scale_re(k as f64))
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportRow {
    pub species: Species,
    pub k: usize,
    pub order: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpeciesSummary {
    pub species: Species,
    /// Max over orders, per schedule entry.
    pub distance: Vec<f64>,
    /// `None` when the distances are exact zeros or cannot be fitted.
    pub slope: Option<f64>,
    pub exact: bool,
    pub target_cp: bool,
}

/// `k mu_i[X b_1 .. X]` against the limit cumulant functional.
#[derive(Clone, Debug, Serialize)]
pub struct ScalingRow {
    pub k: usize,
    /// `max_n` distance of `k m_n(mu_i)` to `gamma` (n = 1) or `sigma[b_1 X .. X b_{n-1}]`.
    pub distance: f64,
    /// Same distance restricted to `n <= 2` (the mean and variance surrogate).
    pub second_order: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub note: &'static str,
    pub d: usize,
    pub order: usize,
    pub schedule: Vec<usize>,
    pub rows: Vec<ReportRow>,
    pub species: Vec<SpeciesSummary>,
    pub scaling: Vec<ScalingRow>,
}

impl ConvergenceReport {
    pub fn summary(&self, species: Species) -> Option<&SpeciesSummary> {
        self.species.iter().find(|s| s.species == species)
    }

    /// `species,k,order,distance,slope` with full double precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("species,k,order,distance,slope\n");
        for r in &self.rows {
            let slope = self
                .summary(r.species)
                .and_then(|s| s.slope)
                .map_or_else(String::new, |s| format!("{s:.16e}"));
            out.push_str(&format!(
                "{},{},{},{:.16e},{}\n",
                r.species, r.k, r.order, r.distance, slope
            ));
        }
        out
    }
}

fn scaling_row(arr: &TriangularArray, k: usize, mu: &MomentTensor, limit: &CumulantTensor) -> ScalingRow {
    let per_order: Vec<f64> = (1..=arr.order)
        .map(|n| mu.map(n).scale_re(k as f64).sub(limit.map(n)).max_basis_op_norm())
        .collect();
    ScalingRow {
        k,
        distance: per_order.iter().copied().fold(0.0, f64::max),
        second_order: per_order.iter().take(2).copied().fold(0.0, f64::max),
    }
}

pub fn run_bp(arr: &TriangularArray, species_set: &[Species]) -> Result<ConvergenceReport> {
    let d = arr.gamma.dim();
    if species_set.contains(&Species::Classical) && d != 1 {
        return Err(Error::Unsupported("classical species needs d = 1".into()));
    }
    let entries = (0..arr.k_schedule.len())
        .map(|i| arr.entry(i))
        .collect::<Result<Vec<_>>>()?;
    let limit = CumulantTensor::from_cp(&arr.gamma, &arr.sigma, Species::Free, arr.order)?;
    let scaling = arr
        .k_schedule
        .iter()
        .zip(&entries)
        .map(|(&k, mu)| scaling_row(arr, k, mu, &limit))
        .collect();
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let ks: Vec<f64> = arr.k_schedule.iter().map(|&k| k as f64).collect();
    for &species in species_set {
        let target = arr.target(species)?;
        let target_cp = crate::dist::cp_check(&target, arr.order / 2)?.positive;
        let mut maxima = Vec::new();
        for (&k, mu) in arr.k_schedule.iter().zip(&entries) {
            let power = species_power(mu, k, species)?;
            let dists = power.distances(&target);
            for (n, &dist) in dists.iter().enumerate() {
                rows.push(ReportRow {
                    species,
                    k,
                    order: n + 1,
                    distance: dist,
                });
            }
            maxima.push(dists.iter().copied().fold(0.0, f64::max));
        }
        let exact = maxima.iter().all(|&x| x <= EXACT_TOL);
        summaries.push(SpeciesSummary {
            species,
            slope: if exact { None } else { loglog_slope(&ks, &maxima) },
            distance: maxima,
            exact,
            target_cp,
        });
    }
    Ok(ConvergenceReport {
        note: REPORT_NOTE,
        d,
        order: arr.order,
        schedule: arr.k_schedule.clone(),
        rows,
        species: summaries,
        scaling,
    })
}

/// Scalar seeds for [`run_scalar_bp`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScalarSeed {
    /// `(delta_{1/sqrt k} + delta_{-1/sqrt k}) / 2`; limit `gamma = 0`, `sigma = delta_0`.
    Clt,
    /// `delta_{gamma/k}`; limit `delta_gamma`.
    Shift(f64),
    /// `(1 - 1/k) delta_0 + (1/k) delta_1`; limit `gamma = 1`, `sigma = delta_1`.
    Poisson,
}

fn scalar_moments(vals: impl Iterator<Item = f64>) -> MomentTensor {
    let maps = vals
        .enumerate()
        .map(|(i, v)| Multilinear::from_data(1, i, vec![C64::new(v, 0.0)]))
        .collect();
    MomentTensor::new(1, maps).expect("scalar tensor")
}

impl ScalarSeed {
    pub fn entry(self, k: usize, order: usize) -> MomentTensor {
        let kf = k as f64;
        match self {
            ScalarSeed::Clt => scalar_moments((1..=order).map(|n| {
                if n % 2 == 0 {
                    kf.powf(-(n as f64) / 2.0)
                } else {
                    0.0
                }
            })),
            ScalarSeed::Shift(g) => scalar_moments((1..=order).map(|n| (g / kf).powi(n as i32))),
            ScalarSeed::Poisson => scalar_moments((1..=order).map(|_| 1.0 / kf)),
        }
    }

    pub fn limit(self) -> (CMatrix, RealizedCP) {
        let one = C64::new(1.0, 0.0);
        match self {
            ScalarSeed::Clt => (
                CMatrix::zeros(1),
                RealizedCP::new(1, 1, CMatrix::zeros(1), vec![vec![one]]).expect("1x1 model"),
            ),
            ScalarSeed::Shift(g) => (CMatrix::scalar(1, C64::new(g, 0.0)), RealizedCP::zero(1)),
            ScalarSeed::Poisson => (
                CMatrix::scalar(1, one),
                RealizedCP::new(1, 1, CMatrix::scalar(1, one), vec![vec![one]]).expect("1x1 model"),
            ),
        }
    }
}

/// [`run_bp`] at `d = 1` on a scalar seed, optionally including the classical species.
pub fn run_scalar_bp(
    seed: ScalarSeed,
    classical_included: bool,
    schedule: &[usize],
    order: usize,
) -> Result<ConvergenceReport> {
    let (gamma, sigma) = seed.limit();
    let list = schedule.iter().map(|&k| seed.entry(k, order)).collect();
    let arr = TriangularArray::new(gamma, sigma, schedule.to_vec(), ArrayRule::Custom(list), order)?;
    let mut species = Vec::new();
    if classical_included {
        species.push(Species::Classical);
    }
    species.extend([Species::Free, Species::Boolean, Species::Monotone]);
    run_bp(&arr, &species)
}

/// Max pairwise distance between `k m^{mu}`, `k B^{mu}`, `k R^{mu}` and `k K^{mu}`
/// (moments, Boolean, free and monotone cumulants), over orders and basis tuples.
pub fn scaling_lemma_gap(mu: &MomentTensor, k: usize) -> Result<f64> {
    let kf = k as f64;
    // the degree-j R-series coefficient is the free cumulant c_{j+1}
    let r = voiculescu_series(mu)?;
    let funcs: Vec<Vec<Multilinear>> = vec![
        mu.maps().to_vec(),
        moments_to_cumulants(mu, Species::Boolean)?.maps().to_vec(),
        r.coeffs().to_vec(),
        moments_to_cumulants(mu, Species::Monotone)?.maps().to_vec(),
    ];
    let mut worst: f64 = 0.0;
    for i in 0..funcs.len() {
        for j in i + 1..funcs.len() {
            for (a, b) in funcs[i].iter().zip(&funcs[j]) {
                worst = worst.max(a.sub(b).scale_re(kf).max_basis_op_norm());
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_hermitian, rng};

    #[test]
    fn slope_fit() {
        let xs = [2.0, 4.0, 8.0, 16.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 / x).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() + 1.0).abs() < 1e-12);
        assert!(loglog_slope(&xs, &[1.0, 0.0, 1.0, 1.0]).is_none());
        assert!(loglog_slope(&[2.0], &[1.0]).is_none());
        assert_eq!(richardson(3.0 - 2.0 / 64.0, 3.0 - 2.0 / 32.0), 3.0);
    }

    #[test]
    fn zero_sigma_is_exact() {
        let mut g = rng(51);
        let gamma = random_hermitian(&mut g, 2);
        let arr = TriangularArray::new(gamma, RealizedCP::zero(2), vec![2, 4, 8], ArrayRule::BooleanSeed, 4).unwrap();
        let rep = run_bp(&arr, &[Species::Free, Species::Boolean, Species::Monotone]).unwrap();
        for s in &rep.species {
            assert!(s.exact, "{:?}", s.species);
            assert!(s.slope.is_none());
        }
    }

    #[test]
    fn unit_mass_targets() {
        let (gamma, sigma) = ScalarSeed::Clt.limit();
        let arr = TriangularArray::new(gamma, sigma, vec![2, 4, 8, 16, 32, 64], ArrayRule::BooleanSeed, 4).unwrap();
        for (sp, m4) in [(Species::Monotone, 1.5), (Species::Free, 2.0), (Species::Boolean, 1.0)] {
            let t = arr.target(sp).unwrap();
            assert!((t.map(4).data()[0].re - m4).abs() < 1e-12);
        }
        let rep = run_bp(&arr, &[Species::Free, Species::Monotone]).unwrap();
        for s in &rep.species {
            let slope = s.slope.unwrap();
            assert!((-1.2..=-0.8).contains(&slope), "{:?} {slope}", s.species);
            assert!(s.target_cp);
        }
        let boolean = run_bp(&arr, &[Species::Boolean]).unwrap();
        assert!(boolean.species[0].exact);
    }

    #[test]
    fn clt_array_limit_and_slopes_d2() {
        let mut g = rng(52);
        let gamma = random_hermitian(&mut g, 2).scale_re(0.5);
        let y = random_hermitian(&mut g, 4).scale_re(0.7);
        let v = crate::random::random_unit_vector(&mut g, 2);
        let arr = TriangularArray::clt(gamma, y.clone(), v.clone(), vec![2, 4, 8, 16, 32, 64], 4).unwrap();
        // sigma(b) = E[Y (b (x) 1) Y] under the vector state
        let b = crate::random::random_matrix(&mut g, 2);
        let lifted = &(&y * &b.kron(&CMatrix::identity(2))) * &y;
        let state = State::Vector(v);
        let want = crate::dist::partial_state(&lifted, 2, 2, &state);
        assert!(arr.sigma.word(&[b]).unwrap().max_abs_diff(&want) < 1e-12);

        let rep = run_bp(&arr, &[Species::Free, Species::Boolean, Species::Monotone]).unwrap();
        for s in &rep.species {
            let slope = s.slope.unwrap();
            assert!((-1.2..=-0.8).contains(&slope), "{:?} {slope}", s.species);
        }
        let first = rep.scaling.first().unwrap().distance;
        let last = rep.scaling.last().unwrap().distance;
        assert!(last < first);
    }

    #[test]
    fn scalar_clt_table() {
        let rep = run_scalar_bp(ScalarSeed::Clt, true, &[32, 64], 4).unwrap();
        for (sp, m4) in [
            (Species::Classical, 3.0),
            (Species::Free, 2.0),
            (Species::Boolean, 1.0),
            (Species::Monotone, 1.5),
        ] {
            let at: Vec<f64> = [32, 64]
                .iter()
                .map(|&k| {
                    species_power(&ScalarSeed::Clt.entry(k, 4), k, sp).unwrap().map(4).data()[0].re
                })
                .collect();
            assert!((richardson(at[1], at[0]) - m4).abs() < 1e-3, "{sp}");
            assert!(rep.summary(sp).is_some());
        }
        for row in &rep.scaling {
            assert!(row.second_order < 1e-12);
        }
    }

    #[test]
    fn scalar_poisson_and_shift() {
        let rep = run_scalar_bp(ScalarSeed::Poisson, true, &[2, 4, 8, 16], 4).unwrap();
        let target = TriangularArray::new(
            CMatrix::identity(1),
            ScalarSeed::Poisson.limit().1,
            vec![2],
            ArrayRule::BooleanSeed,
            2,
        )
        .unwrap()
        .target(Species::Free)
        .unwrap();
        assert!((target.map(1).data()[0].re - 1.0).abs() < 1e-12);
        assert!((target.map(2).data()[0].re - 2.0).abs() < 1e-12);
        for s in &rep.species {
            assert!(s.slope.map_or(s.exact, |x| x < -0.8), "{:?}", s.species);
        }
        let rep = run_scalar_bp(ScalarSeed::Shift(0.7), true, &[2, 4, 8], 4).unwrap();
        for s in &rep.species {
            assert!(s.distance.iter().all(|&x| x < 1e-12), "{:?}", s.species);
        }
    }

    #[test]
    fn scaling_lemma_gap_decays() {
        let (gamma, sigma) = ScalarSeed::Clt.limit();
        let arr = TriangularArray::new(gamma, sigma, vec![4, 16, 64], ArrayRule::BooleanSeed, 4).unwrap();
        let gaps: Vec<f64> = (0..3)
            .map(|i| scaling_lemma_gap(&arr.entry(i).unwrap(), arr.k_schedule[i]).unwrap())
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2]);
        // C/k decay: the 16-fold larger k shrinks the gap at least 8-fold
        assert!(gaps[2] * 8.0 < gaps[0]);
    }

    #[test]
    fn budget_errors() {
        let (gamma, sigma) = ScalarSeed::Clt.limit();
        assert!(TriangularArray::new(gamma.clone(), sigma.clone(), vec![128], ArrayRule::BooleanSeed, 4).is_err());
        assert!(TriangularArray::new(gamma, sigma, vec![2], ArrayRule::BooleanSeed, 7).is_err());
    }
}
