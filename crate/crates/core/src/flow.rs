//! Generators `Phi = gamma + G_sigma` on the matrix upper half-plane and the
//! composition semigroups `dF_t/dt = -Phi(F_t)` they generate.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::cumulants::monotone_power;
use crate::dist::{partial_state, MomentTensor, RealizedCP, RealizedDistribution};
use crate::error::{Error, Result};
use crate::limits::loglog_slope;
use crate::matalg::{in_upper_half_plane, CMatrix, HalfPlanePoint, C64};
use crate::ncseries::h_series;

/// Slack on the Im-monotonicity and lower half-plane checks.
pub const IM_TOL: f64 = 1e-8;

/// Richardson error target of [`rk4_flow`].
pub const RK4_TOL: f64 = 1e-8;

/// Default Picard grid size.
pub const DEFAULT_GRID_STEPS: usize = 256;

/// Largest number of step halvings when a Runge-Kutta stage leaves the half-plane.
pub const MAX_HALVINGS: usize = 10;

fn amplified_v(v: &DMatrix<C64>, level: usize) -> DMatrix<C64> {
    if level == 1 {
        v.clone()
    } else {
        DMatrix::<C64>::identity(level, level).kronecker(v)
    }
}

fn level_of(b: &CMatrix, d: usize) -> Result<usize> {
    if b.dim() == 0 || !b.dim().is_multiple_of(d) {
        return Err(Error::dim(d, b.dim()));
    }
    Ok(b.dim() / d)
}

/// `G_sigma(b) = (V (x) 1_n)* (b (x) 1_k - 1_n (x) A)^{-1} (V (x) 1_n)`.
pub fn cp_resolvent(sigma: &RealizedCP, b: &CMatrix) -> Result<CMatrix> {
    let level = level_of(b, sigma.d())?;
    let shifted = &sigma.lift(b) - &sigma.a().amplify(level);
    let inv = shifted.inverse()?;
    let v = amplified_v(sigma.v(), level);
    Ok(CMatrix::from_inner(v.adjoint() * inv.inner() * &v))
}

/// `H_sigma(b) = sum_k sigma((b X)^k b) = V* (1 - b~ A~)^{-1} b~ V`, valid for `||b|| ||A|| < 1`.
pub fn cp_h_eval(sigma: &RealizedCP, b: &CMatrix) -> Result<CMatrix> {
    let level = level_of(b, sigma.d())?;
    let bt = sigma.lift(b);
    let radius = sigma.bound() * b.op_norm();
    if radius >= 1.0 {
        return Err(Error::Domain(format!(
            "H_sigma needs ||b|| ||A|| < 1, got {radius}"
        )));
    }
    let at = sigma.a().amplify(level);
    let lhs = &CMatrix::identity(bt.dim()) - &(&bt * &at);
    let core = &lhs.inverse()? * &bt;
    let v = amplified_v(sigma.v(), level);
    Ok(CMatrix::from_inner(v.adjoint() * core.inner() * &v))
}

/// `Phi(b) = gamma + G_sigma(b)`.
#[derive(Clone, Debug)]
pub struct Generator {
    gamma: CMatrix,
    sigma: RealizedCP,
}

impl Generator {
    pub fn new(gamma: CMatrix, sigma: RealizedCP) -> Result<Self> {
        if gamma.dim() != sigma.d() {
            return Err(Error::dim(sigma.d(), gamma.dim()));
        }
        if !gamma.is_hermitian(1e-12) {
            return Err(Error::Invalid("gamma must be Hermitian".into()));
        }
        Ok(Generator { gamma, sigma })
    }

    pub fn gamma(&self) -> &CMatrix {
        &self.gamma
    }

    pub fn sigma(&self) -> &RealizedCP {
        &self.sigma
    }

    pub fn d(&self) -> usize {
        self.gamma.dim()
    }

    /// Generator of `mu^{|> t}`: `(t gamma, t sigma)`.
    pub fn scale(&self, t: f64) -> Self {
        Generator {
            gamma: self.gamma.scale_re(t),
            sigma: self.sigma.scale(t),
        }
    }

    /// `Phi` at any level, wherever the resolvent exists.
    pub fn eval(&self, b: &CMatrix) -> Result<CMatrix> {
        let level = level_of(b, self.d())?;
        let g = self.gamma.amplify(level);
        if self.sigma.is_zero() {
            return Ok(g);
        }
        Ok(&g + &cp_resolvent(&self.sigma, b)?)
    }

    /// `R(b) = Phi(b^{-1}) = gamma + H_sigma(b)`: the continuation to the ball `||b|| < 1/||A||`.
    pub fn r_eval(&self, b: &CMatrix) -> Result<CMatrix> {
        let level = level_of(b, self.d())?;
        Ok(&self.gamma.amplify(level) + &cp_h_eval(&self.sigma, b)?)
    }

    /// Lipschitz constant `||V||^2 / eta^2` of `Phi` on `Im b >= eta`.
    pub fn lipschitz_bound(&self, eta: f64) -> f64 {
        let v = self.sigma.v_norm();
        v * v / (eta * eta)
    }
}

/// `Phi(b)` on the upper half-plane or on the continuation region `||b^{-1}|| ||A|| < 1`.
pub fn phi_eval(g: &Generator, b: &CMatrix) -> Result<CMatrix> {
    if in_upper_half_plane(b, 0.0) {
        return g.eval(b);
    }
    let inv = b.inverse()?;
    if inv.op_norm() * g.sigma.bound() < 1.0 {
        return g.r_eval(&inv);
    }
    Err(Error::Domain(
        "Phi is evaluated on the upper half-plane or where ||b^{-1}|| ||A|| < 1".into(),
    ))
}

/// `G_mu(b) = (E (x) 1_n)((b~ - A~)^{-1})`.
pub fn cauchy_g(r: &RealizedDistribution, b: &HalfPlanePoint) -> Result<CMatrix> {
    if b.base_dim() != r.d() {
        return Err(Error::dim(r.d(), b.base_dim()));
    }
    let level = b.level();
    let resolvent = (&r.lift(b.value()) - &r.a().amplify(level)).inverse()?;
    Ok(partial_state(&resolvent, level * r.d(), r.k(), r.state()))
}

/// `F_mu(b) = G_mu(b)^{-1}`.
pub fn f_eval(r: &RealizedDistribution, b: &HalfPlanePoint) -> Result<CMatrix> {
    cauchy_g(r, b)?.inverse()
}

/// `H_mu(b) = G_mu(b^{-1})`, valid for `||b|| ||A|| < 1` including `b = 0`.
pub fn h_eval(r: &RealizedDistribution, b: &CMatrix) -> Result<CMatrix> {
    let level = level_of(b, r.d())?;
    let bt = r.lift(b);
    if r.bound() * b.op_norm() >= 1.0 {
        return Err(Error::Domain("H needs ||b|| ||A|| < 1".into()));
    }
    let lhs = &CMatrix::identity(bt.dim()) - &(&bt * &r.a().amplify(level));
    let t = &lhs.inverse()? * &bt;
    Ok(partial_state(&t, level * r.d(), r.k(), r.state()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Picard,
    Rk4,
}

/// Trajectory `t |-> F_t(b0)` on a grid starting at 0.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub b0: CMatrix,
    pub times: Vec<f64>,
    pub values: Vec<CMatrix>,
    pub method: Method,
    /// Picard iterations used, or 0.
    pub iterations: usize,
    /// Last Picard sup-change, or the Richardson estimate of the Runge-Kutta run.
    pub error_estimate: f64,
}

impl FlowState {
    pub fn last(&self) -> &CMatrix {
        self.values.last().expect("nonempty trajectory")
    }

    /// Smallest eigenvalue of `Im F_t(b0) - Im b0` over the trajectory.
    pub fn im_gain(&self) -> f64 {
        let base = self.b0.imag_part();
        self.values
            .iter()
            .map(|v| (&v.imag_part() - &base).min_hermitian_eigenvalue())
            .fold(f64::INFINITY, f64::min)
    }

    /// `Im F_t(b0) >= Im b0 - IM_TOL` at every stored point.
    pub fn im_monotone(&self) -> bool {
        self.im_gain() >= -IM_TOL
    }

    /// Value at a stored time (nearest grid point).
    pub fn at(&self, t: f64) -> &CMatrix {
        let i = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
            .expect("nonempty trajectory");
        &self.values[i]
    }
}

fn check_start(g: &Generator, b: &HalfPlanePoint, t_max: f64) -> Result<()> {
    if b.base_dim() != g.d() {
        return Err(Error::dim(g.d(), b.base_dim()));
    }
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(Error::Invalid(format!("t_max must be finite and >= 0, got {t_max}")));
    }
    Ok(())
}

/// Successive approximations `f_{k+1}(t) = b - int_0^t Phi(f_k(s)) ds` with the
/// composite trapezoid rule on a uniform grid.
pub fn picard_flow(
    g: &Generator,
    b: &HalfPlanePoint,
    t_max: f64,
    grid_steps: usize,
    max_iters: usize,
    tol: f64,
) -> Result<FlowState> {
    check_start(g, b, t_max)?;
    if grid_steps == 0 {
        return Err(Error::Invalid("grid_steps must be positive".into()));
    }
    let h = t_max / grid_steps as f64;
    let times: Vec<f64> = (0..=grid_steps).map(|j| j as f64 * h).collect();
    let b0 = b.value().clone();
    let mut values = vec![b0.clone(); grid_steps + 1];
    let mut change = f64::INFINITY;
    for iter in 1..=max_iters {
        let phis = values.iter().map(|f| g.eval(f)).collect::<Result<Vec<_>>>()?;
        let mut next = Vec::with_capacity(values.len());
        let mut integral = CMatrix::zeros(b0.dim());
        next.push(b0.clone());
        for j in 1..=grid_steps {
            integral += &(&phis[j - 1] + &phis[j]).scale_re(0.5 * h);
            next.push(&b0 - &integral);
        }
        change = values
            .iter()
            .zip(&next)
            .map(|(a, c)| a.dist(c))
            .fold(0.0, f64::max);
        values = next;
        if !change.is_finite() {
            break;
        }
        if change < tol {
            return Ok(FlowState {
                b0,
                times,
                values,
                method: Method::Picard,
                iterations: iter,
                error_estimate: change,
            });
        }
    }
    Err(Error::Divergence {
        iterations: max_iters,
        residual: change,
    })
}

fn rk4_step(g: &Generator, f: &CMatrix, h: f64) -> Result<CMatrix> {
    let k1 = g.eval(f)?.scale_re(-1.0);
    let k2 = g.eval(&(f + &k1.scale_re(0.5 * h)))?.scale_re(-1.0);
    let k3 = g.eval(&(f + &k2.scale_re(0.5 * h)))?.scale_re(-1.0);
    let k4 = g.eval(&(f + &k3.scale_re(h)))?.scale_re(-1.0);
    let incr = &(&k1 + &k2.scale_re(2.0)) + &(&k3.scale_re(2.0) + &k4);
    Ok(f + &incr.scale_re(h / 6.0))
}

/// One step of length `h`, split in halves while a stage leaves the half-plane.
fn guarded_step(g: &Generator, f: &CMatrix, h: f64, depth: usize) -> Result<CMatrix> {
    let attempt = rk4_step(g, f, h);
    match attempt {
        Ok(next) if in_upper_half_plane(&next, 0.0) => Ok(next),
        _ if depth < MAX_HALVINGS => {
            let mid = guarded_step(g, f, 0.5 * h, depth + 1)?;
            guarded_step(g, &mid, 0.5 * h, depth + 1)
        }
        Ok(_) => Err(Error::Numerical(format!(
            "Runge-Kutta step left the upper half-plane after {MAX_HALVINGS} halvings"
        ))),
        Err(e) => Err(e),
    }
}

fn rk4_run(g: &Generator, b0: &CMatrix, n: usize, refine: usize, h: f64) -> Result<Vec<CMatrix>> {
    let mut out = Vec::with_capacity(n + 1);
    let mut f = b0.clone();
    out.push(f.clone());
    let sub = h / refine as f64;
    for _ in 0..n {
        for _ in 0..refine {
            f = guarded_step(g, &f, sub, 0)?;
        }
        out.push(f.clone());
    }
    Ok(out)
}

/// Classical fixed-step Runge-Kutta for `dF/dt = -Phi(F)`, cross-checked against a
/// run with half the step; refuses when the Richardson estimate exceeds [`RK4_TOL`].
/// The returned values come from the refined run.
pub fn rk4_flow(g: &Generator, b: &HalfPlanePoint, t_max: f64, dt: f64) -> Result<FlowState> {
    check_start(g, b, t_max)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Invalid(format!("dt must be positive, got {dt}")));
    }
    let n = ((t_max / dt).ceil() as usize).max(1);
    let h = t_max / n as f64;
    let b0 = b.value().clone();
    let coarse = rk4_run(g, &b0, n, 1, h)?;
    let fine = rk4_run(g, &b0, n, 2, h)?;
    let estimate = coarse
        .iter()
        .zip(&fine)
        .map(|(a, c)| a.dist(c) / 15.0)
        .fold(0.0, f64::max);
    if !(estimate <= RK4_TOL) {
        return Err(Error::Numerical(format!(
            "Richardson error estimate {estimate:e} exceeds {RK4_TOL:e}; reduce dt"
        )));
    }
    Ok(FlowState {
        b0,
        times: (0..=n).map(|j| j as f64 * h).collect(),
        values: fine,
        method: Method::Rk4,
        iterations: 0,
        error_estimate: estimate,
    })
}

/// `F_t(b)` by [`rk4_flow`] with step `dt`.
pub fn flow_value(g: &Generator, b: &CMatrix, t: f64, dt: f64) -> Result<CMatrix> {
    let p = HalfPlanePoint::new(b.clone(), g.d())?;
    Ok(rk4_flow(g, &p, t, dt)?.last().clone())
}

/// `sqrt(b^2 - 2t)`, the flow of `Phi(b) = 1/b`, on the branch continuous from `F_0 = b`.
pub fn arcsine_flow_exact(b: C64, t: f64) -> C64 {
    let steps = 1000;
    let mut prev = b;
    for j in 1..=steps {
        let s = t * j as f64 / steps as f64;
        let r = (b * b - 2.0 * s).sqrt();
        prev = if (r - prev).norm() <= (-r - prev).norm() { r } else { -r };
    }
    prev
}

/// Semigroup defect `||F_{s+t}(b) - F_s(F_t(b))||`.
pub fn semigroup_defect(g: &Generator, b: &CMatrix, s: f64, t: f64, dt: f64) -> Result<f64> {
    let direct = flow_value(g, b, s + t, dt)?;
    let inner = flow_value(g, b, t, dt)?;
    let composed = flow_value(g, &inner, s, dt)?;
    Ok(direct.dist(&composed))
}

/// Outcome of [`flow_vs_series`], compared in `G = F^{-1}` coordinates.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SeriesComparison {
    pub residual: f64,
    pub bound: f64,
    /// Growth constant used for the tail bound.
    pub growth: f64,
    pub rho: f64,
}

impl SeriesComparison {
    pub fn within_bound(&self) -> bool {
        self.residual <= self.bound
    }
}

/// `max(||A||, max_n (max basis op-norm of m_n)^{1/n})`.
pub fn measured_growth(m: &MomentTensor, a_norm: f64) -> f64 {
    (1..=m.order())
        .map(|n| m.map(n).max_basis_op_norm().powf(1.0 / n as f64))
        .fold(a_norm, f64::max)
}

/// Compares the flow `F_t(b)` with the truncated series of `mu_t = mu^{|> t}`,
/// `G_t(b) = H^{mu_t}(b^{-1})`, where `m` holds the moments of `mu = nu_|>^{gamma,sigma}`.
/// The tail bound is `10 rho^{N+2} / (1 - rho)` with `rho = M ||b^{-1}||`.
pub fn flow_vs_series(g: &Generator, m: &MomentTensor, b: &HalfPlanePoint, t: f64, dt: f64) -> Result<SeriesComparison> {
    if m.d() != g.d() {
        return Err(Error::dim(g.d(), m.d()));
    }
    let w = b.value().inverse()?;
    let mt = monotone_power(m, t)?;
    let growth = measured_growth(&mt, g.sigma.bound());
    let rho = growth * w.op_norm();
    if rho >= 0.5 {
        return Err(Error::Domain(format!(
            "series comparison needs M ||b^{{-1}}|| < 1/2, got {rho}"
        )));
    }
    let series = h_series(&mt).evaluate(&w)?;
    let flow = rk4_flow(g, b, t, dt)?.last().inverse()?;
    let n = m.order() as i32;
    Ok(SeriesComparison {
        residual: series.dist(&flow),
        bound: 10.0 * rho.powi(n + 2) / (1.0 - rho),
        growth,
        rho,
    })
}

/// Default sample grid in `Im b >= 1`: `x + iy` with a fixed off-diagonal Hermitian part when `d > 1`.
pub fn sample_grid(d: usize) -> Vec<CMatrix> {
    let mut out = Vec::new();
    for &x in &[-1.0, 0.0, 1.0] {
        for &y in &[1.0, 2.0] {
            let mut b = CMatrix::scalar(d, C64::new(x, y));
            if d > 1 {
                b.set(0, 1, C64::new(0.3, 0.0));
                b.set(1, 0, C64::new(0.3, 0.0));
            }
            out.push(b);
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct DivisorReport {
    pub k: Vec<usize>,
    pub distance: Vec<f64>,
    pub slope: Option<f64>,
}

/// `sup_b ||F_{mu_k}(b) - b||` for `mu_k = nu_|>^{gamma/k, sigma/k}`, which is the
/// time-`1/k` map of the flow generated by `(gamma, sigma)`.
pub fn divisor_convergence_check(g: &Generator, k_list: &[usize], grid: &[CMatrix], dt: f64) -> Result<DivisorReport> {
    if k_list.contains(&0) {
        return Err(Error::Invalid("k must be positive".into()));
    }
    let mut distance = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let t = 1.0 / k as f64;
        let mut worst: f64 = 0.0;
        for b in grid {
            let f = flow_value(g, b, t, dt.min(t))?;
            worst = worst.max(f.dist(b));
        }
        distance.push(worst);
    }
    let xs: Vec<f64> = k_list.iter().map(|&k| k as f64).collect();
    Ok(DivisorReport {
        k: k_list.to_vec(),
        slope: loglog_slope(&xs, &distance),
        distance,
    })
}

/// Reads `sigma(b_1 X b_2 .. X b_{l+1})` off `H` from the top-right block of
/// `H(tB)` with `B` the nilpotent block matrix carrying `b_1..b_{l+1}` on its
/// superdiagonal. `H(tB)` is a polynomial of degree `l+1` in `t`, so its leading
/// coefficient is the divided difference over `l+2` nodes in `(0, r/2]`.
pub fn recover_sigma<F>(h: F, word: &[CMatrix], d: usize, radius: f64) -> Result<CMatrix>
where
    F: Fn(&CMatrix) -> Result<CMatrix>,
{
    let len = word.len();
    if len == 0 || len + 1 > 8 {
        return Err(Error::size("word length", len, 1, 7));
    }
    if let Some(b) = word.iter().find(|b| b.dim() != d) {
        return Err(Error::dim(d, b.dim()));
    }
    let blocks = len + 1;
    let mut big = CMatrix::zeros(blocks * d);
    for (i, b) in word.iter().enumerate() {
        big.set_block(i, i + 1, d, b);
    }
    let norm = big.op_norm();
    if norm == 0.0 {
        return Ok(CMatrix::zeros(d));
    }
    let r_safe = 0.5 * radius;
    let nodes: Vec<f64> = (1..=blocks)
        .map(|j| j as f64 / blocks as f64 * r_safe / norm)
        .collect();
    let mut lead = CMatrix::zeros(d);
    for (j, &tj) in nodes.iter().enumerate() {
        let denom: f64 = nodes
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != j)
            .map(|(_, &ti)| tj - ti)
            .product();
        let val = h(&big.scale_re(tj))?;
        lead += &val.block(0, blocks - 1, d).scale_re(1.0 / denom);
    }
    Ok(lead)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PerturbationReport {
    pub epsilon: f64,
    pub lipschitz: f64,
    pub difference: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Gronwall check `sup_b ||F_1(1,b) - F_2(1,b)|| <= 1.1 (e^{M}-1)/M eps`, with
/// `eps = sup ||Phi_1 - Phi_2||` over the samples and the second trajectories, and
/// `M` the Lipschitz constant of `Phi_1` on `Im >= min_b lambda_min(Im b)`.
/// The Richardson estimates of both runs are added as numerical slack.
pub fn generator_perturbation_check(g1: &Generator, g2: &Generator, ball: &[CMatrix], dt: f64) -> Result<PerturbationReport> {
    if g1.d() != g2.d() {
        return Err(Error::dim(g1.d(), g2.d()));
    }
    let mut eta = f64::INFINITY;
    let mut epsilon: f64 = 0.0;
    let mut difference: f64 = 0.0;
    let mut slack = 0.0;
    for b in ball {
        let p = HalfPlanePoint::new(b.clone(), g1.d())?;
        eta = eta.min(p.imag_floor());
        let f1 = rk4_flow(g1, &p, 1.0, dt)?;
        let f2 = rk4_flow(g2, &p, 1.0, dt)?;
        for v in f2.values.iter().chain(std::iter::once(b)) {
            epsilon = epsilon.max(g1.eval(v)?.dist(&g2.eval(v)?));
        }
        difference = difference.max(f1.last().dist(f2.last()));
        slack = f64::max(slack, f1.error_estimate + f2.error_estimate);
    }
    let lipschitz = g1.lipschitz_bound(eta);
    let factor = if lipschitz < 1e-12 {
        1.0
    } else {
        lipschitz.exp_m1() / lipschitz
    };
    let bound = 1.1 * factor * epsilon;
    Ok(PerturbationReport {
        epsilon,
        lipschitz,
        difference,
        bound,
        holds: difference <= bound + slack,
    })
}

/// `||b^{-1} Phi(b)||` along `b = i lambda + x`.
pub fn stolz_decay(g: &Generator, x: &CMatrix, lambdas: &[f64]) -> Result<Vec<f64>> {
    lambdas
        .iter()
        .map(|&l| {
            let b = x + &CMatrix::scalar(x.dim(), C64::new(0.0, l));
            Ok((&b.inverse()? * &g.eval(&b)?).op_norm())
        })
        .collect()
}

/// Samples `R(b) = Phi(b^{-1})` on Hermitian `b` with `||b|| < 0.9/||A||` and checks
/// finiteness and `R(b)* = R(b*)`; returns the largest Hermitian defect.
pub fn lambda_membership(g: &Generator, samples: &[CMatrix]) -> Result<f64> {
    let a = g.sigma.bound();
    let radius = if a > 0.0 { 0.9 / a } else { 10.0 };
    let mut worst: f64 = 0.0;
    for s in samples {
        let h = s.real_part();
        let n = h.op_norm();
        let b = if n > 0.0 { h.scale_re(radius / n * 0.999) } else { h };
        let r = g.r_eval(&b)?;
        if !r.is_finite() {
            return Err(Error::Numerical("R(b) is not finite".into()));
        }
        worst = worst.max(r.hermitian_defect());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::State;
    use crate::random::{random_cp, random_hermitian, random_matrix, rng};

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn arcsine() -> Generator {
        Generator::new(
            CMatrix::zeros(1),
            RealizedCP::new(1, 1, CMatrix::zeros(1), vec![vec![c(1.0)]]).unwrap(),
        )
        .unwrap()
    }

    fn random_generator(seed: u64, d: usize) -> Generator {
        let mut g = rng(seed);
        Generator::new(random_hermitian(&mut g, d), random_cp(&mut g, d, 2, 1.0, 1.0)).unwrap()
    }

    #[test]
    fn cauchy_transform_examples() {
        let r = RealizedDistribution::new(1, 2, CMatrix::diag(&[c(1.0), c(-1.0)]), State::Trace).unwrap();
        let b = HalfPlanePoint::scalar_imag(2.0, 1, 1).unwrap();
        let gv = cauchy_g(&r, &b).unwrap();
        assert!((gv.get(0, 0) - C64::new(0.0, -0.4)).norm() < 1e-15);

        let zero = RealizedDistribution::new(2, 1, CMatrix::zeros(2), State::Trace).unwrap();
        let mut g = rng(31);
        let mut m = random_matrix(&mut g, 2);
        m = &m.real_part() + &CMatrix::scalar(2, C64::new(0.0, 1.0));
        let p = HalfPlanePoint::new(m.clone(), 2).unwrap();
        assert!(cauchy_g(&zero, &p).unwrap().max_abs_diff(&m.inverse().unwrap()) < 1e-14);

        let mut prev = f64::INFINITY;
        for l in [10.0, 100.0, 1000.0] {
            let p = HalfPlanePoint::scalar_imag(l, 1, 1).unwrap();
            let v = (&p.value().clone() * &cauchy_g(&r, &p).unwrap()).dist(&CMatrix::identity(1));
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn phi_examples() {
        let mut g = rng(32);
        let gamma = random_hermitian(&mut g, 2);
        let gen = Generator::new(gamma.clone(), RealizedCP::zero(2)).unwrap();
        let b = CMatrix::scalar(2, C64::new(0.3, 1.0));
        assert!(phi_eval(&gen, &b).unwrap().max_abs_diff(&gamma) < 1e-15);

        let b = CMatrix::scalar(1, C64::new(0.5, 2.0));
        let v = phi_eval(&arcsine(), &b).unwrap();
        assert!((v.get(0, 0) - 1.0 / C64::new(0.5, 2.0)).norm() < 1e-15);

        let gen = random_generator(33, 2);
        let b1 = &random_hermitian(&mut g, 2) + &CMatrix::scalar(2, C64::new(0.0, 1.0));
        let b2 = &random_hermitian(&mut g, 2) + &CMatrix::scalar(2, C64::new(0.0, 2.0));
        let sum = gen.eval(&b1.direct_sum(&b2)).unwrap();
        let parts = gen.eval(&b1).unwrap().direct_sum(&gen.eval(&b2).unwrap());
        assert!(sum.max_abs_diff(&parts) < 1e-12);
        assert!(gen.eval(&b1).unwrap().imag_part().hermitian_eigenvalues().iter().all(|&x| x <= 1e-10));
    }

    #[test]
    fn phi_respects_scalar_similarity() {
        let gen = random_generator(34, 2);
        let mut g = rng(35);
        let b = &random_hermitian(&mut g, 4) + &CMatrix::scalar(4, C64::new(0.0, 1.5));
        // S = s (x) 1_d with an invertible scalar 2x2 matrix s
        let s = CMatrix::from_real_rows(&[vec![2.0, 1.0], vec![0.5, 1.0]]).unwrap();
        let big_s = s.kron(&CMatrix::identity(2));
        let inv = big_s.inverse().unwrap();
        let lhs = gen.eval(&(&(&big_s * &b) * &inv)).unwrap();
        let rhs = &(&big_s * &gen.eval(&b).unwrap()) * &inv;
        assert!(lhs.max_abs_diff(&rhs) < 1e-8);
    }

    #[test]
    fn zero_sigma_flow_is_linear() {
        let mut g = rng(36);
        let gamma = random_hermitian(&mut g, 2);
        let gen = Generator::new(gamma.clone(), RealizedCP::zero(2)).unwrap();
        let b = HalfPlanePoint::new(&random_hermitian(&mut g, 2) + &CMatrix::scalar(2, C64::new(0.0, 1.0)), 2).unwrap();
        let f = rk4_flow(&gen, &b, 1.5, 0.1).unwrap();
        let p = picard_flow(&gen, &b, 1.5, 16, 5, 1e-12).unwrap();
        for (t, v) in f.times.iter().zip(&f.values) {
            let want = b.value() - &gamma.scale_re(*t);
            assert!(v.max_abs_diff(&want) < 1e-12);
        }
        assert!(p.last().max_abs_diff(&(b.value() - &gamma.scale_re(1.5))) < 1e-12);
        assert!(p.iterations <= 2);
    }

    #[test]
    fn arcsine_flow_matches_closed_form() {
        let b = HalfPlanePoint::scalar_imag(1.0, 1, 1).unwrap();
        let f = rk4_flow(&arcsine(), &b, 1.0, 0.01).unwrap();
        for t in [0.25, 0.5, 1.0] {
            let want = arcsine_flow_exact(C64::new(0.0, 1.0), t);
            assert!((f.at(t).get(0, 0) - want).norm() < 1e-8, "t = {t}");
        }
        let want = arcsine_flow_exact(C64::new(0.0, 1.0), 0.5);
        assert!((want - C64::new(0.0, 2f64.sqrt())).norm() < 1e-12);
        assert!(f.im_monotone());
        let p = picard_flow(&arcsine(), &b, 1.0, 1024, 100, 1e-12).unwrap();
        assert!(p.last().dist(f.last()) < 1e-6);
    }

    #[test]
    fn rk4_refuses_coarse_steps() {
        let b = HalfPlanePoint::scalar_imag(0.2, 1, 1).unwrap();
        assert!(matches!(rk4_flow(&arcsine(), &b, 1.0, 0.5), Err(Error::Numerical(_))));
    }

    #[test]
    fn picard_reports_divergence() {
        let b = HalfPlanePoint::scalar_imag(1.0, 1, 1).unwrap();
        assert!(matches!(
            picard_flow(&arcsine(), &b, 1.0, 64, 2, 1e-14),
            Err(Error::Divergence { iterations: 2, .. })
        ));
    }

    #[test]
    fn semigroup_and_monotonicity_random() {
        let gen = random_generator(37, 2);
        let b = CMatrix::scalar(2, C64::new(0.2, 1.0));
        assert!(semigroup_defect(&gen, &b, 0.5, 0.25, 0.01).unwrap() < 1e-6);
        let f = rk4_flow(&gen, &HalfPlanePoint::new(b, 2).unwrap(), 1.0, 0.01).unwrap();
        assert!(f.im_monotone());
    }

    #[test]
    fn h_evaluators_agree() {
        let mut g = rng(38);
        let s = random_cp(&mut g, 2, 2, 1.0, 1.0);
        let b = random_matrix(&mut g, 2).scale_re(0.1);
        // H_sigma(b) = G_sigma(b^{-1})
        let direct = cp_h_eval(&s, &b).unwrap();
        let via_g = cp_resolvent(&s, &b.inverse().unwrap()).unwrap();
        assert!(direct.max_abs_diff(&via_g) < 1e-12);
        let series = crate::ncseries::h_series_of_cp(&s, 12);
        assert!(direct.max_abs_diff(&series.evaluate(&b).unwrap()) < 1e-10);
        let linear = series.coeff(1).eval(std::slice::from_ref(&b));
        assert!(linear.max_abs_diff(&s.word(&[b]).unwrap()) < 1e-14);
    }

    #[test]
    fn recover_sigma_round_trip() {
        let mut g = rng(39);
        let s = random_cp(&mut g, 2, 2, 1.0, 1.0);
        let radius = 1.0 / s.bound();
        for len in 1..=4 {
            let word: Vec<CMatrix> = (0..len).map(|_| random_matrix(&mut g, 2)).collect();
            let got = recover_sigma(|b| cp_h_eval(&s, b), &word, 2, radius).unwrap();
            let want = s.word(&word).unwrap();
            assert!(got.max_abs_diff(&want) < 1e-8, "len {len}");
        }
        let word = vec![random_matrix(&mut g, 2)];
        let id = recover_sigma(|b| Ok(b.clone()), &word, 2, 1.0).unwrap();
        assert!(id.max_abs_diff(&word[0]) < 1e-12);
        let word2 = vec![word[0].clone(), word[0].clone()];
        assert!(recover_sigma(|b| Ok(b.clone()), &word2, 2, 1.0).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn flow_vs_series_examples() {
        let gen = arcsine();
        let m = crate::cumulants::make_nu(gen.gamma(), gen.sigma(), crate::cumulants::Species::Monotone, 6).unwrap();
        let b = HalfPlanePoint::scalar_imag(10.0, 1, 1).unwrap();
        let cmp = flow_vs_series(&gen, &m, &b, 1.0, 0.01).unwrap();
        assert!(cmp.within_bound(), "{cmp:?}");

        let mut g = rng(40);
        let gamma = random_hermitian(&mut g, 2);
        let gen = Generator::new(gamma.clone(), RealizedCP::zero(2)).unwrap();
        let m = crate::cumulants::make_nu(&gamma, gen.sigma(), crate::cumulants::Species::Monotone, 6).unwrap();
        let b = HalfPlanePoint::scalar_imag(20.0, 2, 1).unwrap();
        let cmp = flow_vs_series(&gen, &m, &b, 1.0, 0.1).unwrap();
        assert!(cmp.residual < 1e-12 + cmp.bound);
    }

    #[test]
    fn divisor_distances_scale_like_one_over_k() {
        let mut g = rng(41);
        let gamma = random_hermitian(&mut g, 2);
        let gen = Generator::new(gamma.clone(), RealizedCP::zero(2)).unwrap();
        let grid = sample_grid(2);
        let rep = divisor_convergence_check(&gen, &[1, 2, 4, 8], &grid, 0.05).unwrap();
        for (k, dist) in rep.k.iter().zip(&rep.distance) {
            assert!((dist - gamma.op_norm() / *k as f64).abs() < 1e-12);
        }
        let rep = divisor_convergence_check(&arcsine(), &[2, 4, 8, 16], &sample_grid(1), 0.01).unwrap();
        let slope = rep.slope.unwrap();
        assert!((-1.2..=-0.8).contains(&slope), "{slope}");
    }

    #[test]
    fn perturbation_bound() {
        let gen = random_generator(42, 2);
        let grid = sample_grid(2);
        let same = generator_perturbation_check(&gen, &gen, &grid, 0.05).unwrap();
        assert_eq!(same.difference, 0.0);
        assert!(same.holds);

        let eps = 1e-3;
        let base = Generator::new(CMatrix::zeros(2), RealizedCP::zero(2)).unwrap();
        let shifted = Generator::new(CMatrix::unit(2, 0, 0).scale_re(eps), RealizedCP::zero(2)).unwrap();
        let rep = generator_perturbation_check(&base, &shifted, &grid, 0.1).unwrap();
        assert!((rep.difference - eps).abs() < 1e-14);
        assert!(rep.holds);

        let pert = Generator::new(gen.gamma().clone(), gen.sigma().scale_v(1.01)).unwrap();
        assert!(generator_perturbation_check(&gen, &pert, &grid, 0.05).unwrap().holds);
    }

    #[test]
    fn stolz_and_lambda_membership() {
        let gen = random_generator(43, 2);
        let mut g = rng(44);
        let x = random_hermitian(&mut g, 2);
        let v = stolz_decay(&gen, &x, &[10.0, 100.0, 1000.0]).unwrap();
        assert!(v[0] > v[1] && v[1] > v[2]);
        let samples: Vec<CMatrix> = (0..10).map(|_| random_hermitian(&mut g, 2)).collect();
        assert!(lambda_membership(&gen, &samples).unwrap() < 1e-10);
    }
}
