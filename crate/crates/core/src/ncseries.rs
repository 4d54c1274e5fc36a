//! Truncated non-commutative power series with ordered multilinear
//! coefficients: `S(b) = sum_M C_M(b, .., b)`.

use rayon::prelude::*;

use crate::cumulants::{graded_moments, moments_to_cumulants, CumulantTensor, Species};
use crate::dist::{MomentTensor, RealizedCP};
use crate::error::{Error, Result};
use crate::matalg::{CMatrix, C64};
use crate::tensor::Multilinear;

/// Largest truncation order accepted by [`evolution_check`].
pub const MAX_EVOLUTION_ORDER: usize = 6;

/// `coeffs[M]` is the degree-`M` coefficient, of arity `M`, for `0 <= M <= max_degree`.
#[derive(Clone, Debug, PartialEq)]
pub struct NCSeries {
    d: usize,
    coeffs: Vec<Multilinear>,
}

impl NCSeries {
    pub fn new(d: usize, coeffs: Vec<Multilinear>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Invalid("a series needs at least a degree-0 coefficient".into()));
        }
        for (m, c) in coeffs.iter().enumerate() {
            if c.d() != d {
                return Err(Error::dim(d, c.d()));
            }
            if c.arity() != m {
                return Err(Error::Invalid(format!(
                    "degree-{m} coefficient has arity {}",
                    c.arity()
                )));
            }
        }
        Ok(NCSeries { d, coeffs })
    }

    pub fn zero(d: usize, max_degree: usize) -> Self {
        NCSeries {
            d,
            coeffs: (0..=max_degree).map(|m| Multilinear::zero(d, m)).collect(),
        }
    }

    /// `b |-> b`.
    pub fn identity(d: usize, max_degree: usize) -> Self {
        let mut s = NCSeries::zero(d, max_degree);
        if max_degree >= 1 {
            s.coeffs[1] = Multilinear::identity(d);
        }
        s
    }

    pub fn constant(m: &CMatrix, max_degree: usize) -> Self {
        let mut s = NCSeries::zero(m.dim(), max_degree);
        s.coeffs[0] = Multilinear::constant(m);
        s
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn max_degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, m: usize) -> &Multilinear {
        &self.coeffs[m]
    }

    pub fn coeffs(&self) -> &[Multilinear] {
        &self.coeffs
    }

    /// No constant term and `C_1 = id`, the shape of the H-series of a state-like law.
    pub fn is_h_series(&self, tol: f64) -> bool {
        self.coeffs[0].max_abs() <= tol
            && (self.max_degree() < 1
                || self.coeffs[1].max_abs_diff(&Multilinear::identity(self.d)) <= tol)
    }

    pub fn truncate(&self, max_degree: usize) -> Self {
        NCSeries {
            d: self.d,
            coeffs: self.coeffs[..=max_degree.min(self.max_degree())].to_vec(),
        }
    }

    fn zip_with(&self, other: &NCSeries, w: C64) -> Self {
        let top = self.max_degree().min(other.max_degree());
        NCSeries {
            d: self.d,
            coeffs: (0..=top)
                .map(|m| {
                    let mut c = self.coeffs[m].clone();
                    c.add_assign_scaled(&other.coeffs[m], w);
                    c
                })
                .collect(),
        }
    }

    pub fn add(&self, other: &NCSeries) -> Self {
        self.zip_with(other, C64::new(1.0, 0.0))
    }

    pub fn sub(&self, other: &NCSeries) -> Self {
        self.zip_with(other, C64::new(-1.0, 0.0))
    }

    pub fn scale_re(&self, x: f64) -> Self {
        NCSeries {
            d: self.d,
            coeffs: self.coeffs.iter().map(|c| c.scale_re(x)).collect(),
        }
    }

    /// `b |-> self(b) other(b)`, truncated at the smaller maximal degree.
    pub fn product(&self, other: &NCSeries) -> Self {
        let top = self.max_degree().min(other.max_degree());
        let coeffs = (0..=top)
            .into_par_iter()
            .map(|m| {
                let mut acc = Multilinear::zero(self.d, m);
                for i in 0..=m {
                    let (a, b) = (&self.coeffs[i], &other.coeffs[m - i]);
                    if a.is_zero() || b.is_zero() {
                        continue;
                    }
                    acc.add_assign_scaled(&a.product(b), C64::new(1.0, 0.0));
                }
                acc
            })
            .collect();
        NCSeries { d: self.d, coeffs }
    }

    /// `b |-> outer(inner(b))` as ordered substitution; `inner` must have no constant term.
    pub fn compose(outer: &NCSeries, inner: &NCSeries) -> Result<NCSeries> {
        if outer.d != inner.d {
            return Err(Error::dim(outer.d, inner.d));
        }
        if !inner.coeffs[0].is_zero() {
            return Err(Error::Unsupported(
                "composition with an inner series that has a constant term".into(),
            ));
        }
        let top = outer.max_degree().min(inner.max_degree());
        // contributions of every outer degree, summed afterwards in degree order
        let parts: Vec<Vec<Multilinear>> = (1..=top)
            .into_par_iter()
            .map(|k| {
                let mut out: Vec<Multilinear> = (0..=top).map(|m| Multilinear::zero(outer.d, m)).collect();
                if !outer.coeffs[k].is_zero() {
                    substitute_parts(&outer.coeffs[k], 0, k, 0, inner, top, &mut out);
                }
                out
            })
            .collect();
        let mut coeffs: Vec<Multilinear> = (0..=top).map(|m| Multilinear::zero(outer.d, m)).collect();
        coeffs[0] = outer.coeffs[0].clone();
        for part in &parts {
            for (acc, c) in coeffs.iter_mut().zip(part) {
                acc.add_assign_scaled(c, C64::new(1.0, 0.0));
            }
        }
        Ok(NCSeries { d: outer.d, coeffs })
    }

    /// `sum_M C_M(b, .., b)` at any level `b in M_n(M_d)`.
    pub fn evaluate(&self, b: &CMatrix) -> Result<CMatrix> {
        if !b.dim().is_multiple_of(self.d) {
            return Err(Error::dim(self.d, b.dim()));
        }
        let level = b.dim() / self.d;
        let mut acc = self.coeffs[0].basis_value(0).amplify(level);
        for m in 1..=self.max_degree() {
            let c = &self.coeffs[m];
            if c.is_zero() {
                continue;
            }
            acc += &c.eval_amplified(&vec![b.clone(); m]);
        }
        Ok(acc)
    }

    pub fn max_abs_diff(&self, other: &NCSeries) -> f64 {
        let top = self.max_degree().min(other.max_degree());
        (0..=top)
            .map(|m| self.coeffs[m].max_abs_diff(&other.coeffs[m]))
            .fold(0.0, f64::max)
    }
}

/// Depth-first substitution of inner coefficients into the remaining slots of `partial`,
/// sharing the prefix work between ordered splittings of the degree.
fn substitute_parts(
    partial: &Multilinear,
    pos: usize,
    remaining: usize,
    used: usize,
    inner: &NCSeries,
    top: usize,
    out: &mut [Multilinear],
) {
    if remaining == 0 {
        out[used].add_assign_scaled(partial, C64::new(1.0, 0.0));
        return;
    }
    let budget = top - used - (remaining - 1);
    for part in 1..=budget {
        let c = &inner.coeffs[part];
        if c.is_zero() {
            continue;
        }
        let next = partial.substitute(pos, c);
        substitute_parts(&next, pos + part, remaining - 1, used + part, inner, top, out);
    }
}

/// `H^mu(b) = sum_n mu[b (X b)^n]`: `C_1 = id`, `C_{n+1} = b_0 m_n(..) b_n`.
pub fn h_series(m: &MomentTensor) -> NCSeries {
    let d = m.d();
    let mut coeffs = vec![Multilinear::zero(d, 0), Multilinear::identity(d)];
    coeffs.extend(m.maps().iter().map(Multilinear::sandwich));
    NCSeries { d, coeffs }
}

/// `H(b) = sum_k sigma((b X)^k b)` for a CP map that need not be unital or bimodular;
/// `C_1 = sigma` restricted to `M_d`.
pub fn h_series_of_cp(sigma: &RealizedCP, max_degree: usize) -> NCSeries {
    let d = sigma.d();
    let mut coeffs = vec![Multilinear::zero(d, 0)];
    for m in 1..=max_degree {
        coeffs.push(Multilinear::from_basis_fn(d, m, |args| {
            sigma.word(args).expect("level-1 arguments")
        }));
    }
    NCSeries { d, coeffs }
}

/// `K^mu(b) = sum_{n >= 1} K^mu[b (X b)^n]` from a cumulant tensor.
pub fn k_series(c: &CumulantTensor) -> NCSeries {
    let d = c.d();
    let mut coeffs = vec![Multilinear::zero(d, 0), Multilinear::zero(d, 1)];
    coeffs.extend(c.maps().iter().map(Multilinear::sandwich));
    NCSeries { d, coeffs }
}

/// Reads `m_n(b_1..) = C_{n+1}(1, b_1, .., 1)` back from an H-series.
pub fn moments_from_h(h: &NCSeries) -> Result<MomentTensor> {
    if h.max_degree() < 2 {
        return Err(Error::Invalid("H-series must reach degree 2".into()));
    }
    let one = CMatrix::identity(h.d);
    let maps = (2..=h.max_degree())
        .map(|m| h.coeffs[m].fix_slot(m - 1, &one).fix_slot(0, &one))
        .collect();
    MomentTensor::new(h.d, maps)
}

/// `mu |> nu` through `H^{mu |> nu} = H^mu o H^nu`.
pub fn monotone_convolve(m1: &MomentTensor, m2: &MomentTensor) -> Result<MomentTensor> {
    m1.check_compatible(m2)?;
    moments_from_h(&NCSeries::compose(&h_series(m1), &h_series(m2))?)
}

/// Max coefficient mismatch of `d/dt H^{mu^{|>t}} = K^mu(H^{mu^{|>t}})` over `t_grid`,
/// with the left side differentiated exactly in `t`.
pub fn evolution_check(m: &MomentTensor, t_grid: &[f64]) -> Result<f64> {
    if m.order() > MAX_EVOLUTION_ORDER {
        return Err(Error::size("truncation order", m.order(), 1, MAX_EVOLUTION_ORDER));
    }
    let c = moments_to_cumulants(m, Species::Monotone)?;
    let graded = graded_moments(&c)?;
    let k = k_series(&c);
    let d = m.d();
    let mut worst: f64 = 0.0;
    for &t in t_grid {
        let mut h = vec![Multilinear::zero(d, 0), Multilinear::identity(d)];
        let mut dh = vec![Multilinear::zero(d, 0), Multilinear::zero(d, 1)];
        for terms in &graded {
            let arity = terms[0].arity();
            let mut v = Multilinear::zero(d, arity);
            let mut dv = Multilinear::zero(d, arity);
            for (j, g) in terms.iter().enumerate() {
                v.add_assign_scaled(g, C64::new(t.powi(j as i32), 0.0));
                if j > 0 {
                    dv.add_assign_scaled(g, C64::new(j as f64 * t.powi(j as i32 - 1), 0.0));
                }
            }
            h.push(v.sandwich());
            dh.push(dv.sandwich());
        }
        let h = NCSeries::new(d, h)?;
        let dh = NCSeries::new(d, dh)?;
        let rhs = NCSeries::compose(&k, &h)?;
        worst = worst.max(dh.max_abs_diff(&rhs));
    }
    Ok(worst)
}

/// Series `f` with `F_mu(w) = w + f(w^{-1})`, from `F_mu(b^{-1}) = H^mu(b)^{-1}`.
pub fn f_series(m: &MomentTensor) -> NCSeries {
    let d = m.d();
    let order = m.order();
    // H(b) = b (1 + A(b)) with A_n(b_1..b_n) = m_n(b_1..b_{n-1}) b_n
    let mut a = vec![Multilinear::zero(d, 0)];
    a.extend(m.maps().iter().map(|mn| mn.product(&Multilinear::identity(d))));
    let a = NCSeries { d, coeffs: a };
    // S = (1 + A)^{-1} - 1 solves S = -A - A S; each pass fixes one more degree
    let mut s = NCSeries::zero(d, order);
    for _ in 0..order {
        s = a.scale_re(-1.0).sub(&a.product(&s));
    }
    // every term of S ends on a factor b, so S_j(b..b) b^{-1} = S_j(b, .., b, 1)
    let one = CMatrix::identity(d);
    let coeffs = (1..=order).map(|j| s.coeffs[j].fix_slot(j - 1, &one)).collect();
    NCSeries { d, coeffs }
}

/// Evaluates `F_mu(w) = w + f(w^{-1})` from the output of [`f_series`].
pub fn eval_f(f: &NCSeries, w: &CMatrix) -> Result<CMatrix> {
    Ok(w + &f.evaluate(&w.inverse()?)?)
}

/// R-series of `mu`: `phi_mu(w) = R(w^{-1})` where `phi_mu = F_mu^{<-1>} - id`.
///
/// Solves `R(b) = -f((1 + b R(b))^{-1} b)` by fixed-point iteration on degrees.
pub fn voiculescu_series(m: &MomentTensor) -> Result<NCSeries> {
    let f = f_series(m);
    let d = m.d();
    let top = f.max_degree();
    let id = NCSeries::identity(d, top.max(1));
    let mut r = NCSeries::zero(d, top);
    for _ in 0..=top {
        // u = (1 + bR)^{-1} b solves u = b - b R u
        let br = id.product(&r);
        let mut u = NCSeries::zero(d, top.max(1));
        for _ in 0..=top {
            u = id.sub(&br.product(&u));
        }
        let u = u.truncate(top);
        r = NCSeries::compose(&f, &u)?.scale_re(-1.0);
    }
    Ok(r)
}

/// `phi_mu(w) = R(w^{-1})`.
pub fn eval_phi(r: &NCSeries, w: &CMatrix) -> Result<CMatrix> {
    r.evaluate(&w.inverse()?)
}
