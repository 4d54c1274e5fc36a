//! `M_d`-valued distributions as truncated moment tensors, and finite
//! matrix models realizing distributions and completely positive maps.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matalg::{CMatrix, C64};
use crate::tensor::Multilinear;

/// Largest truncation order accepted by constructors that enumerate basis tuples.
pub const MAX_ORDER: usize = 8;

/// Largest `d * k` of a matrix model.
pub const MAX_MODEL_DIM: usize = 64;

/// Cut-off used by [`cp_check`] on the smallest Gram eigenvalue.
pub const CP_TOL: f64 = 1e-8;

/// Truncated moment functional of a bimodular map `mu` with `mu[b] = b`.
///
/// `maps[n-1]` holds `m_n(b_1, .., b_{n-1})` with
/// `mu[b_0 X b_1 .. X b_n] = b_0 m_n(b_1, .., b_{n-1}) b_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTensor {
    d: usize,
    maps: Vec<Multilinear>,
}

impl MomentTensor {
    pub fn new(d: usize, maps: Vec<Multilinear>) -> Result<Self> {
        for (i, m) in maps.iter().enumerate() {
            if m.d() != d {
                return Err(Error::dim(d, m.d()));
            }
            if m.arity() != i {
                return Err(Error::Invalid(format!(
                    "moment map of order {} has arity {}, expected {}",
                    i + 1,
                    m.arity(),
                    i
                )));
            }
        }
        Ok(MomentTensor { d, maps })
    }

    /// Point mass at `a`: `m_n(b_1..) = a b_1 a .. b_{n-1} a`.
    pub fn delta(a: &CMatrix, order: usize) -> Self {
        let maps = (1..=order)
            .map(|n| {
                Multilinear::from_basis_fn(a.dim(), n - 1, |args| {
                    let mut acc = a.clone();
                    for b in args {
                        acc = &(&acc * b) * a;
                    }
                    acc
                })
            })
            .collect();
        MomentTensor { d: a.dim(), maps }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Truncation order `N`.
    pub fn order(&self) -> usize {
        self.maps.len()
    }

    /// `m_n`, `1 <= n <= N`.
    pub fn map(&self, n: usize) -> &Multilinear {
        &self.maps[n - 1]
    }

    pub fn maps(&self) -> &[Multilinear] {
        &self.maps
    }

    pub fn into_maps(self) -> Vec<Multilinear> {
        self.maps
    }

    pub fn truncate(&self, order: usize) -> Self {
        MomentTensor {
            d: self.d,
            maps: self.maps[..order.min(self.maps.len())].to_vec(),
        }
    }

    /// `m_n(inner)`.
    pub fn eval(&self, inner: &[CMatrix]) -> CMatrix {
        self.map(inner.len() + 1).eval(inner)
    }

    /// `mu[b_0 X b_1 .. X b_n]` for `word = [b_0, .., b_n]`; a one-element word is `mu[b_0] = b_0`.
    pub fn eval_word(&self, word: &[CMatrix]) -> CMatrix {
        let n = word.len() - 1;
        if n == 0 {
            return word[0].clone();
        }
        &(&word[0] * &self.eval(&word[1..n])) * &word[n]
    }

    /// `max_n max_tuples ||m_n(b_1..)* - m_n(b_{n-1}*, .., b_1*)||` on basis tuples.
    pub fn hermitian_defect(&self) -> f64 {
        let d = self.d;
        let dd = d * d;
        let mut worst: f64 = 0.0;
        for m in &self.maps {
            let a = m.arity();
            for t in 0..m.num_tuples() {
                let idx = crate::tensor::decode(t, dd, a);
                // E_{rs}* = E_{sr}; reversed and adjointed tuple
                let mut rev = 0;
                for &e in idx.iter().rev() {
                    let (r, s) = (e / d, e % d);
                    rev = rev * dd + s * d + r;
                }
                let lhs = m.basis_value(t).adjoint();
                let rhs = m.basis_value(rev);
                worst = worst.max(lhs.max_abs_diff(&rhs));
            }
        }
        worst
    }

    /// Max over orders and basis tuples of the operator-norm distance.
    pub fn distance(&self, other: &MomentTensor) -> f64 {
        self.distances(other).into_iter().fold(0.0, f64::max)
    }

    /// Per-order distances (index `n-1`).
    pub fn distances(&self, other: &MomentTensor) -> Vec<f64> {
        assert_eq!(self.d, other.d);
        self.maps
            .iter()
            .zip(&other.maps)
            .map(|(a, b)| a.sub(b).max_basis_op_norm())
            .collect()
    }

    /// Largest coefficient difference.
    pub fn max_abs_diff(&self, other: &MomentTensor) -> f64 {
        assert_eq!(self.order(), other.order());
        self.maps
            .iter()
            .zip(&other.maps)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    pub(crate) fn check_compatible(&self, other: &MomentTensor) -> Result<()> {
        if self.d != other.d {
            return Err(Error::dim(self.d, other.d));
        }
        if self.order() != other.order() {
            return Err(Error::Invalid(format!(
                "truncation orders differ: {} vs {}",
                self.order(),
                other.order()
            )));
        }
        Ok(())
    }
}

/// State `phi` on `M_k` defining `E = id_d (x) phi`.
#[derive(Clone, Debug, PartialEq)]
pub enum State {
    /// Normalized trace.
    Trace,
    /// `M |-> v* M v` for a unit vector.
    Vector(Vec<C64>),
}

/// Applies `id_outer (x) phi` to a matrix of dimension `outer * k`.
pub(crate) fn partial_state(t: &CMatrix, outer: usize, k: usize, state: &State) -> CMatrix {
    debug_assert_eq!(t.dim(), outer * k);
    CMatrix::from_fn(outer, |p, q| {
        let mut acc = C64::new(0.0, 0.0);
        match state {
            State::Trace => {
                for a in 0..k {
                    acc += t.get(p * k + a, q * k + a);
                }
                acc / k as f64
            }
            State::Vector(v) => {
                for a in 0..k {
                    for b in 0..k {
                        acc += v[a].conj() * t.get(p * k + a, q * k + b) * v[b];
                    }
                }
                acc
            }
        }
    })
}

/// Matrix model: `X |-> A` on `C^d (x) C^k`, `b |-> b (x) 1_k`, `E = id_d (x) phi`.
#[derive(Clone, Debug)]
pub struct RealizedDistribution {
    d: usize,
    k: usize,
    a: CMatrix,
    state: State,
}

fn check_model_dims(d: usize, k: usize, dim: usize) -> Result<()> {
    if d == 0 || k == 0 {
        return Err(Error::Invalid("d and k must be positive".into()));
    }
    if d * k > MAX_MODEL_DIM {
        return Err(Error::size("d*k", d * k, 1, MAX_MODEL_DIM));
    }
    if dim != d * k {
        return Err(Error::dim(d * k, dim));
    }
    Ok(())
}

impl RealizedDistribution {
    pub fn new(d: usize, k: usize, a: CMatrix, state: State) -> Result<Self> {
        check_model_dims(d, k, a.dim())?;
        if !a.is_hermitian(1e-12) {
            return Err(Error::Invalid("A must be Hermitian".into()));
        }
        if let State::Vector(v) = &state {
            if v.len() != k {
                return Err(Error::dim(k, v.len()));
            }
            let n: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            if (n - 1.0).abs() > 1e-10 {
                return Err(Error::Invalid(format!("state vector has norm^2 {n}, not 1")));
            }
        }
        Ok(RealizedDistribution { d, k, a, state })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn a(&self) -> &CMatrix {
        &self.a
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    /// Exponential bound constant `||A||`.
    pub fn bound(&self) -> f64 {
        self.a.op_norm()
    }

    /// `E (x) 1_n` applied to a matrix of dimension `n d k`.
    pub fn expectation(&self, t: &CMatrix) -> CMatrix {
        partial_state(t, t.dim() / self.k, self.k, &self.state)
    }

    /// Lifts `b` in `M_n(M_d)` to `b (x) 1_k`.
    pub fn lift(&self, b: &CMatrix) -> CMatrix {
        b.kron(&CMatrix::identity(self.k))
    }
}

/// Moment tensor of a matrix model, up to order `order`.
pub fn moments_of(r: &RealizedDistribution, order: usize) -> Result<MomentTensor> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::size("truncation order", order, 1, MAX_ORDER));
    }
    let d = r.d;
    let dd = d * d;
    let lifted: Vec<CMatrix> = (0..dd)
        .map(|e| r.lift(&CMatrix::unit(d, e / d, e % d)))
        .collect();
    let mut maps = Vec::with_capacity(order);
    // prefixes A b_1 A .. b_j A, first slot slowest
    let mut level = vec![r.a.clone()];
    for n in 1..=order {
        if n > 1 {
            level = level
                .iter()
                .flat_map(|p| lifted.iter().map(move |b| &(p * b) * &r.a))
                .collect();
        }
        let data: Vec<C64> = level.iter().flat_map(|p| r.expectation(p).row_major()).collect();
        maps.push(Multilinear::from_data(d, n - 1, data));
    }
    let t = MomentTensor { d, maps };
    let bound = r.bound();
    for n in 1..=order {
        let worst = t.map(n).max_basis_op_norm();
        if worst > bound.powi(n as i32) * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::Numerical(format!(
                "moment of order {n} has norm {worst} above the exponential bound {}",
                bound.powi(n as i32)
            )));
        }
    }
    Ok(t)
}

/// CP map `sigma(P) = V* pi(P) V` on `M_d<X>` with `pi(X) = A`, `pi(b) = b (x) 1_k`.
#[derive(Clone, Debug)]
pub struct RealizedCP {
    d: usize,
    k: usize,
    a: CMatrix,
    v: DMatrix<C64>,
}

impl RealizedCP {
    /// `v` is given row-major as a `dk x d` array.
    pub fn new(d: usize, k: usize, a: CMatrix, v: Vec<Vec<C64>>) -> Result<Self> {
        check_model_dims(d, k, a.dim())?;
        if !a.is_hermitian(1e-12) {
            return Err(Error::Invalid("A must be Hermitian".into()));
        }
        if v.len() != d * k {
            return Err(Error::dim(d * k, v.len()));
        }
        for row in &v {
            if row.len() != d {
                return Err(Error::dim(d, row.len()));
            }
        }
        let v = DMatrix::from_fn(d * k, d, |r, c| v[r][c]);
        Ok(RealizedCP { d, k, a, v })
    }

    /// `sigma = 0`.
    pub fn zero(d: usize) -> Self {
        RealizedCP {
            d,
            k: 1,
            a: CMatrix::zeros(d),
            v: DMatrix::zeros(d, d),
        }
    }

    /// `sigma[b_1 X .. X b_m] = c^m b_1 a b_2 .. a b_m` with `A = a 1_d`, `V = sqrt(c)`:
    /// at `a = 0` this is `mass` times the point mass at zero.
    pub fn scalar_point(d: usize, a: f64, mass: f64) -> Self {
        RealizedCP {
            d,
            k: 1,
            a: CMatrix::scalar(d, C64::new(a, 0.0)),
            v: DMatrix::from_diagonal_element(d, d, C64::new(mass.sqrt(), 0.0)),
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn a(&self) -> &CMatrix {
        &self.a
    }

    pub fn v(&self) -> &DMatrix<C64> {
        &self.v
    }

    pub fn v_rows(&self) -> Vec<Vec<C64>> {
        (0..self.v.nrows())
            .map(|r| (0..self.v.ncols()).map(|c| self.v[(r, c)]).collect())
            .collect()
    }

    /// Exponential bound constant `||A||`.
    pub fn bound(&self) -> f64 {
        self.a.op_norm()
    }

    pub fn v_norm(&self) -> f64 {
        self.v.singular_values().iter().copied().fold(0.0, f64::max)
    }

    /// `sigma(1) = V* V`.
    pub fn mass(&self) -> CMatrix {
        CMatrix::from_inner(self.v.adjoint() * &self.v)
    }

    pub fn scale_v(&self, s: f64) -> Self {
        RealizedCP {
            v: &self.v * C64::new(s, 0.0),
            ..self.clone()
        }
    }

    /// `t * sigma`.
    pub fn scale(&self, t: f64) -> Self {
        assert!(t >= 0.0, "CP maps scale by non-negative factors");
        self.scale_v(t.sqrt())
    }

    pub fn is_zero(&self) -> bool {
        self.v.iter().all(|z| z.norm() == 0.0)
    }

    pub fn lift(&self, b: &CMatrix) -> CMatrix {
        b.kron(&CMatrix::identity(self.k))
    }

    /// `sigma[b_1 X b_2 .. X b_m] = V* (b_1 (x) 1) A (b_2 (x) 1) .. A (b_m (x) 1) V`, `m >= 1`.
    pub fn word(&self, word: &[CMatrix]) -> Result<CMatrix> {
        if word.is_empty() {
            return Err(Error::Invalid("sigma needs at least one coefficient".into()));
        }
        let level = word[0].dim() / self.d;
        for b in word {
            if b.dim() != level * self.d || b.dim() % self.d != 0 {
                return Err(Error::dim(level * self.d, b.dim()));
            }
        }
        let big_v = if level == 1 {
            self.v.clone()
        } else {
            DMatrix::<C64>::identity(level, level).kronecker(&self.v)
        };
        let a = self.a.amplify(level);
        let mut acc = self.lift(&word[0]);
        for b in &word[1..] {
            acc = &(&acc * &a) * &self.lift(b);
        }
        Ok(CMatrix::from_inner(big_v.adjoint() * acc.inner() * &big_v))
    }
}

/// `sigma[b_1 X .. X b_{n-1}]` at level 1.
pub fn sigma_eval(s: &RealizedCP, word: &[CMatrix]) -> Result<CMatrix> {
    for b in word {
        if b.dim() != s.d {
            return Err(Error::dim(s.d, b.dim()));
        }
    }
    s.word(word)
}

/// Result of a positivity test on the moment Gram matrix.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct CpReport {
    pub positive: bool,
    pub min_eigenvalue: f64,
    pub gram_dim: usize,
}

/// Block Gram matrix `[mu(R_a R_b*)]` over monomials `R = X c_1 X c_2 .. X c_j`,
/// `0 <= j <= degree`, with every `c` a matrix unit. The leading coefficient of a
/// polynomial factors out by bimodularity, so PSD of this matrix is the CP
/// condition up to X-degree `degree`.
pub fn cp_gram(t: &MomentTensor, degree: usize) -> Result<CMatrix> {
    if 2 * degree > t.order() {
        return Err(Error::Invalid(format!(
            "positivity up to degree {degree} needs order {} but tensor has {}",
            2 * degree,
            t.order()
        )));
    }
    let d = t.d;
    let dd = d * d;
    let units: Vec<CMatrix> = (0..dd).map(|e| CMatrix::unit(d, e / d, e % d)).collect();
    let mut monomials: Vec<Vec<usize>> = vec![Vec::new()];
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..degree {
        frontier = frontier
            .iter()
            .flat_map(|w| {
                (0..dd).map(move |e| {
                    let mut w = w.clone();
                    w.push(e);
                    w
                })
            })
            .collect();
        monomials.extend(frontier.iter().cloned());
    }
    let m = monomials.len();
    let mut gram = CMatrix::zeros(m * d);
    let id = CMatrix::identity(d);
    for (i, ra) in monomials.iter().enumerate() {
        for (j, rb) in monomials.iter().enumerate() {
            // R_a R_b* = X c_1 .. X (c_j c'_{j'}*) X c'_{j'-1}* .. X
            let block = match (ra.len(), rb.len()) {
                (0, 0) => id.clone(),
                (0, _) => {
                    let mut word = vec![units[*rb.last().unwrap()].adjoint()];
                    word.extend(rb[..rb.len() - 1].iter().rev().map(|&e| units[e].adjoint()));
                    word.push(id.clone());
                    t.eval_word(&word)
                }
                (_, 0) => {
                    let mut word = vec![id.clone()];
                    word.extend(ra.iter().map(|&e| units[e].clone()));
                    t.eval_word(&word)
                }
                _ => {
                    let mut inner: Vec<CMatrix> =
                        ra[..ra.len() - 1].iter().map(|&e| units[e].clone()).collect();
                    inner.push(&units[*ra.last().unwrap()] * &units[*rb.last().unwrap()].adjoint());
                    inner.extend(rb[..rb.len() - 1].iter().rev().map(|&e| units[e].adjoint()));
                    t.eval(&inner)
                }
            };
            gram.set_block(i, j, d, &block);
        }
    }
    Ok(gram)
}

/// PSD test of [`cp_gram`] with cut-off [`CP_TOL`].
pub fn cp_check(t: &MomentTensor, degree: usize) -> Result<CpReport> {
    let gram = cp_gram(t, degree)?;
    let min_eigenvalue = gram.min_hermitian_eigenvalue();
    Ok(CpReport {
        positive: min_eigenvalue >= -CP_TOL,
        min_eigenvalue,
        gram_dim: gram.dim(),
    })
}

/// Block Gram matrix `[sigma(Q_a Q_b*)]` over words `Q = c_0 X c_1 .. X c_j` with
/// matrix-unit coefficients, `0 <= j <= degree`; PSD iff `sigma` is CP on that degree.
pub fn sigma_gram(s: &RealizedCP, degree: usize) -> Result<CMatrix> {
    let d = s.d;
    let dd = d * d;
    let units: Vec<CMatrix> = (0..dd).map(|e| CMatrix::unit(d, e / d, e % d)).collect();
    let mut words: Vec<Vec<usize>> = Vec::new();
    let mut frontier: Vec<Vec<usize>> = (0..dd).map(|e| vec![e]).collect();
    words.extend(frontier.iter().cloned());
    for _ in 0..degree {
        frontier = frontier
            .iter()
            .flat_map(|w| {
                (0..dd).map(move |e| {
                    let mut w = w.clone();
                    w.push(e);
                    w
                })
            })
            .collect();
        words.extend(frontier.iter().cloned());
    }
    let m = words.len();
    let mut gram = CMatrix::zeros(m * d);
    for (i, qa) in words.iter().enumerate() {
        for (j, qb) in words.iter().enumerate() {
            let mut word: Vec<CMatrix> = qa[..qa.len() - 1].iter().map(|&e| units[e].clone()).collect();
            word.push(&units[*qa.last().unwrap()] * &units[*qb.last().unwrap()].adjoint());
            word.extend(qb[..qb.len() - 1].iter().rev().map(|&e| units[e].adjoint()));
            gram.set_block(i, j, d, &s.word(&word)?);
        }
    }
    Ok(gram)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_cp, random_distribution, random_matrix, rng};

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn symmetric_bernoulli_moments() {
        let r = RealizedDistribution::new(1, 2, CMatrix::diag(&[c(1.0), c(-1.0)]), State::Trace).unwrap();
        let m = moments_of(&r, 6).unwrap();
        for n in 1..=6 {
            let want = if n % 2 == 0 { 1.0 } else { 0.0 };
            assert!((m.map(n).basis_value(0).get(0, 0) - c(want)).norm() < 1e-15);
        }
    }

    #[test]
    fn zero_operator_gives_point_mass_at_zero() {
        let r = RealizedDistribution::new(1, 1, CMatrix::zeros(1), State::Trace).unwrap();
        let m = moments_of(&r, 5).unwrap();
        assert!(m.maps().iter().all(|t| t.max_abs() == 0.0));
    }

    #[test]
    fn trivial_state_reproduces_operator_words() {
        let mut g = rng(11);
        let a = crate::random::random_hermitian(&mut g, 2);
        let r = RealizedDistribution::new(2, 1, a.clone(), State::Trace).unwrap();
        let m = moments_of(&r, 4).unwrap();
        let b: Vec<CMatrix> = (0..3).map(|_| random_matrix(&mut g, 2)).collect();
        let want = &(&(&(&(&(&a * &b[0]) * &a) * &b[1]) * &a) * &b[2]) * &a;
        assert!(m.eval(&b).max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn moments_satisfy_exponential_bound_and_symmetry() {
        let mut g = rng(12);
        for _ in 0..5 {
            let r = random_distribution(&mut g, 2, 2, 1.5);
            let m = moments_of(&r, 5).unwrap();
            assert!(m.hermitian_defect() < 1e-12);
            let bound = r.bound();
            for n in 1..=5 {
                let b: Vec<CMatrix> = (0..n - 1)
                    .map(|_| crate::random::random_with_norm(&mut g, 2, 1.0))
                    .collect();
                assert!(m.eval(&b).op_norm() <= bound.powi(n) * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn moments_reject_large_order() {
        let r = RealizedDistribution::new(1, 1, CMatrix::zeros(1), State::Trace).unwrap();
        assert!(matches!(moments_of(&r, 9), Err(Error::Size { .. })));
    }

    #[test]
    fn sigma_eval_examples() {
        let s = RealizedCP::new(1, 1, CMatrix::zeros(1), vec![vec![c(1.0)]]).unwrap();
        let b = CMatrix::scalar(1, c(2.5));
        assert!(sigma_eval(&s, std::slice::from_ref(&b)).unwrap().max_abs_diff(&b) < 1e-15);
        assert!(sigma_eval(&s, &[b.clone(), b.clone()]).unwrap().max_abs() < 1e-15);

        let s = RealizedCP::new(1, 1, CMatrix::scalar(1, c(0.7)), vec![vec![c(1.0)]]).unwrap();
        let one = CMatrix::identity(1);
        assert!((sigma_eval(&s, &[one.clone(), one]).unwrap().get(0, 0) - c(0.7)).norm() < 1e-15);

        assert!(sigma_eval(&s, &[CMatrix::identity(2)]).is_err());
    }

    #[test]
    fn sigma_gram_is_psd() {
        let mut g = rng(13);
        let s = random_cp(&mut g, 2, 2, 1.0, 1.0);
        let gram = sigma_gram(&s, 2).unwrap();
        assert!(gram.min_hermitian_eigenvalue() > -1e-10);
    }

    #[test]
    fn cp_check_accepts_realized_and_rejects_negative_variance() {
        let mut g = rng(14);
        let r = random_distribution(&mut g, 2, 2, 1.0);
        let m = moments_of(&r, 6).unwrap();
        assert!(cp_check(&m, 3).unwrap().positive);

        let maps = vec![
            Multilinear::constant(&CMatrix::zeros(1)),
            Multilinear::from_data(1, 1, vec![c(-1.0)]),
        ];
        let bad = MomentTensor::new(1, maps).unwrap();
        let rep = cp_check(&bad, 1).unwrap();
        assert!(!rep.positive);
        assert!((rep.min_eigenvalue + 1.0).abs() < 1e-12);

        assert!(cp_check(&bad, 2).is_err());
    }
}
