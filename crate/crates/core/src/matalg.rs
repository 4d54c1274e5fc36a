//! Complex square matrices standing in for elements of `M_n(M_d(C))`.
//!
//! Amplification convention: an element of `M_n(M_d)` is stored as an
//! `nd x nd` matrix whose entry `((i,p),(j,q))` lives at row `i*d + p`,
//! column `j*d + q`. The level index is the slow one, so direct sums are
//! block diagonal and `m (x) 1_n` is `diag(m, ..., m)`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Tolerance used by every positive-definiteness decision.
pub const PD_TOL: f64 = 1e-10;


/// A square complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMatrix(DMatrix<C64>);

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CMatrix{:?}", self.rows())
    }
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        CMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        CMatrix(DMatrix::identity(dim, dim))
    }

    pub fn scalar(dim: usize, z: C64) -> Self {
        CMatrix(DMatrix::from_diagonal_element(dim, dim, z))
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        CMatrix(DMatrix::from_fn(dim, dim, f))
    }

    /// Row-major construction.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Invalid("empty matrix".into()));
        }
        for r in rows {
            if r.len() != n {
                return Err(Error::dim(n, r.len()));
            }
        }
        let m = Self::from_fn(n, |r, c| rows[r][c]);
        if !m.is_finite() {
            return Err(Error::Invalid("matrix has non-finite entries".into()));
        }
        Ok(m)
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn diag(entries: &[C64]) -> Self {
        let n = entries.len();
        Self::from_fn(n, |r, c| if r == c { entries[r] } else { C64::new(0.0, 0.0) })
    }

    /// The matrix unit `E_{rs}`.
    pub fn unit(dim: usize, r: usize, s: usize) -> Self {
        let mut m = Self::zeros(dim);
        m.0[(r, s)] = C64::new(1.0, 0.0);
        m
    }

    pub(crate) fn from_inner(m: DMatrix<C64>) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        CMatrix(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn inner(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.0[(r, c)]
    }

    pub fn set(&mut self, r: usize, c: usize, z: C64) {
        self.0[(r, c)] = z;
    }

    pub fn rows(&self) -> Vec<Vec<C64>> {
        (0..self.dim())
            .map(|r| (0..self.dim()).map(|c| self.0[(r, c)]).collect())
            .collect()
    }

    /// Entries in row-major order.
    pub fn row_major(&self) -> Vec<C64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                out.push(self.0[(r, c)]);
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> Self {
        CMatrix(self.0.adjoint())
    }

    pub fn transpose(&self) -> Self {
        CMatrix(self.0.transpose())
    }

    pub fn scale(&self, z: C64) -> Self {
        CMatrix(&self.0 * z)
    }

    pub fn scale_re(&self, x: f64) -> Self {
        self.scale(C64::new(x, 0.0))
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// `(b - b*) / 2i`.
    pub fn imag_part(&self) -> Self {
        CMatrix((&self.0 - self.0.adjoint()) * C64::new(0.0, -0.5))
    }

    /// `(b + b*) / 2`.
    pub fn real_part(&self) -> Self {
        CMatrix((&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0))
    }

    pub fn hermitian_defect(&self) -> f64 {
        (&self.0 - self.0.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_defect() <= tol
    }

    /// Eigenvalues of the Hermitian part `(b + b*)/2`, ascending.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let h = self.real_part();
        let mut ev: Vec<f64> = h.0.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    pub fn min_hermitian_eigenvalue(&self) -> f64 {
        self.hermitian_eigenvalues()[0]
    }

    /// Largest singular value.
    pub fn op_norm(&self) -> f64 {
        if self.dim() == 1 {
            return self.0[(0, 0)].norm();
        }
        self.0
            .singular_values()
            .iter()
            .copied()
            .fold(0.0, f64::max)
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn inverse(&self) -> Result<Self> {
        if self.dim() == 1 {
            let z = self.0[(0, 0)];
            if z.norm() == 0.0 {
                return Err(Error::Numerical("singular matrix".into()));
            }
            return Ok(CMatrix::scalar(1, z.inv()));
        }
        let inv = self
            .0
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular matrix".into()))?;
        let out = CMatrix(inv);
        if !out.is_finite() {
            return Err(Error::Numerical("inverse has non-finite entries".into()));
        }
        Ok(out)
    }

    pub fn kron(&self, other: &CMatrix) -> Self {
        CMatrix(self.0.kronecker(&other.0))
    }

    /// `self (x) 1_n` at level `n`: block diagonal with `n` copies.
    pub fn amplify(&self, n: usize) -> Self {
        CMatrix::identity(n).kron(self)
    }

    /// Block `(i, j)` of size `bs`.
    pub fn block(&self, i: usize, j: usize, bs: usize) -> Self {
        CMatrix(self.0.view((i * bs, j * bs), (bs, bs)).into_owned())
    }

    pub fn set_block(&mut self, i: usize, j: usize, bs: usize, m: &CMatrix) {
        self.0.view_mut((i * bs, j * bs), (bs, bs)).copy_from(&m.0);
    }

    pub fn direct_sum(&self, other: &CMatrix) -> Self {
        let (a, b) = (self.dim(), other.dim());
        let mut out = DMatrix::zeros(a + b, a + b);
        out.view_mut((0, 0), (a, a)).copy_from(&self.0);
        out.view_mut((a, a), (b, b)).copy_from(&other.0);
        CMatrix(out)
    }

    pub fn dist(&self, other: &CMatrix) -> f64 {
        (self - other).op_norm()
    }

    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        (self - other).max_abs()
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 + &rhs.0)
    }
}

impl Add for CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: CMatrix) -> CMatrix {
        CMatrix(self.0 + rhs.0)
    }
}

impl AddAssign<&CMatrix> for CMatrix {
    fn add_assign(&mut self, rhs: &CMatrix) {
        self.0 += &rhs.0;
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 - &rhs.0)
    }
}

impl Sub for CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: CMatrix) -> CMatrix {
        CMatrix(self.0 - rhs.0)
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 * &rhs.0)
    }
}

impl Mul for CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: CMatrix) -> CMatrix {
        CMatrix(self.0 * rhs.0)
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        CMatrix(-&self.0)
    }
}

impl Neg for CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        CMatrix(-self.0)
    }
}

/// `Im(b) - eps` is positive definite (with [`PD_TOL`] slack on the strict side).
pub fn in_upper_half_plane(b: &CMatrix, epsilon: f64) -> bool {
    b.imag_part().min_hermitian_eigenvalue() - epsilon > PD_TOL
}

/// Membership in the Stolz angle: `Im b > eps` and `Im b > alpha Re b`.
pub fn in_stolz_angle(b: &CMatrix, alpha: f64, epsilon: f64) -> bool {
    if !in_upper_half_plane(b, epsilon) {
        return false;
    }
    let gap = &b.imag_part() - &b.real_part().scale_re(alpha);
    gap.min_hermitian_eigenvalue() > PD_TOL
}

/// `Im b > eps` forces `||b^{-1}|| <= 1/eps`; returns whether that holds numerically.
pub fn inverse_norm_bound_check(b: &CMatrix, epsilon: f64) -> Result<bool> {
    if !in_upper_half_plane(b, epsilon) {
        return Err(Error::Domain(format!(
            "Im(b) is not above {epsilon} (precondition)"
        )));
    }
    let inv = b.inverse()?;
    Ok(inv.op_norm() <= (1.0 / epsilon) * (1.0 + 1e-12))
}

/// Point of the matrix upper half-plane at amplification level `level` over `M_d`.
#[derive(Clone, Debug)]
pub struct HalfPlanePoint {
    value: CMatrix,
    level: usize,
    base_dim: usize,
}

impl HalfPlanePoint {
    pub fn new(value: CMatrix, base_dim: usize) -> Result<Self> {
        if base_dim == 0 || !value.dim().is_multiple_of(base_dim) {
            return Err(Error::dim(base_dim, value.dim()));
        }
        if !in_upper_half_plane(&value, 0.0) {
            return Err(Error::Domain("Im(b) is not positive definite".into()));
        }
        Ok(HalfPlanePoint {
            level: value.dim() / base_dim,
            value,
            base_dim,
        })
    }

    /// `i * lambda * 1`.
    pub fn scalar_imag(lambda: f64, base_dim: usize, level: usize) -> Result<Self> {
        Self::new(CMatrix::scalar(base_dim * level, C64::new(0.0, lambda)), base_dim)
    }

    pub fn value(&self) -> &CMatrix {
        &self.value
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    /// Smallest eigenvalue of `Im b`.
    pub fn imag_floor(&self) -> f64 {
        self.value.imag_part().min_hermitian_eigenvalue()
    }
}

/// JSON matrix format: `{ "dim": n, "re": [[..]], "im": [[..]] }`, row-major.
/// A missing `im` means a real matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixJson {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Vec<Vec<f64>>,
}

impl From<&CMatrix> for MatrixJson {
    fn from(m: &CMatrix) -> Self {
        let rows = m.rows();
        MatrixJson {
            dim: m.dim(),
            re: rows.iter().map(|r| r.iter().map(|z| z.re).collect()).collect(),
            im: rows.iter().map(|r| r.iter().map(|z| z.im).collect()).collect(),
        }
    }
}

impl TryFrom<&MatrixJson> for CMatrix {
    type Error = Error;

    fn try_from(j: &MatrixJson) -> Result<Self> {
        if j.im.is_empty() && j.re.len() == j.dim {
            let zero = vec![vec![0.0; j.dim]; j.dim];
            return CMatrix::try_from(&MatrixJson { dim: j.dim, re: j.re.clone(), im: zero });
        }
        if j.re.len() != j.dim || j.im.len() != j.dim {
            return Err(Error::Invalid(format!(
                "matrix declares dim {} but has {} re rows and {} im rows",
                j.dim,
                j.re.len(),
                j.im.len()
            )));
        }
        let mut rows = Vec::with_capacity(j.dim);
        for (r, (re, im)) in j.re.iter().zip(&j.im).enumerate() {
            if re.len() != j.dim || im.len() != j.dim {
                return Err(Error::Invalid(format!("matrix row {r} has wrong length")));
            }
            rows.push(re.iter().zip(im).map(|(&a, &b)| C64::new(a, b)).collect());
        }
        CMatrix::from_rows(&rows)
    }
}

impl Serialize for CMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for CMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = MatrixJson::deserialize(d)?;
        CMatrix::try_from(&j).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    const I: C64 = C64::new(0.0, 1.0);

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn imag_part_of_scalar_i_is_identity() {
        let b = CMatrix::scalar(2, I);
        assert!(b.imag_part().max_abs_diff(&CMatrix::identity(2)) < 1e-15);
    }

    #[test]
    fn imag_part_of_upper_triangular() {
        let b = CMatrix::from_rows(&[vec![c(0.0, 2.0), c(1.0, 0.0)], vec![c(0.0, 0.0), c(0.0, 2.0)]])
            .unwrap();
        let im = b.imag_part();
        // (b - b*)/2i: off-diagonal 1/(2i) = -i/2 and its conjugate
        let want = CMatrix::from_rows(&[vec![c(2.0, 0.0), c(0.0, -0.5)], vec![c(0.0, 0.5), c(2.0, 0.0)]])
            .unwrap();
        assert!(im.max_abs_diff(&want) < 1e-15);
        assert!(im.is_hermitian(1e-14));
    }

    #[test]
    fn imag_part_of_real_symmetric_vanishes() {
        let b = CMatrix::from_real_rows(&[vec![1.0, 3.0], vec![3.0, -2.0]]).unwrap();
        assert!(b.imag_part().max_abs() < 1e-15);
    }

    #[test]
    fn half_plane_membership() {
        assert!(in_upper_half_plane(&CMatrix::scalar(3, I), 0.5));
        assert!(!in_upper_half_plane(
            &CMatrix::diag(&[c(1.0, 0.0), c(-2.0, 0.0)]),
            0.0
        ));
        let b = CMatrix::from_rows(&[vec![c(0.0, 0.1), c(0.0, 1.0)], vec![c(0.0, 1.0), c(0.0, 0.1)]])
            .unwrap();
        // Im(b) = [[0.1, 1], [1, 0.1]] has eigenvalue -0.9
        assert!(!in_upper_half_plane(&b, 0.0));
    }

    #[test]
    fn stolz_angle_examples() {
        assert!(in_stolz_angle(&CMatrix::scalar(2, c(0.0, 5.0)), 1.0, 0.1));
        assert!(!in_stolz_angle(&CMatrix::scalar(1, c(5.0, 0.2)), 1.0, 0.1));
        assert!(in_stolz_angle(&CMatrix::scalar(1, c(-3.0, 4.0)), 1.0, 1.0));
    }

    #[test]
    fn inverse_norm_bound_examples() {
        assert!(inverse_norm_bound_check(&CMatrix::scalar(1, c(0.0, 2.0)), 1.0).unwrap());
        let eps = 0.3;
        let b = CMatrix::scalar(2, c(0.0, eps * (1.0 + 1e-6)));
        assert!(inverse_norm_bound_check(&b, eps).unwrap());
        assert!(inverse_norm_bound_check(&CMatrix::scalar(2, c(0.0, eps)), eps).is_err());
    }

    #[test]
    fn amplify_is_block_diagonal() {
        let g = CMatrix::from_rows(&[vec![c(1.0, 0.0), c(2.0, 1.0)], vec![c(2.0, -1.0), c(0.5, 0.0)]])
            .unwrap();
        let a = g.amplify(2);
        assert_eq!(a.dim(), 4);
        assert!(a.max_abs_diff(&g.direct_sum(&g)) == 0.0);
        assert!(CMatrix::identity(3).amplify(4).max_abs_diff(&CMatrix::identity(12)) == 0.0);
    }

    #[test]
    fn matrix_json_round_trip() {
        let g = CMatrix::from_rows(&[vec![c(1.0, 0.25), c(2.0, 1.0)], vec![c(0.0, -1.0), c(0.5, 0.0)]])
            .unwrap();
        let s = serde_json::to_string(&g).unwrap();
        let back: CMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        let bad = r#"{"dim":2,"re":[[1,2]],"im":[[0,0]]}"#;
        assert!(serde_json::from_str::<CMatrix>(bad).is_err());
    }
}
