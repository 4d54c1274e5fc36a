//! Dense multilinear maps `(M_d)^a -> M_d`.
//!
//! Each slot is expanded on the matrix-unit basis `E_{rs}`, indexed `e = r*d + s`.
//! The coefficient of `E_{e_1} x ... x E_{e_a}` is a `d x d` matrix stored
//! row-major, and the flat layout is `((e_1*D + e_2)*D + ... + e_a)*D + out`
//! with `D = d^2`: the first slot varies slowest.

use rayon::prelude::*;

use crate::matalg::{CMatrix, C64};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
pub struct Multilinear {
    d: usize,
    arity: usize,
    data: Vec<C64>,
}

fn pow(base: usize, e: usize) -> usize {
    base.pow(e as u32)
}

impl Multilinear {
    pub fn zero(d: usize, arity: usize) -> Self {
        Multilinear {
            d,
            arity,
            data: vec![ZERO; pow(d * d, arity + 1)],
        }
    }

    pub(crate) fn from_data(d: usize, arity: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), pow(d * d, arity + 1));
        Multilinear { d, arity, data }
    }

    /// Arity-0 map with the given value.
    pub fn constant(m: &CMatrix) -> Self {
        Multilinear {
            d: m.dim(),
            arity: 0,
            data: m.row_major(),
        }
    }

    /// `b |-> b`.
    pub fn identity(d: usize) -> Self {
        let dd = d * d;
        let mut data = vec![ZERO; dd * dd];
        for e in 0..dd {
            data[e * dd + e] = ONE;
        }
        Multilinear { d, arity: 1, data }
    }

    /// Builds the map from its values on basis tuples.
    pub fn from_basis_fn<F>(d: usize, arity: usize, f: F) -> Self
    where
        F: Fn(&[CMatrix]) -> CMatrix + Sync,
    {
        let dd = d * d;
        let units: Vec<CMatrix> = (0..dd).map(|e| CMatrix::unit(d, e / d, e % d)).collect();
        let tuples = pow(dd, arity);
        let blocks: Vec<Vec<C64>> = (0..tuples)
            .into_par_iter()
            .map(|t| {
                let args: Vec<CMatrix> = decode(t, dd, arity)
                    .into_iter()
                    .map(|e| units[e].clone())
                    .collect();
                f(&args).row_major()
            })
            .collect();
        Multilinear {
            d,
            arity,
            data: blocks.concat(),
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn num_tuples(&self) -> usize {
        pow(self.d * self.d, self.arity)
    }

    /// Value on the basis tuple with flat index `t`.
    pub fn basis_value(&self, t: usize) -> CMatrix {
        let dd = self.d * self.d;
        let block = &self.data[t * dd..(t + 1) * dd];
        CMatrix::from_fn(self.d, |r, s| block[r * self.d + s])
    }

    pub fn basis_values(&self) -> impl Iterator<Item = CMatrix> + '_ {
        (0..self.num_tuples()).map(|t| self.basis_value(t))
    }

    /// Evaluates at arbitrary matrices by contracting one slot at a time.
    pub fn eval(&self, args: &[CMatrix]) -> CMatrix {
        assert_eq!(args.len(), self.arity, "wrong number of arguments");
        let dd = self.d * self.d;
        let mut cur: Vec<C64> = self.data.clone();
        for a in args {
            debug_assert_eq!(a.dim(), self.d);
            let coeffs = a.row_major();
            let block = cur.len() / dd;
            let mut next = vec![ZERO; block];
            for (e, &w) in coeffs.iter().enumerate() {
                if w == ZERO {
                    continue;
                }
                let src = &cur[e * block..(e + 1) * block];
                for (x, &y) in next.iter_mut().zip(src) {
                    *x += w * y;
                }
            }
            cur = next;
        }
        CMatrix::from_fn(self.d, |r, s| cur[r * self.d + s])
    }

    /// Evaluates `self (x) id_n` at matrices in `M_n(M_d)`, given as `nd x nd` block matrices.
    pub fn eval_amplified(&self, args: &[CMatrix]) -> CMatrix {
        assert_eq!(args.len(), self.arity, "wrong number of arguments");
        if args.iter().all(|a| a.dim() == self.d) && self.arity > 0 {
            return self.eval(args);
        }
        let d = self.d;
        let dd = d * d;
        let n = args.first().map_or(1, |a| a.dim() / d);
        // states[p][i]: coefficients left after walking the path p -> .. -> i
        let mut states: Vec<Vec<Option<Vec<C64>>>> = (0..n)
            .map(|p| (0..n).map(|i| (i == p).then(|| self.data.clone())).collect())
            .collect();
        for a in args {
            debug_assert_eq!(a.dim(), n * d);
            let blocks: Vec<Vec<Vec<C64>>> = (0..n)
                .map(|i| (0..n).map(|j| a.block(i, j, d).row_major()).collect())
                .collect();
            states = states
                .iter()
                .map(|row| {
                    (0..n)
                        .map(|j| {
                            let mut acc: Option<Vec<C64>> = None;
                            for (i, st) in row.iter().enumerate() {
                                let Some(st) = st else { continue };
                                let coeffs = &blocks[i][j];
                                if coeffs.iter().all(|&w| w == ZERO) {
                                    continue;
                                }
                                let block = st.len() / dd;
                                let next = acc.get_or_insert_with(|| vec![ZERO; block]);
                                for (e, &w) in coeffs.iter().enumerate() {
                                    if w == ZERO {
                                        continue;
                                    }
                                    let src = &st[e * block..(e + 1) * block];
                                    for (x, &y) in next.iter_mut().zip(src) {
                                        *x += w * y;
                                    }
                                }
                            }
                            acc
                        })
                        .collect()
                })
                .collect();
        }
        let mut out = CMatrix::zeros(n * d);
        for (p, row) in states.iter().enumerate() {
            for (q, st) in row.iter().enumerate() {
                if let Some(st) = st {
                    out.set_block(p, q, d, &CMatrix::from_fn(d, |r, s| st[r * d + s]));
                }
            }
        }
        out
    }

    /// Fixes slot `pos` to the matrix `m`, lowering the arity by one.
    pub fn fix_slot(&self, pos: usize, m: &CMatrix) -> Self {
        assert!(pos < self.arity);
        let dd = self.d * self.d;
        let outer = pow(dd, pos);
        let inner = pow(dd, self.arity - pos - 1) * dd;
        let coeffs = m.row_major();
        let mut data = vec![ZERO; outer * inner];
        for o in 0..outer {
            let dst = &mut data[o * inner..(o + 1) * inner];
            for (e, &w) in coeffs.iter().enumerate() {
                if w == ZERO {
                    continue;
                }
                let src = &self.data[(o * dd + e) * inner..(o * dd + e + 1) * inner];
                for (x, &y) in dst.iter_mut().zip(src) {
                    *x += w * y;
                }
            }
        }
        Multilinear {
            d: self.d,
            arity: self.arity - 1,
            data,
        }
    }

    /// Replaces slot `pos` by the multilinear map `inner`:
    /// `(x.., y.., z..) |-> self(x.., inner(y..), z..)`.
    pub fn substitute(&self, pos: usize, inner: &Multilinear) -> Self {
        assert!(pos < self.arity);
        assert_eq!(self.d, inner.d);
        let dd = self.d * self.d;
        let head = pow(dd, pos);
        let tail = pow(dd, self.arity - pos - 1) * dd;
        let mid = inner.num_tuples();
        let mut data = vec![ZERO; head * mid * tail];
        data.par_chunks_mut(mid * tail)
            .enumerate()
            .for_each(|(h, dst)| {
                for y in 0..mid {
                    let coeffs = &inner.data[y * dd..(y + 1) * dd];
                    let out = &mut dst[y * tail..(y + 1) * tail];
                    for (f, &w) in coeffs.iter().enumerate() {
                        if w == ZERO {
                            continue;
                        }
                        let src = &self.data[(h * dd + f) * tail..(h * dd + f + 1) * tail];
                        for (x, &v) in out.iter_mut().zip(src) {
                            *x += w * v;
                        }
                    }
                }
            });
        Multilinear {
            d: self.d,
            arity: self.arity - 1 + inner.arity,
            data,
        }
    }

    /// `self(inners[0](..), inners[1](..), ...)` with argument lists concatenated.
    pub fn compose(&self, inners: &[&Multilinear]) -> Self {
        assert_eq!(inners.len(), self.arity);
        let mut out = self.clone();
        let mut pos = 0;
        for inner in inners {
            out = out.substitute(pos, inner);
            pos += inner.arity;
        }
        out
    }

    /// `(x.., y..) |-> self(x..) * other(y..)`.
    pub fn product(&self, other: &Multilinear) -> Self {
        assert_eq!(self.d, other.d);
        let d = self.d;
        let dd = d * d;
        let (na, nb) = (self.num_tuples(), other.num_tuples());
        let mut data = vec![ZERO; na * nb * dd];
        data.par_chunks_mut(nb * dd).enumerate().for_each(|(x, dst)| {
            let a = &self.data[x * dd..(x + 1) * dd];
            for y in 0..nb {
                let b = &other.data[y * dd..(y + 1) * dd];
                let out = &mut dst[y * dd..(y + 1) * dd];
                for r in 0..d {
                    for t in 0..d {
                        let w = a[r * d + t];
                        if w == ZERO {
                            continue;
                        }
                        for s in 0..d {
                            out[r * d + s] += w * b[t * d + s];
                        }
                    }
                }
            }
        });
        Multilinear {
            d,
            arity: self.arity + other.arity,
            data,
        }
    }

    /// `(x, y.., z) |-> x * self(y..) * z`.
    pub fn sandwich(&self) -> Self {
        let d = self.d;
        let dd = d * d;
        let n = self.num_tuples();
        let mut data = vec![ZERO; dd * n * dd * dd];
        // E_{r1 s1} M E_{r2 s2} = M[s1, r2] E_{r1 s2}
        for r1 in 0..d {
            for s1 in 0..d {
                let e1 = r1 * d + s1;
                for y in 0..n {
                    let m = &self.data[y * dd..(y + 1) * dd];
                    for r2 in 0..d {
                        for s2 in 0..d {
                            let e2 = r2 * d + s2;
                            let idx = ((e1 * n + y) * dd + e2) * dd + r1 * d + s2;
                            data[idx] = m[s1 * d + r2];
                        }
                    }
                }
            }
        }
        Multilinear {
            d,
            arity: self.arity + 2,
            data,
        }
    }

    /// Applies `f` to every output matrix.
    pub fn map_outputs(&self, f: impl Fn(&CMatrix) -> CMatrix) -> Self {
        let dd = self.d * self.d;
        let mut data = Vec::with_capacity(self.data.len());
        for t in 0..self.num_tuples() {
            let v = f(&self.basis_value(t));
            debug_assert_eq!(v.dim(), self.d);
            data.extend(v.row_major());
        }
        debug_assert_eq!(data.len(), self.num_tuples() * dd);
        Multilinear {
            d: self.d,
            arity: self.arity,
            data,
        }
    }

    pub fn scale(&self, z: C64) -> Self {
        Multilinear {
            d: self.d,
            arity: self.arity,
            data: self.data.iter().map(|&x| x * z).collect(),
        }
    }

    pub fn scale_re(&self, x: f64) -> Self {
        self.scale(C64::new(x, 0.0))
    }

    pub fn add_assign_scaled(&mut self, other: &Multilinear, w: C64) {
        assert_eq!(self.arity, other.arity);
        assert_eq!(self.d, other.d);
        for (x, &y) in self.data.iter_mut().zip(&other.data) {
            *x += w * y;
        }
    }

    pub fn add(&self, other: &Multilinear) -> Self {
        let mut out = self.clone();
        out.add_assign_scaled(other, ONE);
        out
    }

    pub fn sub(&self, other: &Multilinear) -> Self {
        let mut out = self.clone();
        out.add_assign_scaled(other, -ONE);
        out
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&z| z == ZERO)
    }

    /// Largest coefficient modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Multilinear) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Largest operator norm over basis tuples.
    pub fn max_basis_op_norm(&self) -> f64 {
        (0..self.num_tuples())
            .into_par_iter()
            .map(|t| self.basis_value(t).op_norm())
            .reduce(|| 0.0, f64::max)
    }
}

/// Basis indices of tuple `t` (first slot slowest).
pub(crate) fn decode(mut t: usize, dd: usize, arity: usize) -> Vec<usize> {
    let mut out = vec![0; arity];
    for slot in (0..arity).rev() {
        out[slot] = t % dd;
        t /= dd;
    }
    out
}
