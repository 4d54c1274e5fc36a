//! Seeded generators for randomized inputs.
//!
//! One 64-bit seed drives everything; independent streams are split off
//! with [`split`] so results never depend on evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dist::{MomentTensor, RealizedCP, RealizedDistribution, State};
use crate::matalg::{CMatrix, C64};
use crate::tensor::Multilinear;

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` derived from `seed`.
pub fn split(seed: u64, stream: u64) -> SeededRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn uniform_c64(r: &mut impl Rng) -> C64 {
    C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))
}

pub fn random_matrix(r: &mut impl Rng, dim: usize) -> CMatrix {
    CMatrix::from_fn(dim, |_, _| uniform_c64(r))
}

pub fn random_hermitian(r: &mut impl Rng, dim: usize) -> CMatrix {
    random_matrix(r, dim).real_part()
}

/// Random matrix of operator norm `norm`.
pub fn random_with_norm(r: &mut impl Rng, dim: usize, norm: f64) -> CMatrix {
    let m = random_matrix(r, dim);
    let n = m.op_norm().max(1e-300);
    m.scale_re(norm / n)
}

pub fn random_unit_vector(r: &mut impl Rng, dim: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..dim).map(|_| uniform_c64(r)).collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / n).collect()
}

/// Tensor `m_1..m_order` with independent uniform entries, not necessarily a distribution.
pub fn random_tensor(r: &mut impl Rng, d: usize, order: usize) -> MomentTensor {
    let dd = d * d;
    let maps = (0..order)
        .map(|arity| {
            let data = (0..dd.pow(arity as u32 + 1)).map(|_| uniform_c64(r)).collect();
            Multilinear::from_data(d, arity, data)
        })
        .collect();
    MomentTensor::new(d, maps).expect("consistent dimensions")
}

/// Random CP map `sigma(P) = V* pi(P) V` with `||A|| <= a_norm`, `||V|| <= v_norm`.
pub fn random_cp(r: &mut impl Rng, d: usize, k: usize, a_norm: f64, v_norm: f64) -> RealizedCP {
    let a = random_hermitian(r, d * k);
    let a = a.scale_re(a_norm / a.op_norm().max(1e-300));
    let v: Vec<Vec<C64>> = (0..d * k)
        .map(|_| (0..d).map(|_| uniform_c64(r)).collect())
        .collect();
    let cp = RealizedCP::new(d, k, a, v).expect("consistent dimensions");
    let norm = cp.v_norm();
    cp.scale_v(v_norm / norm.max(1e-300))
}

/// Random realized distribution with `||A|| <= a_norm`; alternates trace and vector states.
pub fn random_distribution(r: &mut impl Rng, d: usize, k: usize, a_norm: f64) -> RealizedDistribution {
    let a = random_hermitian(r, d * k);
    let a = a.scale_re(a_norm / a.op_norm().max(1e-300));
    let state = if r.gen_bool(0.5) {
        State::Trace
    } else {
        State::Vector(random_unit_vector(r, k))
    };
    RealizedDistribution::new(d, k, a, state).expect("consistent dimensions")
}
