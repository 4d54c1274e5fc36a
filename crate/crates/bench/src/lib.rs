//! Fixed inputs shared by the benchmarks.

use ncprob::random::{random_cp, random_hermitian, random_tensor, rng};
use ncprob::{Generator, MomentTensor};

pub const SEED: u64 = 0x5eed;

pub fn moments(d: usize, order: usize) -> MomentTensor {
    random_tensor(&mut rng(SEED), d, order)
}

pub fn generator(d: usize) -> Generator {
    let mut r = rng(SEED);
    let gamma = random_hermitian(&mut r, d);
    let sigma = random_cp(&mut r, d, 2, 0.5, 0.8);
    Generator::new(gamma, sigma).expect("valid generator")
}
