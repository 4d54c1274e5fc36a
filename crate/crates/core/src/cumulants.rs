//! Moment-cumulant transforms for the classical, free, Boolean and monotone
//! species, nested evaluation of `K_pi`, and the `nu^{gamma,sigma}` laws.

use std::collections::HashMap;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{MomentTensor, RealizedCP, MAX_ORDER};
use crate::error::{Error, Result};
use crate::matalg::{CMatrix, C64};
use crate::partitions::{enumerate, order_count, Partition, PartitionClass};
use crate::tensor::Multilinear;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Species {
    Classical,
    Free,
    Boolean,
    Monotone,
}

impl Species {
    pub const ALL: [Species; 4] = [
        Species::Classical,
        Species::Free,
        Species::Boolean,
        Species::Monotone,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Species::Classical => "classical",
            Species::Free => "free",
            Species::Boolean => "boolean",
            Species::Monotone => "monotone",
        }
    }

    pub fn lattice(self) -> PartitionClass {
        match self {
            Species::Classical => PartitionClass::All,
            Species::Free | Species::Monotone => PartitionClass::NonCrossing,
            Species::Boolean => PartitionClass::Interval,
        }
    }

    /// Weight of `p` in the moment-cumulant sum; `o(p)/|p|!` for monotone.
    pub fn weight(self, p: &Partition) -> Result<Ratio<u64>> {
        if !p.belongs_to(self.lattice()) {
            return Err(Error::UnsupportedStructure(format!(
                "{p:?} is not in the {} lattice",
                self.name()
            )));
        }
        Ok(match self {
            Species::Monotone => {
                let fact: u64 = (1..=p.num_blocks() as u64).product();
                Ratio::new(order_count(p)?, fact)
            }
            _ => Ratio::from_integer(1),
        })
    }
}

impl std::str::FromStr for Species {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Species::ALL
            .into_iter()
            .find(|sp| sp.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown species '{s}'")))
    }
}

impl std::fmt::Display for Species {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn to_f64(w: Ratio<u64>) -> f64 {
    *w.numer() as f64 / *w.denom() as f64
}

/// Cumulant maps `c_n`, `1 <= n <= N`, stored like a [`MomentTensor`].
#[derive(Clone, Debug, PartialEq)]
pub struct CumulantTensor {
    species: Species,
    maps: MomentTensor,
}

impl CumulantTensor {
    pub fn new(species: Species, d: usize, maps: Vec<Multilinear>) -> Result<Self> {
        check_species_dim(species, d)?;
        Ok(CumulantTensor {
            species,
            maps: MomentTensor::new(d, maps)?,
        })
    }

    /// `c_1 = gamma`, `c_n(b_1..b_{n-1}) = sigma[b_1 X .. X b_{n-1}]`.
    pub fn from_cp(gamma: &CMatrix, sigma: &RealizedCP, species: Species, order: usize) -> Result<Self> {
        let d = gamma.dim();
        if sigma.d() != d {
            return Err(Error::dim(d, sigma.d()));
        }
        if order == 0 || order > MAX_ORDER {
            return Err(Error::size("truncation order", order, 1, MAX_ORDER));
        }
        let mut maps = vec![Multilinear::constant(gamma)];
        for n in 2..=order {
            maps.push(Multilinear::from_basis_fn(d, n - 1, |args| {
                sigma.word(args).expect("dimensions checked")
            }));
        }
        CumulantTensor::new(species, d, maps)
    }

    pub fn species(&self) -> Species {
        self.species
    }

    pub fn d(&self) -> usize {
        self.maps.d()
    }

    pub fn order(&self) -> usize {
        self.maps.order()
    }

    pub fn map(&self, n: usize) -> &Multilinear {
        self.maps.map(n)
    }

    pub fn maps(&self) -> &[Multilinear] {
        self.maps.maps()
    }

    pub fn as_tensor(&self) -> &MomentTensor {
        &self.maps
    }

    /// Coefficient-wise sum; both tensors must share species, `d` and `N`.
    pub fn add(&self, other: &CumulantTensor) -> Result<Self> {
        if self.species != other.species {
            return Err(Error::Invalid("cumulants of different species".into()));
        }
        self.maps.check_compatible(&other.maps)?;
        let maps = self
            .maps()
            .iter()
            .zip(other.maps())
            .map(|(a, b)| a.add(b))
            .collect();
        CumulantTensor::new(self.species, self.d(), maps)
    }

    /// Applies `f` to every output of every `c_n`.
    pub fn map_outputs(&self, f: impl Fn(&CMatrix) -> CMatrix + Copy) -> Self {
        let maps = self.maps().iter().map(|m| m.map_outputs(f)).collect();
        CumulantTensor {
            species: self.species,
            maps: MomentTensor::new(self.d(), maps).expect("shape preserved"),
        }
    }

    pub fn scale_re(&self, t: f64) -> Self {
        self.map_outputs(|m| m.scale_re(t))
    }
}

fn check_species_dim(species: Species, d: usize) -> Result<()> {
    if species == Species::Classical && d != 1 {
        return Err(Error::Unsupported(
            "classical cumulants are only defined for d = 1".into(),
        ));
    }
    Ok(())
}

fn check_partition(c: &CumulantTensor, p: &Partition) -> Result<()> {
    check_species_dim(c.species, c.d())?;
    if c.species != Species::Classical && !p.is_noncrossing() {
        return Err(Error::UnsupportedStructure(format!(
            "{p:?} is crossing; only the classical species evaluates it"
        )));
    }
    if let Some(big) = p.blocks().iter().map(Vec::len).max() {
        if big > c.order() {
            return Err(Error::size("block size", big, 1, c.order()));
        }
    }
    Ok(())
}

/// `K_pi[b_0 X b_1 .. X b_n]`, collapsing innermost blocks first (ties left to right).
pub fn k_pi_eval(c: &CumulantTensor, p: &Partition, args: &[CMatrix]) -> Result<CMatrix> {
    check_partition(c, p)?;
    let n = p.n();
    if args.len() != n + 1 {
        return Err(Error::dim(n + 1, args.len()));
    }
    for b in args {
        if b.dim() != c.d() {
            return Err(Error::dim(c.d(), b.dim()));
        }
    }
    if c.species == Species::Classical {
        let mut acc = args.iter().fold(C64::new(1.0, 0.0), |acc, b| acc * b.get(0, 0));
        for block in p.blocks() {
            acc *= c.map(block.len()).data()[0];
        }
        return Ok(CMatrix::scalar(1, acc));
    }
    // The word is b_0 X b_1 .. X b_n; `owner[j]` is the block of the j-th X still present.
    let mut coeffs: Vec<CMatrix> = args.to_vec();
    let block_of = p.block_of();
    let mut owner: Vec<usize> = (1..=n).map(|i| block_of[i]).collect();
    while !owner.is_empty() {
        // leftmost block whose legs are consecutive in the current word
        let mut start = 0;
        let target = loop {
            let b = owner[start];
            let len = owner.iter().filter(|&&o| o == b).count();
            if owner.get(start..start + len).is_some_and(|w| w.iter().all(|&o| o == b)) {
                break (start, len);
            }
            start += 1;
            while owner[start] == owner[start - 1] {
                start += 1;
            }
        };
        let (s, len) = target;
        // X at word positions s..s+len sit between coeffs[s] and coeffs[s+len]
        let inner: Vec<CMatrix> = coeffs[s + 1..s + len].to_vec();
        let val = &(&coeffs[s] * &c.map(len).eval(&inner)) * &coeffs[s + len];
        coeffs.splice(s..=s + len, std::iter::once(val));
        owner.drain(s..s + len);
    }
    Ok(coeffs.pop().expect("one coefficient left"))
}

/// Multilinear core of `K_pi`: `(b_1..b_{n-1}) |-> K_pi[1 X b_1 .. X 1]`.
struct CoreBuilder<'a> {
    c: &'a CumulantTensor,
    blocks: &'a [Vec<usize>],
    end_of_block_at: HashMap<usize, usize>,
}

impl<'a> CoreBuilder<'a> {
    fn new(c: &'a CumulantTensor, p: &'a Partition) -> Self {
        let end_of_block_at = p
            .blocks()
            .iter()
            .enumerate()
            .map(|(i, b)| (b[0], i))
            .collect();
        CoreBuilder {
            c,
            blocks: p.blocks(),
            end_of_block_at,
        }
    }

    /// `X_l b_l .. b_{r-1} X_r` with `[l, r]` a union of blocks; arity `r - l`.
    fn core(&self, l: usize, r: usize) -> Multilinear {
        let mut acc: Option<Multilinear> = None;
        let mut pos = l;
        while pos <= r {
            let block = &self.blocks[self.end_of_block_at[&pos]];
            let term = self.block(block);
            acc = Some(match acc {
                None => term,
                Some(prev) => prev.product(&Multilinear::identity(self.c.d())).product(&term),
            });
            pos = *block.last().expect("nonempty block") + 1;
        }
        acc.expect("nonempty segment")
    }

    fn block(&self, legs: &[usize]) -> Multilinear {
        let cs = self.c.map(legs.len());
        if legs.len() == 1 {
            return cs.clone();
        }
        let args: Vec<Multilinear> = legs
            .windows(2)
            .map(|w| {
                if w[1] == w[0] + 1 {
                    Multilinear::identity(self.c.d())
                } else {
                    self.core(w[0] + 1, w[1] - 1).sandwich()
                }
            })
            .collect();
        let refs: Vec<&Multilinear> = args.iter().collect();
        cs.compose(&refs)
    }
}

/// `K_pi` as a multilinear map of `b_1..b_{n-1}` (outer factors `b_0 = b_n = 1`).
pub fn k_pi_tensor(c: &CumulantTensor, p: &Partition) -> Result<Multilinear> {
    check_partition(c, p)?;
    if c.species == Species::Classical {
        let val: C64 = p
            .blocks()
            .iter()
            .map(|b| c.map(b.len()).data()[0])
            .product();
        return Ok(Multilinear::from_data(1, p.n() - 1, vec![val]));
    }
    Ok(CoreBuilder::new(c, p).core(1, p.n()))
}

/// `sum_pi w(pi) K_pi` over the species lattice of `{1..n}`, split by the number
/// of blocks (entry `j` collects the partitions with `j` blocks). The one-block
/// partition is skipped when `skip_full` holds.
fn graded_sum(c: &CumulantTensor, n: usize, skip_full: bool) -> Result<Vec<Multilinear>> {
    let parts = enumerate(n, c.species.lattice())?;
    let parts: Vec<&Partition> = parts
        .iter()
        .filter(|p| !(skip_full && p.num_blocks() == 1))
        .collect();
    let mut acc = vec![Multilinear::zero(c.d(), n - 1); n + 1];
    // bounded chunks keep memory flat; summing each chunk in order keeps the result bit-stable
    for chunk in parts.chunks(64) {
        let terms: Vec<(Multilinear, f64)> = chunk
            .par_iter()
            .map(|p| Ok((k_pi_tensor(c, p)?, to_f64(c.species.weight(p)?))))
            .collect::<Result<_>>()?;
        for (p, (t, w)) in chunk.iter().zip(&terms) {
            acc[p.num_blocks()].add_assign_scaled(t, C64::new(*w, 0.0));
        }
    }
    Ok(acc)
}

fn weighted_sum(c: &CumulantTensor, n: usize, skip_full: bool) -> Result<Multilinear> {
    let graded = graded_sum(c, n, skip_full)?;
    let mut acc = Multilinear::zero(c.d(), n - 1);
    for g in &graded {
        acc.add_assign_scaled(g, C64::new(1.0, 0.0));
    }
    Ok(acc)
}

/// Moments split by block count: `m_n = sum_j out[n-1][j]`, and scaling every
/// cumulant by `t` turns this into `sum_j t^j out[n-1][j]`.
pub fn graded_moments(c: &CumulantTensor) -> Result<Vec<Vec<Multilinear>>> {
    if c.order() > MAX_ORDER {
        return Err(Error::size("truncation order", c.order(), 1, MAX_ORDER));
    }
    (1..=c.order()).map(|n| graded_sum(c, n, false)).collect()
}

pub fn cumulants_to_moments(c: &CumulantTensor) -> Result<MomentTensor> {
    if c.order() > MAX_ORDER {
        return Err(Error::size("truncation order", c.order(), 1, MAX_ORDER));
    }
    let maps = (1..=c.order())
        .map(|n| weighted_sum(c, n, false))
        .collect::<Result<Vec<_>>>()?;
    MomentTensor::new(c.d(), maps)
}

pub fn moments_to_cumulants(m: &MomentTensor, species: Species) -> Result<CumulantTensor> {
    check_species_dim(species, m.d())?;
    let order = m.order();
    if order == 0 || order > MAX_ORDER {
        return Err(Error::size("truncation order", order, 1, MAX_ORDER));
    }
    let d = m.d();
    let mut c = CumulantTensor::new(species, d, vec![m.map(1).clone()])?;
    for n in 2..=order {
        // c_n is not read by any proper partition, so a zero placeholder is safe
        let mut maps = c.maps().to_vec();
        maps.push(Multilinear::zero(d, n - 1));
        let partial = CumulantTensor::new(species, d, maps)?;
        let lower = weighted_sum(&partial, n, true)?;
        let mut maps = partial.maps.into_maps();
        maps[n - 1] = m.map(n).sub(&lower);
        c = CumulantTensor::new(species, d, maps)?;
    }
    Ok(c)
}

/// `nu^{gamma,sigma}` of the given species.
pub fn make_nu(gamma: &CMatrix, sigma: &RealizedCP, species: Species, order: usize) -> Result<MomentTensor> {
    if species == Species::Classical {
        return Err(Error::Unsupported(
            "nu^{gamma,sigma} is built for the free, boolean and monotone species".into(),
        ));
    }
    if !gamma.is_hermitian(1e-12) {
        return Err(Error::Invalid("gamma must be Hermitian".into()));
    }
    cumulants_to_moments(&CumulantTensor::from_cp(gamma, sigma, species, order)?)
}

/// Convolution by adding cumulants.
pub fn convolve(m1: &MomentTensor, m2: &MomentTensor, species: Species) -> Result<MomentTensor> {
    if species == Species::Monotone {
        return Err(Error::Unsupported(
            "monotone convolution is not cumulant-additive; use ncseries::monotone_convolve".into(),
        ));
    }
    m1.check_compatible(m2)?;
    let c = moments_to_cumulants(m1, species)?.add(&moments_to_cumulants(m2, species)?)?;
    cumulants_to_moments(&c)
}

/// Applies a `d^2 x d^2` matrix, acting on column-major `vec(M_d)`, to `m`.
pub fn apply_vec_map(eta: &CMatrix, m: &CMatrix) -> CMatrix {
    let d = m.dim();
    let v: Vec<C64> = (0..d * d).map(|i| m.get(i % d, i / d)).collect();
    CMatrix::from_fn(d, |r, s| {
        let row = s * d + r;
        (0..d * d).map(|j| eta.get(row, j) * v[j]).sum()
    })
}

/// `mu^{|> eta}`: monotone cumulants mapped through `eta`.
pub fn power_eta(m: &MomentTensor, eta: &CMatrix) -> Result<MomentTensor> {
    let d = m.d();
    if eta.dim() != d * d {
        return Err(Error::dim(d * d, eta.dim()));
    }
    let c = moments_to_cumulants(m, Species::Monotone)?;
    cumulants_to_moments(&c.map_outputs(|x| apply_vec_map(eta, x)))
}

/// `mu^{|> t}` for real `t >= 0`.
pub fn monotone_power(m: &MomentTensor, t: f64) -> Result<MomentTensor> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("monotone power needs t >= 0, got {t}")));
    }
    let c = moments_to_cumulants(m, Species::Monotone)?;
    cumulants_to_moments(&c.scale_re(t))
}
