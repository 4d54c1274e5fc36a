//! Set partitions of `{1..n}`, their non-crossing and interval subfamilies,
//! and the nesting order on non-crossing partitions.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest ground set accepted by [`enumerate`].
pub const MAX_ENUM_N: usize = 12;

/// Largest number of blocks accepted by [`order_count_bruteforce`].
pub const MAX_BRUTEFORCE_BLOCKS: usize = 9;

/// Partition family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionClass {
    All,
    NonCrossing,
    Interval,
}

/// A partition of `{1..n}` in canonical form: blocks strictly increasing,
/// listed by increasing minimum.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl fmt::Debug for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, b) in self.blocks.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{{")?;
            for (j, x) in b.iter().enumerate() {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{x}")?;
            }
            write!(f, "}}")?;
        }
        write!(f, "}}")
    }
}

impl Partition {
    /// Validates and canonicalizes `blocks` (1-based).
    pub fn new(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::size("n", n, 1, usize::MAX));
        }
        let mut seen = vec![false; n + 1];
        let mut blocks = blocks;
        for b in &mut blocks {
            if b.is_empty() {
                return Err(Error::Invalid("empty block".into()));
            }
            b.sort_unstable();
            for &x in b.iter() {
                if x == 0 || x > n {
                    return Err(Error::Invalid(format!("element {x} not in 1..={n}")));
                }
                if seen[x] {
                    return Err(Error::Invalid(format!("element {x} appears twice")));
                }
                seen[x] = true;
            }
        }
        if let Some(x) = (1..=n).find(|&x| !seen[x]) {
            return Err(Error::Invalid(format!("element {x} not covered")));
        }
        blocks.sort_unstable_by_key(|b| b[0]);
        Ok(Partition { n, blocks })
    }

    pub(crate) fn from_canonical(n: usize, blocks: Vec<Vec<usize>>) -> Self {
        debug_assert!(Partition::new(n, blocks.clone()).map(|p| p.blocks == blocks).unwrap_or(false));
        Partition { n, blocks }
    }

    /// The one-block partition `{{1..n}}`.
    pub fn full(n: usize) -> Self {
        Partition {
            n,
            blocks: vec![(1..=n).collect()],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Block index (into [`Partition::blocks`]) of every element; entry 0 unused.
    pub fn block_of(&self) -> Vec<usize> {
        let mut owner = vec![usize::MAX; self.n + 1];
        for (i, b) in self.blocks.iter().enumerate() {
            for &x in b {
                owner[x] = i;
            }
        }
        owner
    }

    /// Inserts `other` after element `pos` (`0 <= pos <= n`), shifting later elements.
    /// If `pos` falls inside the span of some blocks, the inserted blocks nest under them;
    /// otherwise they are unrelated to every block of `self`.
    pub fn insert(&self, pos: usize, other: &Partition) -> Result<Partition> {
        if pos > self.n {
            return Err(Error::size("insert position", pos, 0, self.n));
        }
        let m = other.n;
        let shift = |x: usize| if x > pos { x + m } else { x };
        let mut blocks: Vec<Vec<usize>> = self
            .blocks
            .iter()
            .map(|b| b.iter().map(|&x| shift(x)).collect())
            .collect();
        blocks.extend(other.blocks.iter().map(|b| b.iter().map(|&x| x + pos).collect()));
        Partition::new(self.n + m, blocks)
    }

    /// The partition induced on the union of the given blocks, relabeled to `1..m`
    /// in increasing order.
    pub fn restrict(&self, block_indices: &[usize]) -> Result<Partition> {
        let mut keep = vec![false; self.blocks.len()];
        for &i in block_indices {
            if i >= self.blocks.len() {
                return Err(Error::size("block index", i, 0, self.blocks.len() - 1));
            }
            keep[i] = true;
        }
        let owner = self.block_of();
        let mut label = vec![0usize; self.n + 1];
        let mut next = 0;
        for x in 1..=self.n {
            if keep[owner[x]] {
                next += 1;
                label[x] = next;
            }
        }
        let blocks = (0..self.blocks.len())
            .filter(|&i| keep[i])
            .map(|i| self.blocks[i].iter().map(|&x| label[x]).collect())
            .collect();
        Partition::new(next, blocks)
    }

    pub fn is_noncrossing(&self) -> bool {
        let owner = self.block_of();
        // a < c < b < d with a,b in one block and c,d in another
        for a in 1..=self.n {
            for c in a + 1..=self.n {
                if owner[c] == owner[a] {
                    continue;
                }
                for b in c + 1..=self.n {
                    if owner[b] != owner[a] {
                        continue;
                    }
                    for d in b + 1..=self.n {
                        if owner[d] == owner[c] {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    pub fn is_interval(&self) -> bool {
        self.blocks
            .iter()
            .all(|b| b.windows(2).all(|w| w[1] == w[0] + 1))
    }

    pub fn belongs_to(&self, class: PartitionClass) -> bool {
        match class {
            PartitionClass::All => true,
            PartitionClass::NonCrossing => self.is_noncrossing(),
            PartitionClass::Interval => self.is_interval(),
        }
    }

    /// `U` covers `V`: two elements of `U` flank every element of `V`.
    pub fn covers(&self, u: usize, v: usize) -> bool {
        if u == v {
            return false;
        }
        let (bu, bv) = (&self.blocks[u], &self.blocks[v]);
        let (lo, hi) = (bv[0], *bv.last().unwrap());
        bu.iter().any(|&i| i < lo) && bu.iter().any(|&j| j > hi)
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 || n > MAX_ENUM_N {
        return Err(Error::size("n", n, 1, MAX_ENUM_N));
    }
    Ok(())
}

/// All partitions of `{1..n}` in the requested family, canonical and sorted.
pub fn enumerate(n: usize, class: PartitionClass) -> Result<Vec<Partition>> {
    check_n(n)?;
    let mut out = match class {
        PartitionClass::All => all_partitions(n),
        PartitionClass::NonCrossing => noncrossing_partitions(n),
        PartitionClass::Interval => interval_partitions(n),
    };
    out.sort();
    Ok(out)
}

fn all_partitions(n: usize) -> Vec<Partition> {
    // restricted growth strings
    let mut out = Vec::new();
    let mut rgs = vec![0usize; n];
    loop {
        let k = rgs.iter().max().unwrap() + 1;
        let mut blocks = vec![Vec::new(); k];
        for (i, &b) in rgs.iter().enumerate() {
            blocks[b].push(i + 1);
        }
        out.push(Partition::from_canonical(n, blocks));
        // increment
        let mut i = n;
        loop {
            if i == 1 {
                return out;
            }
            i -= 1;
            let prefix_max = rgs[..i].iter().copied().max().unwrap();
            if rgs[i] <= prefix_max {
                rgs[i] += 1;
                for x in rgs.iter_mut().skip(i + 1) {
                    *x = 0;
                }
                break;
            }
        }
    }
}

fn interval_partitions(n: usize) -> Vec<Partition> {
    (0u32..1 << (n - 1))
        .map(|mask| {
            let mut blocks = vec![vec![1]];
            for x in 2..=n {
                if mask & (1 << (x - 2)) != 0 {
                    blocks.push(vec![x]);
                } else {
                    blocks.last_mut().unwrap().push(x);
                }
            }
            Partition::from_canonical(n, blocks)
        })
        .collect()
}

/// Non-crossing partitions of the interval `lo..=hi`, as block lists.
fn nc_blocks(lo: usize, hi: usize) -> Vec<Vec<Vec<usize>>> {
    if lo > hi {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    // choose the block containing lo: lo = a_1 < a_2 < ... < a_s; gaps are NC
    let mut stack: Vec<(Vec<usize>, Vec<Vec<Vec<usize>>>)> = vec![(vec![lo], vec![Vec::new()])];
    while let Some((legs, fills)) = stack.pop() {
        let last = *legs.last().unwrap();
        // close the block here: the rest lo..hi after `last` is NC on its own
        for tail in nc_blocks(last + 1, hi) {
            for fill in &fills {
                let mut blocks = vec![legs.clone()];
                blocks.extend(fill.iter().cloned());
                blocks.extend(tail.iter().cloned());
                out.push(blocks);
            }
        }
        // or extend with a next leg, filling the gap between
        for next in last + 1..=hi {
            let gap = nc_blocks(last + 1, next - 1);
            let mut new_fills = Vec::with_capacity(fills.len() * gap.len());
            for f in &fills {
                for g in &gap {
                    let mut h = f.clone();
                    h.extend(g.iter().cloned());
                    new_fills.push(h);
                }
            }
            let mut new_legs = legs.clone();
            new_legs.push(next);
            stack.push((new_legs, new_fills));
        }
    }
    out
}

fn noncrossing_partitions(n: usize) -> Vec<Partition> {
    nc_blocks(1, n)
        .into_iter()
        .map(|mut blocks| {
            blocks.sort_unstable_by_key(|b| b[0]);
            Partition::from_canonical(n, blocks)
        })
        .collect()
}

/// Cover forest of a non-crossing partition: each block points at the
/// innermost block covering it; roots are the outer blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NestingForest {
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
}

impl NestingForest {
    pub fn roots(&self) -> Vec<usize> {
        (0..self.parent.len())
            .filter(|&v| self.parent[v].is_none())
            .collect()
    }

    /// Number of blocks in the subtree rooted at every block.
    pub fn subtree_sizes(&self) -> Vec<usize> {
        let n = self.parent.len();
        let mut size = vec![1usize; n];
        // children always have larger minima than their parent, so block
        // order is a topological order
        for v in (0..n).rev() {
            if let Some(p) = self.parent[v] {
                size[p] += size[v];
            }
        }
        size
    }
}

fn require_noncrossing(p: &Partition) -> Result<()> {
    if !p.is_noncrossing() {
        return Err(Error::UnsupportedStructure(format!(
            "partition {p:?} is crossing"
        )));
    }
    Ok(())
}

pub fn nesting_forest(p: &Partition) -> Result<NestingForest> {
    require_noncrossing(p)?;
    let k = p.num_blocks();
    let mut parent = vec![None; k];
    for v in 0..k {
        // coverers of v form a chain; the innermost has the largest minimum
        parent[v] = (0..k)
            .filter(|&u| p.covers(u, v))
            .max_by_key(|&u| p.blocks[u][0]);
    }
    let mut children = vec![Vec::new(); k];
    for v in 0..k {
        if let Some(u) = parent[v] {
            children[u].push(v);
        }
    }
    Ok(NestingForest { parent, children })
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

/// Number of linear extensions of the nesting order, by the forest hook-length formula.
pub fn order_count(p: &Partition) -> Result<u64> {
    let forest = nesting_forest(p)?;
    let hooks: u64 = forest.subtree_sizes().iter().map(|&s| s as u64).product();
    Ok(factorial(p.num_blocks()) / hooks)
}

/// Exhaustive count of order-preserving bijections `(pi, <) -> {1..|pi|}`.
pub fn order_count_bruteforce(p: &Partition) -> Result<u64> {
    require_noncrossing(p)?;
    let k = p.num_blocks();
    if k > MAX_BRUTEFORCE_BLOCKS {
        return Err(Error::size("number of blocks", k, 1, MAX_BRUTEFORCE_BLOCKS));
    }
    let relations: Vec<(usize, usize)> = (0..k)
        .flat_map(|u| (0..k).map(move |v| (u, v)))
        .filter(|&(u, v)| p.covers(u, v))
        .collect();
    // Heap's algorithm over rank assignments
    let mut rank: Vec<usize> = (0..k).collect();
    let mut c = vec![0usize; k];
    let ok = |r: &[usize]| relations.iter().all(|&(u, v)| r[u] < r[v]);
    let mut count = u64::from(ok(&rank));
    let mut i = 0;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                rank.swap(0, i);
            } else {
                rank.swap(c[i], i);
            }
            count += u64::from(ok(&rank));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(count)
}
