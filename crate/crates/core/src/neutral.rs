//! (alpha, L)-neutral blocks of a real sequence and the split of an orbit's
//! empirical measure into the neutral part `m0` and the rest `m1`.
//!
//! With prefix sums `S` and `G(m) = S(m) - alpha m`, an interval `[n0, n1)`
//! is neutral iff `G(m) <= G(n0)` for every `n0 < m <= n1`. The longest
//! neutral interval starting at `n0` therefore ends one step before the next
//! index where `G` strictly exceeds `G(n0)`, and a single right-to-left
//! monotone-stack pass finds that index for every start at once.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Sub};

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number type the block algorithm runs on: `f64` for orbits of smooth maps,
/// `Ratio<i64>` for exact symbolic sequences.
pub trait Scalar:
    Copy
    + PartialOrd
    + Zero
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Debug
{
    fn from_usize(n: usize) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f64 {
    fn from_usize(n: usize) -> Self {
        n as f64
    }

    fn to_f64(self) -> f64 {
        self
    }
}

impl Scalar for Ratio<i64> {
    fn from_usize(n: usize) -> Self {
        Ratio::from_integer(n as i64)
    }

    fn to_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeutralParams<S> {
    pub alpha: S,
    pub min_len: usize,
}

impl<S: Scalar> NeutralParams<S> {
    pub fn new(alpha: S, min_len: usize) -> Result<Self> {
        if !(alpha > S::zero()) {
            return Err(Error::InvalidParameter("alpha must be positive".into()));
        }
        if min_len == 0 {
            return Err(Error::InvalidParameter("L must be at least 1".into()));
        }
        Ok(Self { alpha, min_len })
    }
}

/// Half-open integer interval `[start, end)`, serialized as `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Block {
    pub start: usize,
    pub end: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

impl From<[usize; 2]> for Block {
    fn from([start, end]: [usize; 2]) -> Self {
        Self { start, end }
    }
}

impl From<Block> for [usize; 2] {
    fn from(b: Block) -> Self {
        [b.start, b.end]
    }
}

/// Maximal neutral blocks, sorted, pairwise disjoint and non-adjacent.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSet {
    pub blocks: Vec<Block>,
}

impl BlockSet {
    pub fn covered(&self) -> usize {
        self.blocks.iter().map(Block::len).sum()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.blocks.iter().flat_map(|b| b.start..b.end)
    }

    pub fn contains(&self, j: usize) -> bool {
        let i = self.blocks.partition_point(|b| b.end <= j);
        i < self.blocks.len() && self.blocks[i].start <= j
    }

    /// Indicator over `[0, n)`.
    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for j in self.indices() {
            m[j] = true;
        }
        m
    }

    /// Gaps strictly between consecutive blocks.
    pub fn interior_gaps(&self) -> Vec<Block> {
        self.blocks
            .windows(2)
            .map(|w| Block {
                start: w[0].end,
                end: w[1].start,
            })
            .collect()
    }
}

pub fn prefix_sums<S: Scalar>(seq: &[S]) -> Vec<S> {
    let mut out = Vec::with_capacity(seq.len() + 1);
    let mut acc = S::zero();
    out.push(acc);
    for &x in seq {
        acc = acc + x;
        out.push(acc);
    }
    out
}

/// For each start `i` in `0..=n`, the first `m > i` with `G(m) > G(i)`.
fn next_rise<S: Scalar>(seq: &[S], alpha: S) -> Vec<Option<usize>> {
    let s = prefix_sums(seq);
    let g: Vec<S> = s
        .iter()
        .enumerate()
        .map(|(m, &sm)| sm - alpha * S::from_usize(m))
        .collect();
    let mut out = vec![None; g.len()];
    let mut stack: Vec<usize> = Vec::new();
    for i in (0..g.len()).rev() {
        while let Some(&top) = stack.last() {
            if g[top] <= g[i] {
                stack.pop();
            } else {
                break;
            }
        }
        out[i] = stack.last().copied();
        stack.push(i);
    }
    out
}

pub fn neutral_blocks<S: Scalar>(seq: &[S], params: &NeutralParams<S>) -> BlockSet {
    let n = seq.len();
    let rise = next_rise(seq, params.alpha);
    let mut blocks: Vec<Block> = Vec::new();
    for (start, r) in rise.iter().enumerate().take(n) {
        let end = r.map_or(n, |e| e - 1);
        if end < start + params.min_len {
            continue;
        }
        match blocks.last_mut() {
            Some(last) if start <= last.end => last.end = last.end.max(end),
            _ => blocks.push(Block { start, end }),
        }
    }
    BlockSet { blocks }
}

/// Indices `j` such that `[j - a, j]` is a neutral window for some `0 <= a <= k`.
pub fn pliss_suffix_times<S: Scalar>(seq: &[S], alpha: S, k: usize) -> Vec<usize> {
    let n = seq.len();
    // window [s, j] is neutral iff the first rise after s comes after j + 1
    let reach: Vec<usize> = next_rise(seq, alpha)
        .iter()
        .take(n)
        .map(|r| r.unwrap_or(usize::MAX))
        .collect();
    let mut out = Vec::new();
    let mut window: VecDeque<usize> = VecDeque::new();
    for j in 0..n {
        while let Some(&back) = window.back() {
            if reach[back] <= reach[j] {
                window.pop_back();
            } else {
                break;
            }
        }
        window.push_back(j);
        while let Some(&front) = window.front() {
            if front + k < j {
                window.pop_front();
            } else {
                break;
            }
        }
        if reach[window[0]] > j + 1 {
            out.push(j);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom<A> {
    pub site: A,
    pub weight: f64,
}

/// Atoms of weight `1/n` at selected orbit points; `count / n` is the exact mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure<A> {
    pub atoms: Vec<Atom<A>>,
    pub count: usize,
    pub n: usize,
}

impl<A> EmpiricalMeasure<A> {
    pub fn total_mass(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.count as f64 / self.n as f64
        }
    }

    pub fn exact_mass(&self) -> Ratio<i64> {
        Ratio::new(self.count as i64, self.n.max(1) as i64)
    }

    pub fn is_zero(&self) -> bool {
        self.count == 0
    }

    /// Integral of `f` against the measure.
    pub fn integrate(&self, f: impl Fn(&A) -> f64) -> f64 {
        self.atoms.iter().map(|a| a.weight * f(&a.site)).sum()
    }
}

impl<A: Ord + Clone> EmpiricalMeasure<A> {
    /// Exact weight `count / n` per distinct site.
    pub fn marginal(&self) -> BTreeMap<A, Ratio<i64>> {
        let mut counts: BTreeMap<A, usize> = BTreeMap::new();
        for a in &self.atoms {
            *counts.entry(a.site.clone()).or_default() += 1;
        }
        counts
            .into_iter()
            .map(|(k, c)| (k, Ratio::new(c as i64, self.n.max(1) as i64)))
            .collect()
    }
}

pub fn empirical_measure<A: Clone>(orbit: &[A], index_set: &[usize]) -> Result<EmpiricalMeasure<A>> {
    let n = orbit.len();
    let mut idx = index_set.to_vec();
    idx.sort_unstable();
    idx.dedup();
    if let Some(&bad) = idx.iter().find(|&&j| j >= n) {
        return Err(Error::IndexOutOfRange { index: bad, len: n });
    }
    let w = 1.0 / n as f64;
    Ok(EmpiricalMeasure {
        atoms: idx
            .iter()
            .map(|&j| Atom {
                site: orbit[j].clone(),
                weight: w,
            })
            .collect(),
        count: idx.len(),
        n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition<A> {
    pub m0: EmpiricalMeasure<A>,
    pub m1: EmpiricalMeasure<A>,
    /// Mass of `m1`.
    pub beta: f64,
    pub blocks: BlockSet,
}

pub fn decompose<A: Clone, S: Scalar>(
    orbit: &[A],
    phis: &[S],
    params: &NeutralParams<S>,
) -> Result<Decomposition<A>> {
    if orbit.len() != phis.len() {
        return Err(Error::LengthMismatch {
            left: orbit.len(),
            right: phis.len(),
        });
    }
    let n = orbit.len();
    let blocks = neutral_blocks(phis, params);
    let mask = blocks.mask(n);
    let (inside, outside): (Vec<usize>, Vec<usize>) = (0..n).partition(|&j| mask[j]);
    let m0 = empirical_measure(orbit, &inside)?;
    let m1 = empirical_measure(orbit, &outside)?;
    let beta = m1.total_mass();
    Ok(Decomposition {
        m0,
        m1,
        beta,
        blocks,
    })
}

/// `int phi dm0 = (1/n) sum_{j neutral} phi_j`, exact in the scalar type.
pub fn zero_mean_residual<A, S: Scalar>(decomp: &Decomposition<A>, phis: &[S]) -> Result<S> {
    let n = decomp.m0.n;
    if n != phis.len() {
        return Err(Error::LengthMismatch {
            left: n,
            right: phis.len(),
        });
    }
    if n == 0 {
        return Ok(S::zero());
    }
    let s = prefix_sums(phis);
    let total = decomp
        .blocks
        .blocks
        .iter()
        .fold(S::zero(), |acc, b| acc + (s[b.end] - s[b.start]));
    Ok(total / S::from_usize(n))
}

/// `(-max|phi|/L - 2 max|phi| L / n, alpha)`: the window the residual is expected in.
pub fn residual_bounds<S: Scalar>(phis: &[S], params: &NeutralParams<S>) -> (f64, f64) {
    let max_abs = phis.iter().map(|p| p.to_f64().abs()).fold(0.0, f64::max);
    let l = params.min_len as f64;
    let n = phis.len().max(1) as f64;
    (-max_abs / l - 2.0 * max_abs * l / n, params.alpha.to_f64())
}
