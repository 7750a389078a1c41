//! Exact symbolic computations: the periodic words with three payoff
//! levels whose neutral blocks have closed-form lengths, subshifts of finite
//! type, and Markov measures on them.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neutral::{
    empirical_measure, neutral_blocks, zero_mean_residual, Block, BlockSet, Decomposition,
    NeutralParams,
};

pub type Rational = Ratio<i64>;

/// Finite alphabet with a payoff per symbol, `phi(x) = payoff(x_0)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightedAlphabet {
    pub symbols: Vec<i64>,
    pub payoff: BTreeMap<i64, Rational>,
}

impl WeightedAlphabet {
    /// Each symbol pays its own value.
    pub fn self_payoff(symbols: &[i64]) -> Self {
        Self {
            symbols: symbols.to_vec(),
            payoff: symbols.iter().map(|&s| (s, Rational::from_integer(s))).collect(),
        }
    }

    pub fn payoff(&self, symbol: i64) -> Result<Rational> {
        self.payoff
            .get(&symbol)
            .copied()
            .ok_or_else(|| Error::InvalidParameter(format!("symbol {symbol} not in alphabet")))
    }

    pub fn payoffs(&self, word: &[i64]) -> Result<Vec<Rational>> {
        word.iter().map(|&s| self.payoff(s)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// `-2` run, `+2` run, `+1` run.
    P,
    /// `-2` run, `+1` run, `+2` run.
    Q,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::P => "p",
            Variant::Q => "q",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p" => Ok(Variant::P),
            "q" => Ok(Variant::Q),
            _ => Err(Error::InvalidParameter(format!("unknown variant {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicWord {
    pub letters: Vec<i64>,
}

impl PeriodicWord {
    pub fn new(letters: Vec<i64>) -> Result<Self> {
        if letters.is_empty() {
            return Err(Error::InvalidParameter("periodic word must be nonempty".into()));
        }
        Ok(Self { letters })
    }

    pub fn period(&self) -> usize {
        self.letters.len()
    }

    pub fn repeat(&self, periods: usize) -> Vec<i64> {
        self.letters.repeat(periods)
    }
}

pub fn example1_word(k: usize, variant: Variant) -> Result<PeriodicWord> {
    if k == 0 {
        return Err(Error::InvalidParameter("run length k must be >= 1".into()));
    }
    let runs: [i64; 3] = match variant {
        Variant::P => [-2, 2, 1],
        Variant::Q => [-2, 1, 2],
    };
    PeriodicWord::new(runs.iter().flat_map(|&s| std::iter::repeat_n(s, k)).collect())
}

fn check_alpha(alpha: Rational) -> Result<()> {
    if alpha <= Rational::from_integer(0) || alpha >= Rational::new(1, 3) {
        return Err(Error::InvalidParameter(format!(
            "closed form needs 0 < alpha < 1/3, got {alpha}"
        )));
    }
    Ok(())
}

/// Length `l` of the tail of the third run inside a maximal block.
///
/// After the `-2` run and the following run the drift budget is `2 alpha k`
/// (p) or `(1 + 2 alpha) k` (q); the third run spends `1 - alpha` (p) or
/// `2 - alpha` (q) per step.
pub fn example1_tail(k: usize, alpha: Rational, variant: Variant) -> Result<usize> {
    check_alpha(alpha)?;
    let one = Rational::from_integer(1);
    let two = Rational::from_integer(2);
    let k = Rational::from_integer(k as i64);
    let l = match variant {
        Variant::P => two * alpha / (one - alpha) * k,
        Variant::Q => (one + two * alpha) / (two - alpha) * k,
    };
    Ok(l.floor().to_integer() as usize)
}

/// Total maximal-block length `2k + l`.
pub fn example1_block_length(k: usize, alpha: Rational, variant: Variant) -> Result<usize> {
    if k == 0 {
        return Err(Error::InvalidParameter("run length k must be >= 1".into()));
    }
    Ok(2 * k + example1_tail(k, alpha, variant)?)
}

/// Exact decomposition of the periodic word, measured on one period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolDecomposition {
    pub m0: BTreeMap<i64, Rational>,
    pub m1: BTreeMap<i64, Rational>,
    pub beta: Rational,
    /// `int phi dm0`.
    pub residual: Rational,
    /// Lengths of the maximal blocks away from both ends of the sample.
    pub block_lengths: Vec<usize>,
    pub decomposition: Decomposition<i64>,
}

impl SymbolDecomposition {
    pub fn m0_weight(&self, s: i64) -> Rational {
        self.m0.get(&s).copied().unwrap_or_default()
    }

    pub fn m1_weight(&self, s: i64) -> Rational {
        self.m1.get(&s).copied().unwrap_or_default()
    }
}

/// Runs the block algorithm on three periods, drops blocks touching either
/// end, and reads off `m0` and `m1` on the middle period.
pub fn limit_decomposition(
    variant: Variant,
    k: usize,
    alpha: Rational,
    min_len: usize,
) -> Result<SymbolDecomposition> {
    check_alpha(alpha)?;
    let word = example1_word(k, variant)?;
    let alphabet = WeightedAlphabet::self_payoff(&[-2, 1, 2]);
    let period = word.period();
    let seq = word.repeat(3);
    let phis = alphabet.payoffs(&seq)?;
    let params = NeutralParams::new(alpha, min_len)?;
    let all = neutral_blocks(&phis, &params);
    let interior: Vec<Block> = all
        .blocks
        .iter()
        .copied()
        .filter(|b| b.start > 0 && b.end < seq.len())
        .collect();

    let middle = period..2 * period;
    let local = BlockSet {
        blocks: interior
            .iter()
            .filter_map(|b| {
                let start = b.start.max(middle.start);
                let end = b.end.min(middle.end);
                (start < end).then(|| Block {
                    start: start - period,
                    end: end - period,
                })
            })
            .collect(),
    };
    let mask = local.mask(period);
    let (inside, outside): (Vec<usize>, Vec<usize>) = (0..period).partition(|&j| mask[j]);
    let m0 = empirical_measure(&word.letters, &inside)?;
    let m1 = empirical_measure(&word.letters, &outside)?;
    let beta = m1.exact_mass();
    let decomposition = Decomposition {
        beta: m1.total_mass(),
        m0,
        m1,
        blocks: local,
    };
    let residual = zero_mean_residual(&decomposition, &phis[period..2 * period])?;
    Ok(SymbolDecomposition {
        m0: decomposition.m0.marginal(),
        m1: decomposition.m1.marginal(),
        beta,
        residual,
        block_lengths: interior.iter().map(Block::len).collect(),
        decomposition,
    })
}

/// Parses `"1/5"`, `"3"` or `"-2/7"`; decimals are rejected.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let bad = || Error::InvalidParameter(format!("not a rational number: {s:?}"));
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (s, "1"),
    };
    let num: i64 = num.parse().map_err(|_| bad())?;
    let den: i64 = den.parse().map_err(|_| bad())?;
    if den == 0 {
        return Err(bad());
    }
    Ok(Rational::new(num, den))
}

/// Directed graph on symbols `0..m`; the admissible transitions of a subshift.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionGraph {
    pub adj: Vec<Vec<bool>>,
}

impl TransitionGraph {
    pub fn new(adj: Vec<Vec<bool>>) -> Result<Self> {
        let m = adj.len();
        if m == 0 || adj.iter().any(|row| row.len() != m) {
            return Err(Error::InvalidParameter("adjacency must be square and nonempty".into()));
        }
        Ok(Self { adj })
    }

    pub fn full(m: usize) -> Self {
        Self {
            adj: vec![vec![true; m]; m],
        }
    }

    /// No two consecutive 1s.
    pub fn golden_mean() -> Self {
        Self {
            adj: vec![vec![true, true], vec![true, false]],
        }
    }

    pub fn size(&self) -> usize {
        self.adj.len()
    }

    fn reaches_all(&self, from: usize, reversed: bool) -> bool {
        let m = self.size();
        let mut seen = vec![false; m];
        seen[from] = true;
        let mut queue = VecDeque::from([from]);
        while let Some(i) = queue.pop_front() {
            for j in 0..m {
                let edge = if reversed { self.adj[j][i] } else { self.adj[i][j] };
                if edge && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Strongly connected.
    pub fn is_transitive(&self) -> bool {
        self.reaches_all(0, false) && self.reaches_all(0, true)
    }

    /// Number of admissible words of length `n`.
    pub fn word_count(&self, n: usize) -> u128 {
        if n == 0 {
            return 1;
        }
        let m = self.size();
        let mut v = vec![1u128; m];
        for _ in 1..n {
            v = (0..m)
                .map(|i| (0..m).filter(|&j| self.adj[i][j]).map(|j| v[j]).sum())
                .collect();
        }
        v.iter().sum()
    }

    /// All admissible words of length `n`, in lexicographic order.
    pub fn words(&self, n: usize) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = vec![vec![]];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|w| {
                    let last = w.last().copied();
                    (0..self.size())
                        .filter(move |&s| last.is_none_or(|l| self.adj[l][s]))
                        .map(move |s| {
                            let mut nw = w.clone();
                            nw.push(s);
                            nw
                        })
                })
                .collect();
        }
        out
    }

    fn matrix(&self) -> DMatrix<f64> {
        let m = self.size();
        DMatrix::from_fn(m, m, |i, j| if self.adj[i][j] { 1.0 } else { 0.0 })
    }

    /// Perron eigenvalue and eigenvector by power iteration on `A + I`.
    fn perron(a: &DMatrix<f64>) -> (f64, DVector<f64>) {
        let m = a.nrows();
        let shifted = a + DMatrix::identity(m, m);
        let mut v = DVector::from_element(m, 1.0 / m as f64);
        for _ in 0..100_000 {
            let mut next = &shifted * &v;
            next /= next.sum();
            let delta = (&next - &v).amax();
            v = next;
            if delta < 1e-16 {
                break;
            }
        }
        let lambda = (a * &v).sum() / v.sum();
        (lambda, v)
    }

    pub fn spectral_radius(&self) -> f64 {
        Self::perron(&self.matrix()).0
    }

    /// Maximal-entropy Markov measure: `P_ij = A_ij r_j / (lambda r_i)`,
    /// `pi_i` proportional to `l_i r_i`.
    pub fn parry_measure(&self) -> Result<MarkovMeasure> {
        if !self.is_transitive() {
            return Err(Error::NonTransitive);
        }
        let a = self.matrix();
        let (lambda, r) = Self::perron(&a);
        let (_, l) = Self::perron(&a.transpose());
        let m = self.size();
        let transition: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| if self.adj[i][j] { r[j] / (lambda * r[i]) } else { 0.0 })
                    .collect()
            })
            .collect();
        let z: f64 = (0..m).map(|i| l[i] * r[i]).sum();
        let stationary = (0..m).map(|i| l[i] * r[i] / z).collect();
        Ok(MarkovMeasure {
            transition,
            stationary,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovMeasure {
    pub transition: Vec<Vec<f64>>,
    pub stationary: Vec<f64>,
}

impl MarkovMeasure {
    /// Validates rows and solves `pi P = pi`, `sum pi = 1`.
    pub fn new(transition: Vec<Vec<f64>>) -> Result<Self> {
        let m = transition.len();
        if m == 0 || transition.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidParameter("transition matrix must be square".into()));
        }
        for row in &transition {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter("transition rows must be probability vectors".into()));
            }
        }
        let mut sys = DMatrix::from_fn(m, m, |i, j| transition[j][i] - if i == j { 1.0 } else { 0.0 });
        let mut rhs = DVector::zeros(m);
        for j in 0..m {
            sys[(m - 1, j)] = 1.0;
        }
        rhs[m - 1] = 1.0;
        let pi = sys
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidParameter("stationary distribution is not unique".into()))?;
        let stationary: Vec<f64> = pi.iter().copied().collect();
        let measure = Self {
            transition,
            stationary,
        };
        if measure.stationarity_defect() > 1e-12 || measure.stationary.iter().any(|&p| p < -1e-15) {
            return Err(Error::InvalidParameter("stationary distribution is not unique".into()));
        }
        Ok(measure)
    }

    pub fn uniform(m: usize) -> Self {
        Self {
            transition: vec![vec![1.0 / m as f64; m]; m],
            stationary: vec![1.0 / m as f64; m],
        }
    }

    pub fn size(&self) -> usize {
        self.stationary.len()
    }

    /// `max_j |(pi P)_j - pi_j|`.
    pub fn stationarity_defect(&self) -> f64 {
        let m = self.size();
        (0..m)
            .map(|j| {
                let s: f64 = (0..m).map(|i| self.stationary[i] * self.transition[i][j]).sum();
                (s - self.stationary[j]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Measure of the cylinder `[w_0 w_1 ... w_{n-1}]`.
    pub fn cylinder_weight(&self, word: &[usize]) -> f64 {
        match word.split_first() {
            None => 1.0,
            Some((&first, rest)) => {
                let mut p = self.stationary[first];
                let mut prev = first;
                for &s in rest {
                    p *= self.transition[prev][s];
                    prev = s;
                }
                p
            }
        }
    }
}

/// `-sum_i pi_i sum_j P_ij log P_ij`.
pub fn markov_entropy(m: &MarkovMeasure) -> f64 {
    let mut h = 0.0;
    for (pi, row) in m.stationary.iter().zip(&m.transition) {
        for &p in row {
            if p > 0.0 {
                h -= pi * p * p.ln();
            }
        }
    }
    h
}

/// Mixes each row with the uniform distribution on its admissible successors
/// at weight `t` and re-solves for the stationary vector. For `t > 0` the
/// result charges every admissible cylinder, hence is ergodic.
pub fn approximate_in_entropy(
    target: &MarkovMeasure,
    graph: &TransitionGraph,
    t: f64,
) -> Result<MarkovMeasure> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!("mixing weight {t} outside [0, 1]")));
    }
    if graph.size() != target.size() {
        return Err(Error::LengthMismatch {
            left: graph.size(),
            right: target.size(),
        });
    }
    if !graph.is_transitive() {
        return Err(Error::NonTransitive);
    }
    for (i, row) in target.transition.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 && !graph.adj[i][j] {
                return Err(Error::InvalidParameter(format!(
                    "target charges transition {i}->{j} outside the graph"
                )));
            }
        }
    }
    if t == 0.0 {
        return Ok(target.clone());
    }
    let transition = target
        .transition
        .iter()
        .zip(&graph.adj)
        .map(|(row, adj)| {
            let deg = adj.iter().filter(|&&e| e).count() as f64;
            row.iter()
                .zip(adj)
                .map(|(&p, &e)| (1.0 - t) * p + if e { t / deg } else { 0.0 })
                .collect()
        })
        .collect();
    MarkovMeasure::new(transition)
}
