//! Covering numbers by Bowen balls on stored orbit arrays.
//!
//! Every count comes as a bracket. The upper end is a greedy cover by balls
//! centered at cloud points; the lower end is a maximal `2 eps`-separated set
//! (or, for the measure version, the number of largest `2 eps`-balls needed
//! to reach the target mass), which no cover by `eps`-balls with arbitrary
//! centers can beat.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{fiber_dist, Point2, ProjPoint, SurfaceMap};
use crate::error::{Error, Result};

/// A point of a metric space with a uniform grid for neighbor search.
pub trait Site: Clone + Send + Sync {
    fn dist(&self, other: &Self) -> f64;

    /// Grid cell at `scale`; points closer than `scale` lie in the same or
    /// a neighboring cell.
    fn cell(&self, scale: f64) -> [i64; 2];

    fn neighbor_cells(cell: [i64; 2], scale: f64) -> Vec<[i64; 2]>;

    /// True when `dist < scale` holds exactly for points in the same cell.
    fn cells_isolated(_scale: f64) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnTorus(pub Point2);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnPlane(pub Point2);

/// Symbol with the discrete metric (distance 1 between distinct symbols).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Symbol(pub i64);

/// Point of the projective bundle over a base site.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lifted<B> {
    pub base: B,
    pub theta: f64,
}

fn torus_cells_per_side(scale: f64) -> i64 {
    ((1.0 / scale).floor() as i64).max(1)
}

impl Site for OnTorus {
    fn dist(&self, other: &Self) -> f64 {
        self.0.torus_dist(&other.0)
    }

    fn cell(&self, scale: f64) -> [i64; 2] {
        let m = torus_cells_per_side(scale);
        let p = self.0.wrap();
        let c = |x: f64| ((x * m as f64).floor() as i64).rem_euclid(m);
        [c(p.u), c(p.v)]
    }

    fn neighbor_cells(cell: [i64; 2], scale: f64) -> Vec<[i64; 2]> {
        let m = torus_cells_per_side(scale);
        let mut out: Vec<[i64; 2]> = (-1..=1)
            .flat_map(|du| (-1..=1).map(move |dv| [(cell[0] + du).rem_euclid(m), (cell[1] + dv).rem_euclid(m)]))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

impl Site for OnPlane {
    fn dist(&self, other: &Self) -> f64 {
        self.0.plane_dist(&other.0)
    }

    fn cell(&self, scale: f64) -> [i64; 2] {
        [(self.0.u / scale).floor() as i64, (self.0.v / scale).floor() as i64]
    }

    fn neighbor_cells(cell: [i64; 2], _scale: f64) -> Vec<[i64; 2]> {
        (-1..=1)
            .flat_map(|du| (-1..=1).map(move |dv| [cell[0] + du, cell[1] + dv]))
            .collect()
    }
}

impl Site for Symbol {
    fn dist(&self, other: &Self) -> f64 {
        if self.0 == other.0 {
            0.0
        } else {
            1.0
        }
    }

    fn cell(&self, scale: f64) -> [i64; 2] {
        if scale <= 1.0 {
            [self.0, 0]
        } else {
            [0, 0]
        }
    }

    fn neighbor_cells(cell: [i64; 2], _scale: f64) -> Vec<[i64; 2]> {
        vec![cell]
    }

    fn cells_isolated(scale: f64) -> bool {
        scale <= 1.0
    }
}

impl<B: Site> Site for Lifted<B> {
    /// Bundle metric `sqrt(d_base^2 + d_fiber^2)`.
    fn dist(&self, other: &Self) -> f64 {
        self.base
            .dist(&other.base)
            .hypot(fiber_dist(self.theta, other.theta))
    }

    fn cell(&self, scale: f64) -> [i64; 2] {
        self.base.cell(scale)
    }

    fn neighbor_cells(cell: [i64; 2], scale: f64) -> Vec<[i64; 2]> {
        B::neighbor_cells(cell, scale)
    }
}

impl Lifted<OnTorus> {
    pub fn from_proj(p: &ProjPoint) -> Self {
        Self {
            base: OnTorus(p.base),
            theta: p.theta,
        }
    }
}

impl Lifted<OnPlane> {
    pub fn from_proj(p: &ProjPoint) -> Self {
        Self {
            base: OnPlane(p.base),
            theta: p.theta,
        }
    }
}

/// Orbit arrays of equal length with an empirical mass per orbit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitCloud<A> {
    pub orbits: Vec<Vec<A>>,
    pub weights: Vec<f64>,
}

impl<A: Site> OrbitCloud<A> {
    pub fn new(orbits: Vec<Vec<A>>, weights: Vec<f64>) -> Result<Self> {
        if orbits.is_empty() {
            return Err(Error::InsufficientData("empty orbit cloud".into()));
        }
        if orbits.len() != weights.len() {
            return Err(Error::LengthMismatch {
                left: orbits.len(),
                right: weights.len(),
            });
        }
        let len = orbits[0].len();
        if let Some(bad) = orbits.iter().find(|o| o.len() != len) {
            return Err(Error::LengthMismatch {
                left: len,
                right: bad.len(),
            });
        }
        if weights.iter().any(|&w| !(w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("weights must be nonnegative and sum to 1".into()));
        }
        Ok(Self { orbits, weights })
    }

    pub fn uniform(orbits: Vec<Vec<A>>) -> Result<Self> {
        let w = 1.0 / orbits.len().max(1) as f64;
        let weights = vec![w; orbits.len()];
        Self::new(orbits, weights)
    }

    /// Windows `traj[j..j + n_max]` for `j < n_points`, equally weighted.
    pub fn from_trajectory(traj: &[A], n_points: usize, n_max: usize) -> Result<Self> {
        if traj.len() < n_points + n_max.saturating_sub(1) || n_points == 0 || n_max == 0 {
            return Err(Error::InsufficientData(format!(
                "trajectory of length {} cannot supply {n_points} windows of length {n_max}",
                traj.len()
            )));
        }
        Self::uniform((0..n_points).map(|j| traj[j..j + n_max].to_vec()).collect())
    }

    pub fn len(&self) -> usize {
        self.orbits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orbits.is_empty()
    }

    pub fn n_max(&self) -> usize {
        self.orbits[0].len()
    }

    fn check_n(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.n_max() {
            return Err(Error::InvalidParameter(format!(
                "n = {n} outside 1..={}",
                self.n_max()
            )));
        }
        Ok(())
    }
}

impl<B: Site> OrbitCloud<Lifted<B>> {
    /// The base cloud under the bundle projection.
    pub fn project(&self) -> OrbitCloud<B> {
        OrbitCloud {
            orbits: self
                .orbits
                .iter()
                .map(|o| o.iter().map(|p| p.base.clone()).collect())
                .collect(),
            weights: self.weights.clone(),
        }
    }
}

/// Orbits of `map` of length `n_max` from each start, on the torus.
pub fn torus_cloud(map: &SurfaceMap, starts: &[Point2], n_max: usize) -> Result<OrbitCloud<OnTorus>> {
    let orbits = starts
        .par_iter()
        .map(|&x| Ok(map.orbit(x, n_max - 1)?.into_iter().map(OnTorus).collect()))
        .collect::<Result<Vec<_>>>()?;
    OrbitCloud::uniform(orbits)
}

/// One symbol orbit per word: the `k`-th site of orbit `i` is `words[i][k]`.
pub fn word_cloud(words: &[Vec<i64>]) -> Result<OrbitCloud<Symbol>> {
    OrbitCloud::uniform(
        words
            .iter()
            .map(|w| w.iter().copied().map(Symbol).collect())
            .collect(),
    )
}

enum Balls {
    /// Balls are the classes of a partition (isolated cells).
    Partition(Vec<Vec<u32>>),
    /// `lists[i]` is the ball around cloud point `i`.
    Lists(Vec<Vec<u32>>),
}

fn build_balls<A: Site>(
    cloud: &OrbitCloud<A>,
    n: usize,
    grid_scale: f64,
    isolated: bool,
    within: impl Fn(&A, &A) -> bool + Sync,
) -> Balls {
    if isolated {
        let mut groups: HashMap<Vec<[i64; 2]>, usize> = HashMap::new();
        let mut classes: Vec<Vec<u32>> = Vec::new();
        for (i, orbit) in cloud.orbits.iter().enumerate() {
            let key: Vec<[i64; 2]> = orbit[..n].iter().map(|p| p.cell(grid_scale)).collect();
            let next = classes.len();
            let slot = *groups.entry(key).or_insert(next);
            if slot == next {
                classes.push(Vec::new());
            }
            classes[slot].push(i as u32);
        }
        return Balls::Partition(classes);
    }
    let mut grid: HashMap<[i64; 2], Vec<u32>> = HashMap::new();
    for (i, orbit) in cloud.orbits.iter().enumerate() {
        grid.entry(orbit[0].cell(grid_scale)).or_default().push(i as u32);
    }
    let lists = cloud
        .orbits
        .par_iter()
        .map(|oi| {
            let mut out: Vec<u32> = A::neighbor_cells(oi[0].cell(grid_scale), grid_scale)
                .iter()
                .filter_map(|c| grid.get(c))
                .flatten()
                .copied()
                .filter(|&j| {
                    let oj = &cloud.orbits[j as usize];
                    (0..n).all(|k| within(&oi[k], &oj[k]))
                })
                .collect();
            out.sort_unstable();
            out
        })
        .collect();
    Balls::Lists(lists)
}

#[derive(PartialEq)]
struct Gain {
    value: f64,
    index: u32,
}

impl Eq for Gain {}

impl PartialOrd for Gain {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Gain {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.index.cmp(&self.index))
    }
}

/// Greedy max-coverage: balls are picked by uncovered mass until the covered
/// mass reaches `gamma`, or until every point is covered when `gamma` is `None`.
fn greedy_cover(balls: &Balls, weights: &[f64], gamma: Option<f64>) -> usize {
    let reached = |covered_mass: f64, covered_count: usize| match gamma {
        None => covered_count == weights.len(),
        Some(g) => covered_mass >= g - 1e-12,
    };
    match balls {
        Balls::Partition(classes) => {
            let mut masses: Vec<(f64, usize)> = classes
                .iter()
                .map(|c| (c.iter().map(|&i| weights[i as usize]).sum::<f64>(), c.len()))
                .collect();
            masses.sort_by(|a, b| b.0.total_cmp(&a.0));
            let (mut mass, mut count) = (0.0, 0);
            for (picked, (m, c)) in masses.iter().enumerate() {
                if reached(mass, count) {
                    return picked;
                }
                mass += m;
                count += c;
            }
            masses.len()
        }
        Balls::Lists(lists) => {
            let mut covered = vec![false; weights.len()];
            let gain_of = |i: usize, covered: &[bool]| -> f64 {
                lists[i]
                    .iter()
                    .filter(|&&j| !covered[j as usize])
                    .map(|&j| match gamma {
                        None => 1.0,
                        Some(_) => weights[j as usize],
                    })
                    .sum()
            };
            let mut heap: BinaryHeap<Gain> = (0..lists.len())
                .map(|i| Gain {
                    value: gain_of(i, &covered),
                    index: i as u32,
                })
                .collect();
            let (mut mass, mut count, mut picked) = (0.0, 0usize, 0usize);
            while !reached(mass, count) {
                let Some(top) = heap.pop() else { break };
                let fresh = gain_of(top.index as usize, &covered);
                if fresh < top.value {
                    heap.push(Gain {
                        value: fresh,
                        index: top.index,
                    });
                    continue;
                }
                for &j in &lists[top.index as usize] {
                    if !covered[j as usize] {
                        covered[j as usize] = true;
                        mass += weights[j as usize];
                        count += 1;
                    }
                }
                picked += 1;
            }
            picked
        }
    }
}

/// Size of a maximal separated set, scanning points in index order.
fn separated_count(balls: &Balls) -> usize {
    match balls {
        Balls::Partition(classes) => classes.len(),
        Balls::Lists(lists) => {
            let mut blocked = vec![false; lists.len()];
            let mut count = 0;
            for (i, ball) in lists.iter().enumerate() {
                if !blocked[i] {
                    count += 1;
                    for &j in ball {
                        blocked[j as usize] = true;
                    }
                }
            }
            count
        }
    }
}

/// Fewest of the heaviest balls whose masses add up to `gamma`.
fn heaviest_balls_needed(balls: &Balls, weights: &[f64], gamma: f64) -> usize {
    let mut masses: Vec<f64> = match balls {
        Balls::Partition(classes) => classes
            .iter()
            .map(|c| c.iter().map(|&i| weights[i as usize]).sum())
            .collect(),
        Balls::Lists(lists) => lists
            .iter()
            .map(|l| l.iter().map(|&i| weights[i as usize]).sum())
            .collect(),
    };
    masses.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    for (i, m) in masses.iter().enumerate() {
        acc += m;
        if acc >= gamma - 1e-12 {
            return i + 1;
        }
    }
    masses.len()
}

/// Lower and upper estimates of a covering number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverBracket {
    pub packing: usize,
    pub cover: usize,
}

fn bracket_for<A: Site>(
    cloud: &OrbitCloud<A>,
    n: usize,
    scale: f64,
    gamma: Option<f64>,
    within: impl Fn(&A, &A, f64) -> bool + Sync,
    isolated_ok: bool,
) -> CoverBracket {
    let iso = |s: f64| isolated_ok && A::cells_isolated(s);
    let balls = build_balls(cloud, n, scale, iso(scale), |a, b| within(a, b, 1.0));
    let cover = greedy_cover(&balls, &cloud.weights, gamma);
    drop(balls);
    let wide = build_balls(cloud, n, 2.0 * scale, iso(2.0 * scale), |a, b| within(a, b, 2.0));
    let packing = match gamma {
        None => separated_count(&wide),
        Some(g) => heaviest_balls_needed(&wide, &cloud.weights, g),
    };
    CoverBracket { packing, cover }
}

/// Covering number of the cloud's starting points by `(n, eps)`-Bowen balls.
pub fn bowen_cover<A: Site>(cloud: &OrbitCloud<A>, n: usize, eps: f64) -> Result<CoverBracket> {
    cloud.check_n(n)?;
    check_positive("eps", eps)?;
    Ok(bracket_for(cloud, n, eps, None, |a, b, s| a.dist(b) < s * eps, true))
}

/// Balls needed to cover empirical mass `gamma`.
pub fn katok_cover<A: Site>(cloud: &OrbitCloud<A>, n: usize, eps: f64, gamma: f64) -> Result<CoverBracket> {
    cloud.check_n(n)?;
    check_positive("eps", eps)?;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!("gamma = {gamma} outside (0, 1)")));
    }
    Ok(bracket_for(cloud, n, eps, Some(gamma), |a, b, s| a.dist(b) < s * eps, true))
}

/// Covering by fibered balls: base distance `< eps` and bundle distance
/// `< eps_hat` at every step `k < n`.
pub fn fibered_cover<B: Site>(
    cloud: &OrbitCloud<Lifted<B>>,
    n: usize,
    eps: f64,
    eps_hat: f64,
) -> Result<CoverBracket> {
    cloud.check_n(n)?;
    check_positive("eps", eps)?;
    check_positive("eps_hat", eps_hat)?;
    let scale = eps.min(eps_hat);
    Ok(bracket_for(
        cloud,
        n,
        scale,
        None,
        |a: &Lifted<B>, b: &Lifted<B>, s| a.base.dist(&b.base) < s * eps && a.dist(b) < s * eps_hat,
        false,
    ))
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {x}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverEntry {
    pub n: usize,
    pub eps: f64,
    pub eps_hat: Option<f64>,
    pub gamma: Option<f64>,
    pub cover: usize,
    pub packing: usize,
}

impl CoverEntry {
    /// Every ball of `self` is also a ball of `other`, so covers of `self`
    /// cover `other` and separated sets of `other` are separated for `self`.
    fn at_least_as_strict_as(&self, other: &Self) -> bool {
        let hat = match (self.eps_hat, other.eps_hat) {
            (None, None) => true,
            (Some(a), Some(b)) => a <= b,
            _ => false,
        };
        let gamma = self.gamma.unwrap_or(1.0) >= other.gamma.unwrap_or(1.0);
        self.n >= other.n && self.eps <= other.eps && hat && gamma
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverTable {
    pub entries: Vec<CoverEntry>,
}

impl CoverTable {
    pub fn push(&mut self, e: CoverEntry) {
        self.entries.push(e);
    }

    /// Replaces each upper count by the best valid cover from any stricter
    /// entry and each lower count by the best bound from any looser entry,
    /// which makes both monotone across the sweep.
    pub fn tighten(&mut self) {
        let raw = self.entries.clone();
        for e in &mut self.entries {
            for o in &raw {
                if o.at_least_as_strict_as(e) {
                    e.cover = e.cover.min(o.cover);
                }
                if e.at_least_as_strict_as(o) {
                    e.packing = e.packing.max(o.packing);
                }
            }
            e.packing = e.packing.min(e.cover);
        }
    }

    /// Violations of the monotonicity invariant, as pairs of entry indices.
    pub fn monotonicity_violations(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, a) in self.entries.iter().enumerate() {
            for (j, b) in self.entries.iter().enumerate() {
                if i != j && a.at_least_as_strict_as(b) && (a.cover < b.cover || a.packing < b.packing) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Least-squares slope of `ln count` against `n` over the larger-`n` half of
/// the entries at `eps_fixed`.
pub fn entropy_rate(table: &CoverTable, eps_fixed: f64) -> Result<f64> {
    rate_of(table, eps_fixed, |e| e.cover)
}

/// `(lower, upper)` rates from the packing and cover columns.
pub fn rate_bracket(table: &CoverTable, eps_fixed: f64) -> Result<(f64, f64)> {
    Ok((rate_of(table, eps_fixed, |e| e.packing)?, rate_of(table, eps_fixed, |e| e.cover)?))
}

fn rate_of(table: &CoverTable, eps_fixed: f64, count: impl Fn(&CoverEntry) -> usize) -> Result<f64> {
    let mut pts: Vec<(f64, f64)> = table
        .entries
        .iter()
        .filter(|e| (e.eps - eps_fixed).abs() <= 1e-12 * eps_fixed.abs().max(1.0))
        .map(|e| (e.n as f64, (count(e).max(1) as f64).ln()))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|a, b| a.0 == b.0);
    if pts.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "entropy rate needs 4 values of n at eps = {eps_fixed}, got {}",
            pts.len()
        )));
    }
    let tail = &pts[pts.len() / 2..];
    Ok(least_squares_slope(tail))
}

/// `(n, ln packing / n, ln cover / n)` for each entry at `eps_fixed`, sorted by `n`.
pub fn ratio_rates(table: &CoverTable, eps_fixed: f64) -> Vec<(usize, f64, f64)> {
    let mut out: Vec<(usize, f64, f64)> = table
        .entries
        .iter()
        .filter(|e| e.n > 0 && (e.eps - eps_fixed).abs() <= 1e-12 * eps_fixed.abs().max(1.0))
        .map(|e| {
            let n = e.n as f64;
            (e.n, (e.packing.max(1) as f64).ln() / n, (e.cover.max(1) as f64).ln() / n)
        })
        .collect();
    out.sort_by_key(|r| r.0);
    out
}

pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Largest entropy among components of positive weight.
pub fn essential_sup_entropy(component_entropies: &[f64], weights: &[f64]) -> Result<f64> {
    if component_entropies.len() != weights.len() {
        return Err(Error::LengthMismatch {
            left: component_entropies.len(),
            right: weights.len(),
        });
    }
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::InvalidParameter("weights must be nonnegative".into()));
    }
    component_entropies
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&h, _)| h)
        .reduce(f64::max)
        .ok_or_else(|| Error::InsufficientData("no component has positive weight".into()))
}
