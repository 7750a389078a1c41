//! Lyapunov exponents along single orbits, Oseledets directions, and the
//! algebra relating escaped mass to the drop of the top exponent.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    fiber_dist, normalize_angle, with_step, Mat2, Point2, ProjPoint, SurfaceMap,
};
use crate::error::{Error, Result};

/// Golden-angle seed direction; avoids axis-aligned degenerate lines.
pub const GOLDEN_ANGLE: f64 = PI * 0.763_932_022_500_210_3; // pi (3 - sqrt 5)

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub n_used: usize,
    /// `|mean of the last quarter of phi - mean of all of phi|`.
    pub convergence_proxy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExponentOptions {
    /// Steps discarded before averaging, so the pushed line settles on `E+`.
    pub warmup: usize,
    /// The estimate is rejected when `proxy > proxy_ratio * |lambda_plus|`.
    pub proxy_ratio: f64,
}

impl Default for ExponentOptions {
    fn default() -> Self {
        Self {
            warmup: 64,
            proxy_ratio: 0.05,
        }
    }
}

/// `theta` pushed by `m`, and `log |m v|`.
fn push(m: &Mat2, theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    let w = m.apply([c, s]);
    (normalize_angle(w[1].atan2(w[0])), w[0].hypot(w[1]).ln())
}

pub fn top_exponent(
    map: &SurfaceMap,
    x0: Point2,
    theta0: f64,
    n: usize,
) -> Result<ExponentEstimate> {
    top_exponent_with(map, x0, theta0, n, &ExponentOptions::default())
}

/// Birkhoff averages of `phi` for `f` and for `f^-1` over the same orbit
/// segment `f^w(x0), ..., f^(w+n)(x0)`.
///
/// The inverse cocycle is run backward along the stored forward orbit rather
/// than along a recomputed inverse orbit, which for dissipative maps would
/// leave the trapping region.
pub fn top_exponent_with(
    map: &SurfaceMap,
    x0: Point2,
    theta0: f64,
    n: usize,
    opts: &ExponentOptions,
) -> Result<ExponentEstimate> {
    if n < 100 {
        return Err(Error::InvalidParameter(format!(
            "exponent estimates need n >= 100, got {n}"
        )));
    }
    let w = opts.warmup;
    let orbit = map.orbit(x0, n + 2 * w)?;
    let jacobians: Vec<Mat2> = orbit[..n + 2 * w].iter().map(|&x| map.jacobian(x)).collect();

    let mut theta = normalize_angle(theta0);
    let mut phis = Vec::with_capacity(n);
    for (k, j) in jacobians[..w + n].iter().enumerate() {
        let (next, phi) = push(j, theta);
        if !phi.is_finite() {
            return Err(Error::SingularJacobian(orbit[k]));
        }
        theta = next;
        if k >= w {
            phis.push(phi);
        }
    }

    let mut theta = normalize_angle(theta0);
    let mut back_sum = 0.0;
    for k in (w..n + 2 * w).rev() {
        let inv = jacobians[k]
            .inverse()
            .ok_or(Error::SingularJacobian(orbit[k]))?;
        let (next, phi) = push(&inv, theta);
        theta = next;
        if k < w + n {
            back_sum += phi;
        }
    }

    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let lambda_plus = mean(&phis);
    let lambda_minus = -back_sum / n as f64;
    let quarter = (n / 4).max(1);
    let proxy = (mean(&phis[n - quarter..]) - lambda_plus).abs();
    let threshold = opts.proxy_ratio * lambda_plus.abs();
    if proxy > threshold {
        return Err(Error::NonConvergence { proxy, threshold });
    }
    Ok(ExponentEstimate {
        lambda_plus,
        lambda_minus,
        n_used: n,
        convergence_proxy: proxy,
    })
}

/// `a_n = (1/n) mean_x log |Df^n_x|` for `n = 1..=n_max`.
///
/// For a subadditive sequence the infimum over `n` bounds the top exponent
/// from above.
pub fn subadditive_exponent(
    map: &SurfaceMap,
    sample: &[Point2],
    n_max: usize,
) -> Result<Vec<f64>> {
    if sample.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    let per_point: Vec<Vec<f64>> = sample
        .par_iter()
        .map(|&x| log_norm_sequence(map, x, n_max))
        .collect::<Result<_>>()?;
    let m = sample.len() as f64;
    Ok((0..n_max)
        .map(|i| {
            let total: f64 = per_point.iter().map(|row| row[i]).sum();
            total / m / (i + 1) as f64
        })
        .collect())
}

fn log_norm_sequence(map: &SurfaceMap, x: Point2, n_max: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n_max);
    let mut m = Mat2::IDENTITY;
    let mut log_scale = 0.0;
    let mut p = x;
    for step in 0..n_max {
        m = map.jacobian(p).mul(&m);
        let s = m.max_abs();
        if s > 1e100 {
            m = m.scale(1.0 / s);
            log_scale += s.ln();
        }
        out.push(m.op_norm().ln() + log_scale);
        if step + 1 < n_max {
            p = map.apply(p).map_err(|e| with_step(e, step + 1))?;
        }
    }
    Ok(out)
}

/// The Oseledets lines at `x`, by pushing a seed line forward from
/// `f^-n(x)` (unstable) and backward from `f^n(x)` (stable).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OseledetsFrame {
    pub x: Point2,
    pub theta_u: f64,
    pub theta_s: f64,
}

pub const DEFAULT_SEPARATION: f64 = 1e-4;

pub fn oseledets_directions(map: &SurfaceMap, x: Point2, n_settle: usize) -> Result<OseledetsFrame> {
    oseledets_directions_with(map, x, n_settle, GOLDEN_ANGLE, DEFAULT_SEPARATION)
}

pub fn oseledets_directions_with(
    map: &SurfaceMap,
    x: Point2,
    n_settle: usize,
    theta0: f64,
    min_separation: f64,
) -> Result<OseledetsFrame> {
    let mut back = Vec::with_capacity(n_settle + 1);
    back.push(x);
    for step in 1..=n_settle {
        let prev = map
            .apply_inverse(back[step - 1])
            .map_err(|e| with_step(e, step))?;
        back.push(prev);
    }
    let mut theta_u = normalize_angle(theta0);
    for y in back[1..].iter().rev() {
        theta_u = push(&map.jacobian(*y), theta_u).0;
    }

    let forward = map.orbit(x, n_settle)?;
    let mut theta_s = normalize_angle(theta0);
    for y in forward[..n_settle].iter().rev() {
        let inv = map.jacobian(*y).inverse().ok_or(Error::SingularJacobian(*y))?;
        theta_s = push(&inv, theta_s).0;
    }

    let angle = fiber_dist(theta_u, theta_s);
    if angle < min_separation {
        return Err(Error::NonHyperbolic {
            angle,
            threshold: min_separation,
        });
    }
    Ok(OseledetsFrame {
        x: forward[0],
        theta_u,
        theta_s,
    })
}

impl OseledetsFrame {
    pub fn unstable(&self) -> ProjPoint {
        ProjPoint::new(self.x, self.theta_u)
    }

    pub fn stable(&self) -> ProjPoint {
        ProjPoint::new(self.x, self.theta_s)
    }
}

/// Weight `a` of a limit lift carried by the graph of `E-`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct MassSplit(f64);

impl MassSplit {
    pub fn new(a: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&a) {
            Ok(Self(a))
        } else {
            Err(Error::InvalidParameter(format!("mass split {a} outside [0, 1]")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for MassSplit {
    type Error = Error;

    fn try_from(a: f64) -> Result<Self> {
        Self::new(a)
    }
}

impl From<MassSplit> for f64 {
    fn from(a: MassSplit) -> f64 {
        a.0
    }
}

/// `lambda+ - a (lambda+ - lambda-)`: the limit top exponent when mass `a`
/// of the lift ends up on the stable graph.
pub fn defect_limit(lambda_plus: f64, lambda_minus: f64, a: MassSplit) -> f64 {
    lambda_plus - a.0 * (lambda_plus - lambda_minus)
}

/// `beta = 1 - a (lambda+ + |lambda-|) / lambda+`, so that
/// `beta * lambda+ = defect_limit(lambda+, lambda-, a)`.
pub fn beta_from_mass(lambda_plus: f64, lambda_minus: f64, a: MassSplit) -> Result<f64> {
    if lambda_plus <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "beta needs lambda+ > 0, got {lambda_plus}"
        )));
    }
    if lambda_minus >= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "beta needs lambda- < 0, got {lambda_minus}"
        )));
    }
    Ok(1.0 - a.0 * (lambda_plus + lambda_minus.abs()) / lambda_plus)
}
