//! Dimension, pressure and continuity checks over `(h, lambda+, lambda-)` reports.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for exponent identities.
pub const EXPONENT_TOL: f64 = 0.02;
/// Absolute tolerance for entropy inequalities.
pub const ENTROPY_TOL: f64 = 0.1;
/// Slack in the Ruelle gate `h <= lambda+`.
pub const RUELLE_SLACK: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub h: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
}

impl MeasureReport {
    pub fn new(h: f64, lambda_plus: f64, lambda_minus: f64) -> Self {
        Self {
            h,
            lambda_plus,
            lambda_minus,
        }
    }

    pub fn is_hyperbolic(&self) -> bool {
        self.lambda_plus > 0.0 && self.lambda_minus < 0.0
    }

    /// `h <= lambda+ + slack`.
    pub fn ruelle_gate(&self, slack: f64) -> bool {
        self.h <= self.lambda_plus + slack
    }

    fn require_hyperbolic(&self) -> Result<()> {
        if self.is_hyperbolic() {
            Ok(())
        } else {
            Err(Error::NonHyperbolicReport {
                lambda_plus: self.lambda_plus,
                lambda_minus: self.lambda_minus,
            })
        }
    }

    fn require_expanding(&self) -> Result<()> {
        if self.lambda_plus > 0.0 {
            Ok(())
        } else {
            Err(Error::NonHyperbolicReport {
                lambda_plus: self.lambda_plus,
                lambda_minus: self.lambda_minus,
            })
        }
    }
}

/// Reports along a sequence `(f_k, nu_k)` with its limit measure and the
/// mass `beta` of the non-neutral part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub member_reports: Vec<MeasureReport>,
    pub limit_report: MeasureReport,
    pub beta: f64,
}

impl SequenceReport {
    pub fn new(
        member_reports: Vec<MeasureReport>,
        limit_report: MeasureReport,
        beta: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidParameter(format!("beta must lie in [0, 1], got {beta}")));
        }
        if member_reports.is_empty() {
            return Err(Error::InsufficientData("sequence has no members".into()));
        }
        Ok(Self {
            member_reports,
            limit_report,
            beta,
        })
    }

    /// Mean over the last quarter of the members.
    pub fn member_limit(&self) -> SequenceLimit {
        sequence_limit(&self.member_reports)
    }
}

/// Limit estimate with the spread (max - min) of each field over the window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceLimit {
    pub mean: MeasureReport,
    pub spread: MeasureReport,
    pub window: usize,
}

pub fn sequence_limit(members: &[MeasureReport]) -> SequenceLimit {
    let window = members.len().div_ceil(4).max(1).min(members.len());
    let tail = &members[members.len() - window..];
    let field = |f: fn(&MeasureReport) -> f64| {
        let vals = tail.iter().map(f);
        let mean = vals.clone().sum::<f64>() / window as f64;
        let lo = vals.clone().fold(f64::INFINITY, f64::min);
        let hi = vals.fold(f64::NEG_INFINITY, f64::max);
        (mean, hi - lo)
    };
    let (h, dh) = field(|r| r.h);
    let (lp, dlp) = field(|r| r.lambda_plus);
    let (lm, dlm) = field(|r| r.lambda_minus);
    SequenceLimit {
        mean: MeasureReport::new(h, lp, lm),
        spread: MeasureReport::new(dh, dlp, dlm),
        window,
    }
}

/// `h (1/lambda+ + 1/|lambda-|)`.
pub fn hausdorff_dim(r: &MeasureReport) -> Result<f64> {
    r.require_hyperbolic()?;
    Ok(r.h / r.lambda_plus + r.h / r.lambda_minus.abs())
}

/// `h / lambda+`.
pub fn unstable_dim(r: &MeasureReport) -> Result<f64> {
    r.require_expanding()?;
    Ok(r.h / r.lambda_plus)
}

/// `h - lambda+`.
pub fn pressure(r: &MeasureReport) -> Result<f64> {
    r.require_expanding()?;
    Ok(r.h - r.lambda_plus)
}

pub fn srb_flag(r: &MeasureReport, tol: f64) -> Result<bool> {
    Ok(pressure(r)?.abs() < tol)
}

/// Relative loss of the top exponent along the sequence,
/// `(lambda+ - lim lambda+) / lambda+`.
pub fn discontinuity_ratio(s: &SequenceReport) -> Result<f64> {
    s.limit_report.require_expanding()?;
    let lim = s.member_limit().mean.lambda_plus;
    Ok((s.limit_report.lambda_plus - lim) / s.limit_report.lambda_plus)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityTolerances {
    pub exponent: f64,
    pub entropy: f64,
}

impl Default for IdentityTolerances {
    fn default() -> Self {
        Self {
            exponent: EXPONENT_TOL,
            entropy: ENTROPY_TOL,
        }
    }
}

/// Exponent and entropy identities for a sequence against the part `mu1`.
///
/// First flag: `|lim lambda+ - beta lambda+(mu1)| < tol`.
/// Second flag: `lim h - (lambda(f) + lambda(f^-1)) / (r - 1) <= beta h(mu1) + tol`.
pub fn main_identity_check(
    s: &SequenceReport,
    mu1: &MeasureReport,
    r_smooth: f64,
    lambda_dilations: (f64, f64),
) -> (bool, bool) {
    main_identity_check_with(s, mu1, r_smooth, lambda_dilations, IdentityTolerances::default())
}

pub fn main_identity_check_with(
    s: &SequenceReport,
    mu1: &MeasureReport,
    r_smooth: f64,
    lambda_dilations: (f64, f64),
    tol: IdentityTolerances,
) -> (bool, bool) {
    let lim = s.member_limit().mean;
    let exponent = (lim.lambda_plus - s.beta * mu1.lambda_plus).abs() < tol.exponent;
    let correction = if r_smooth > 1.0 {
        (lambda_dilations.0 + lambda_dilations.1) / (r_smooth - 1.0)
    } else {
        f64::INFINITY
    };
    let entropy = lim.h - correction <= s.beta * mu1.h + tol.entropy;
    (exponent, entropy)
}

/// `|lambda-| (1 - lim h / h)`.
pub fn variant_bound(s: &SequenceReport, mu: &MeasureReport) -> Result<f64> {
    Ok(mu.lambda_minus.abs() * entropy_loss(s, mu)?)
}

/// `lambda+ (1 - lim h / h)`.
pub fn gold_variant_bound(s: &SequenceReport, mu: &MeasureReport) -> Result<f64> {
    Ok(mu.lambda_plus * entropy_loss(s, mu)?)
}

fn entropy_loss(s: &SequenceReport, mu: &MeasureReport) -> Result<f64> {
    if mu.h <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "entropy of the limit measure must be positive, got {}",
            mu.h
        )));
    }
    Ok(1.0 - s.member_limit().mean.h / mu.h)
}

/// `lambda+ - lim lambda+ <= |lambda-| (1 - lim h / h) + tol`.
pub fn variant_bound_check(s: &SequenceReport, mu: &MeasureReport) -> Result<bool> {
    variant_bound_check_with(s, mu, EXPONENT_TOL)
}

pub fn variant_bound_check_with(s: &SequenceReport, mu: &MeasureReport, tol: f64) -> Result<bool> {
    let defect = mu.lambda_plus - s.member_limit().mean.lambda_plus;
    Ok(defect <= variant_bound(s, mu)? + tol)
}
