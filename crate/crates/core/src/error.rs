use thiserror::Error;

use crate::dynamics::Point2;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point ({}, {}) lies outside the map domain", .0.u, .0.v)]
    OutsideDomain(Point2),

    #[error("orbit escaped the trapping region at step {step}: ({}, {})", .point.u, .point.v)]
    OrbitEscape { step: usize, point: Point2 },

    #[error("singular jacobian at ({}, {})", .0.u, .0.v)]
    SingularJacobian(Point2),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("forward and backward directions do not separate (angle {angle:.3e} < {threshold:.3e})")]
    NonHyperbolic { angle: f64, threshold: f64 },

    #[error("exponent estimate did not converge (proxy {proxy:.3e} > threshold {threshold:.3e})")]
    NonConvergence { proxy: f64, threshold: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("index {index} out of range for orbit of length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("support graph is not transitive")]
    NonTransitive,

    #[error("subdivision did not reach the size bound within {0} bisection levels")]
    SubdivisionLimit(usize),

    #[error("irregular curve: derivative norm {0:.3e} at a sample node")]
    IrregularCurve(f64),

    #[error("report is not hyperbolic (lambda+ = {lambda_plus}, lambda- = {lambda_minus})")]
    NonHyperbolicReport { lambda_plus: f64, lambda_minus: f64 },
}
