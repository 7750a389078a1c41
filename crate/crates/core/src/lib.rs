//! Numerical toolkit for surface diffeomorphisms and symbolic shifts:
//! Lyapunov exponents through the projective cocycle, neutral-block orbit
//! decompositions, covering-number entropy estimates, curve reparametrization
//! counts, and the dimension and continuity formulas built from them.

// `!(x > 0.0)` style checks are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod curve;
pub mod diagnostics;
pub mod dynamics;
pub mod entropy;
pub mod error;
pub mod lyapunov;
pub mod neutral;
pub mod shift_lab;

pub use dynamics::{
    cocycle_sum, lift_jacobian, lift_step, Domain, MapFamily, MapKind, MapSpec, Mat2, Point2,
    ProjPoint, Rect, SurfaceMap,
};
pub use error::{Error, Result};
pub use lyapunov::{ExponentEstimate, MassSplit, OseledetsFrame};
pub use diagnostics::{MeasureReport, SequenceReport};
