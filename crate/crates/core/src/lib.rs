//! Boundary obstacle operator for the conformal Laplacian / conformal Robin
//! pair, the Cherrier-Escobar quotient `E_p` and its optimal boundary control
//! counterpart `I_p`, together with a P1 discretization of the flat unit ball
//! in three dimensions.
//!
//! Module map:
//! - [`algebra`]: pairings, boundary traces, exact conformal pullback.
//! - [`obstacle`]: the obstacle map `T` and its fixed points.
//! - [`functionals`]: `E_p`, `I_p`, deficits and the minimizing-sequence driver.
//! - [`fem`]: ball meshes, assembly, curvature residuals.
//! - [`bubbles`]: closed-form extremals and the sharp trace constant.
//! - [`io`], [`runner`]: file formats and the command driver.

// `!(x >= lo)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod bubbles;
pub mod error;
pub mod fem;
pub mod io;
pub mod lemmas;
pub mod linalg;
pub mod functionals;
pub mod obstacle;
pub mod runner;
pub mod synthetic;

pub use error::{Result, YoError};
