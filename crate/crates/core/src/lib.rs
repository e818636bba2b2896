//! Gauge transforms of autonomous polynomial ODEs by time-dependent linear
//! maps, and identification of nonautonomous systems as such transforms.
//!
//! Given `x' = f(x)` and an invertible matrix curve `A(t)`, the gauge
//! transform is `y' = A' A^{-1} y + A f(A^{-1} y)`; solutions correspond via
//! `w(t) = A(t) z(t)`. The [`identify`] module decides, for a polynomial
//! system with time-dependent coefficients, whether such `f` and `A` exist.

// `!(x > 0.0)` rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod gauge;
pub mod identify;
pub mod io;
pub mod linalg;
pub mod matcurve;
pub mod odeint;
pub mod polyfield;
pub mod timexpr;

pub use error::{Error, Result};
