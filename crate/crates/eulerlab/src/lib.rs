//! Numerical toolkit for 2D incompressible Euler flows with unbounded vorticity
//! in bounded, possibly multiply connected domains.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cx;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod germ;
pub mod green;
pub mod jet;
pub mod modulus;
pub mod newton;
pub mod ode;
pub mod quad;
pub mod runner;
pub mod scenario;
pub mod selfcheck;
pub mod taylor;
pub mod vortex;

pub use error::{Error, Result};
