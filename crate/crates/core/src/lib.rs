#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Band structure and gap-eigenvalue counting for the two-dimensional
//! magnetic Schrödinger operator with a one-dimensional periodic edge
//! potential.

pub mod bands;
pub mod counting;
pub mod eigenfield;
pub mod error;
pub mod fiber;
pub mod potential;
pub mod quadrature;
pub mod semiclassics;
pub mod specutil;

pub use error::{Error, Result};
pub use fiber::{FiberSolve, FiberSolver, HermiteBasis};
pub use potential::FourierPotential;
