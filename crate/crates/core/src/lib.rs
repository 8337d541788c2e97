//! Large-time asymptotic expansion of incompressible Navier–Stokes flow in
//! vorticity form.
//!
//! The crate builds the self-similar expansion profiles of the velocity from
//! explicit heat-kernel and Riesz-kernel sums, extracts their coefficients from
//! a pseudo-spectral simulation of the 2-D vorticity equation on a large
//! periodic box, and checks the predicted structure and decay rates.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coeffs;
pub mod error;
pub mod expansion;
pub mod extract;
pub mod field;
pub mod field_io;
pub mod grid;
pub mod kernel;
pub mod multi_index;
pub mod par;
pub mod quad;
pub mod runner;
pub mod solver;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
pub use field::{Field, Rank, Rescaled};
pub use grid::Grid;
pub use multi_index::MultiIndex;
