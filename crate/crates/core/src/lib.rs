//! Floquet multipliers of linear periodic delay equations by piecewise
//! pseudospectral collocation of the monodromy operator, plus a piecewise
//! collocation solver for the periodic orbits being linearized.
//!
//! Modules follow the pipeline: [`mesh`] and [`interp`] build grids and the
//! interpolation operators, [`model`] holds equations and orbits, [`bvp`]
//! computes orbits, [`monodromy`] assembles and solves the eigenproblem.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bvp;
pub mod cli;
pub mod error;
pub mod interp;
pub mod mesh;
pub mod model;
pub mod monodromy;
pub mod quadrature;

pub use error::{Error, Result};
