//! Numerical toolkit for Liouville conformal field theory on the cylinder and
//! the torus: the Υ function and DOZZ structure constants, the radial
//! processes behind the Williams decomposition, lateral log-correlated fields,
//! Gaussian multiplicative chaos masses and Monte Carlo correlator estimators.
//!
//! The `parallel` feature (on by default) runs Monte Carlo loops with rayon;
//! without it every [`mc::ExecPolicy`] falls back to a sequential loop with
//! identical results.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correlators;
pub mod error;
pub mod fields;
pub mod gmc;
pub mod mc;
pub mod processes;
pub mod quadrature;
pub mod special_functions;
pub mod stats;

pub use error::{Error, Result};
pub use special_functions::{LiouvilleParams, MomentOrder};
