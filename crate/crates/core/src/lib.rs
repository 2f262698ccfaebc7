//! Spectral simulation and verification of attractor inequalities for
//! dissipative parabolic PDEs.

// `!(x > 0.0)` guards are written that way so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod archive;
pub mod cli;
pub mod config;
pub mod embedding;
pub mod error;
pub mod integrator;
pub mod manifold;
pub mod models;
pub mod quotients;
pub mod spectral;

pub use error::{LabError, Result};
pub use spectral::{OperatorSpec, SpectralField};
