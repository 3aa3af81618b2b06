//! Gradient-tracking consensus optimization over switching weight-balanced
//! digraphs: graph construction and validation, spectral step-size bounds,
//! cost models, centralized reference solvers, and the discrete iteration
//! with its continuous-time cross-check.

pub mod costs;
pub mod dynamics;
pub mod error;
pub mod graphs;
pub mod oracle;
pub mod spectral;

pub use error::{Error, Result};
