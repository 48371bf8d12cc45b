//! Training-data attribution lab.
//!
//! Small differentiable models with exact curvature, retraining oracles,
//! gradient-based influence estimators, and a learned representation
//! scorer with attention-based group pooling trained on oracle labels.

pub mod airrep;
pub mod attr;
mod container;
pub mod data;
pub mod error;
pub mod eval;
pub mod matrix;
pub mod models;
pub mod oracle;
pub mod rng;

pub use error::{Error, Result};
