//! Differentially private gradient voting: compressors, vote aggregation,
//! RDP accounting, and simulation harnesses.

pub mod accountant;
pub mod aggregate;
pub mod compress;
pub mod convergence;
pub mod dpsgd;
pub mod error;
pub mod grad;
pub mod output;
pub mod pate;
pub mod rng;

pub use error::{Error, Result};
