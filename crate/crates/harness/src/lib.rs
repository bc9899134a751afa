//! Density zoo, seeded experiments and report files for the Polya tree
//! entropy estimator.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod report;
pub mod stats;
pub mod zoo;

pub use error::{HarnessError, Result};
