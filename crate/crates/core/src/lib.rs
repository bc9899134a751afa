//! Polya tree priors on the unit cube and the posterior entropy estimator
//! built on them.
//!
//! The crate is organised bottom-up: [`partition`] indexes the dyadic cells,
//! [`specfun`] supplies the polygamma functions, [`tree`] holds priors, count
//! trees and posteriors, [`entropy`] the estimator, and [`divergence`] the
//! KL/TV functionals against a known density.

pub mod divergence;
pub mod entropy;
pub mod error;
pub mod partition;
pub mod quadrature;
pub mod specfun;
pub mod tree;

pub use divergence::{
    cell_probabilities, entropy_series, expected_posterior_kl, kl_series, total_variation,
    CellMassSource, CellProbabilityTable, DensityOracle,
};
pub use entropy::{
    deterministic_truncation, entropy_estimate, max_impact_level, posterior_variance,
    tail_correction, EntropyEstimate, TruncationKind, TruncationPolicy,
};
pub use error::{Error, Result};
pub use partition::{BinaryPath, CellBox, PartitionSpec};
pub use tree::{
    density_envelope, sample_density, CountTree, PosteriorTree, PriorSchedule, SampledDensity,
};
