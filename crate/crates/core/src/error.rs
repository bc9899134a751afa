use thiserror::Error;

/// Errors raised by the Polya tree routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {index} lies outside the unit cube [0,1)^{dim}: {point:?}")]
    Domain {
        index: usize,
        dim: usize,
        point: Vec<f64>,
    },

    #[error("point {index} has {got} coordinates, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },

    #[error("depth {depth} exceeds the resolvable precision ({max} levels for dimension {dim})")]
    Precision { depth: u32, max: u32, dim: usize },

    #[error("argument {value} outside the domain of {function}")]
    SpecialFunctionDomain { function: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("estimate is undefined for an empty sample")]
    EmptySample,

    #[error("prior schedule {0} violates sum 1/a_l < inf, the tail series diverges")]
    NonConvergentSchedule(String),

    #[error("quadrature failed to reach tolerance on cell {cell}")]
    Quadrature { cell: String },

    #[error("requested depth {requested} exceeds the available depth {available}")]
    DepthUnavailable { requested: u32, available: u32 },
}

pub type Result<T> = std::result::Result<T, Error>;
