use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// The normal distribution puts (numerically) no mass on the requested interval.
    #[error(
        "degenerate truncated normal: interval ({lower}, {upper}) has negligible mass \
         under N({mean}, {sd}^2)"
    )]
    Degenerate {
        lower: f64,
        upper: f64,
        mean: f64,
        sd: f64,
    },

    #[error("latent draw failed for observation {observation}: {source}")]
    Observation {
        observation: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("linear algebra error: {0}")]
    LinearAlgebra(String),

    #[error("invalid dataset:\n{0}")]
    Validation(ValidationReport),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("initialisation failed: {0}")]
    Init(String),

    #[error("chain {chain} failed at sweep {sweep}: {source}")]
    Sampler {
        chain: usize,
        sweep: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("proposal tuning did not converge; acceptance trajectory per scale: {trajectory:?}")]
    Tuning { trajectory: Vec<Vec<f64>> },

    #[error("simulation failed: {0}")]
    Simulation(String),

    #[error("stratification failed: {0}")]
    Stratification(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    Empty,

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
}

impl Error {
    /// True for failures that originate in the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Degenerate { .. }
            | Error::LinearAlgebra(_)
            | Error::Tuning { .. }
            | Error::Simulation(_)
            | Error::Init(_) => true,
            Error::Observation { source, .. } | Error::Sampler { source, .. } => {
                source.is_numerical()
            }
            _ => false,
        }
    }
}

/// Every problem found while validating a dataset, with row indices (0-based).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RowLength { row: usize, expected: usize, found: usize },
    LabelOutOfRange { row: usize, scale_id: i64, label: i64, num_classes: usize },
    UnknownScale { row: usize, scale_id: i64 },
    ZeroColumn { column: usize },
    NonFinite { row: usize, column: usize },
    LengthMismatch { what: &'static str, expected: usize, found: usize },
    NoRows,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowLength { row, expected, found } => {
                write!(f, "row {row}: expected {expected} features, found {found}")
            }
            Violation::LabelOutOfRange { row, scale_id, label, num_classes } => write!(
                f,
                "row {row}: label {label} outside 1..={num_classes} for scale {scale_id}"
            ),
            Violation::UnknownScale { row, scale_id } => {
                write!(f, "row {row}: scale {scale_id} is not declared")
            }
            Violation::ZeroColumn { column } => write!(
                f,
                "feature column {} is zero in every row",
                column + 1
            ),
            Violation::NonFinite { row, column } => {
                write!(f, "row {row}: feature {} is not finite", column + 1)
            }
            Violation::LengthMismatch { what, expected, found } => {
                write!(f, "{what}: expected {expected} entries, found {found}")
            }
            Violation::NoRows => write!(f, "dataset has no rows"),
        }
    }
}
