use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter value fell outside its admissible interval.
    Domain { what: &'static str, value: f64 },
    InvalidArgument(String),
    DimensionMismatch {
        field: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    NotSymmetric { field: String },
    NotPositiveDefinite { field: String, min_eig: f64 },
    NotPositiveSemidefinite { field: String, min_eig: f64 },
    NonFinite { field: String },
    TooFewPoints { needed: usize, got: usize },
    RankDeficient { field: String },
    /// Spectral radius is too large for a convergent Stein/Lyapunov iteration.
    Unstable { radius: f64 },
    /// The surrogate pair admits no stabilizing Riccati solution.
    SynthesisInfeasible(String),
    /// A trajectory left the finite range (or the divergence bound) at `step`.
    Divergence { step: usize },
    Numerical(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain { what, value } => {
                write!(f, "{what} = {value} is outside its admissible range")
            }
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::DimensionMismatch {
                field,
                expected,
                found,
            } => write!(
                f,
                "dimension mismatch in `{field}`: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::NotSymmetric { field } => write!(f, "`{field}` is not symmetric"),
            Error::NotPositiveDefinite { field, min_eig } => write!(
                f,
                "`{field}` is not positive definite (min eigenvalue {min_eig:e})"
            ),
            Error::NotPositiveSemidefinite { field, min_eig } => write!(
                f,
                "`{field}` is not positive semidefinite (min eigenvalue {min_eig:e})"
            ),
            Error::NonFinite { field } => write!(f, "`{field}` has non-finite entries"),
            Error::TooFewPoints { needed, got } => {
                write!(f, "need at least {needed} distinct grid points, got {got}")
            }
            Error::RankDeficient { field } => write!(f, "`{field}` is rank deficient"),
            Error::Unstable { radius } => {
                write!(f, "spectral radius {radius} is not below one")
            }
            Error::SynthesisInfeasible(msg) => write!(f, "synthesis infeasible: {msg}"),
            Error::Divergence { step } => write!(f, "trajectory diverged at step {step}"),
            Error::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

/// Non-fatal diagnostics attached to results.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// The state expansion order is below the order of the plant expansion.
    OrderBelowModelOrder { order: usize, model_order: usize },
    /// The closed-loop surrogate has spectral radius `>= 1`. `sampled_radius`
    /// is the largest radius of the realized loops on a parameter grid; when it
    /// is below one the instability is a truncation artifact.
    SurrogateUnstable { radius: f64, sampled_radius: f64 },
    /// More than 1% of Monte Carlo samples diverged.
    DivergentSamples { count: usize, total: usize },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::OrderBelowModelOrder { order, model_order } => write!(
                f,
                "expansion order {order} is below the plant order {model_order}; products alias"
            ),
            Warning::SurrogateUnstable {
                radius,
                sampled_radius,
            } => {
                if *sampled_radius < 1.0 {
                    write!(
                        f,
                        "surrogate radius {radius} >= 1 but sampled loops are stable \
                         (max radius {sampled_radius}); truncation artifact"
                    )
                } else {
                    write!(
                        f,
                        "closed loop unstable: surrogate radius {radius}, sampled radius {sampled_radius}"
                    )
                }
            }
            Warning::DivergentSamples { count, total } => write!(
                f,
                "{count} of {total} samples diverged; unstable in probability"
            ),
        }
    }
}
