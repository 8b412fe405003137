//! Crate-wide error type.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// No lattice point of the requested spacing lies inside the domain.
    EmptyDomain,
    /// The sphere of the requested radius does not meet the domain.
    EmptySlice,
    /// The weight field vanishes on every node.
    EmptySupport,
    /// Every weight is zero or non-finite; nothing to fit.
    AllZeroWeight,
    /// A fiber quadrature point left the source support.
    FiberEscape { point: Vec<f64> },
    /// Generalized Jacobian below 1e-12 at a quadrature point.
    DegenerateJacobian { point: Vec<f64>, jac: f64 },
    /// A nodal function was infinite or NaN where a finite value is required.
    NonFiniteValue { node: usize },
    /// No difference formula exists for the requested derivative order.
    StencilUnderflow { order: usize },
    /// SPD factorization or solve failed.
    SingularOperator(String),
    /// Query node is outside the operator support.
    NotInSupport,
    /// Point is not a member of the domain.
    OutOfDomain,
    /// No (C, nu) pair in the search space validates the inequality.
    NoFitFound,
    /// Log-log fit impossible (abscissae constant).
    DegenerateFit,
    InvalidArgument(String),
    Config { key: String, message: String },
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyDomain => write!(f, "no lattice node is a member of the domain"),
            Error::EmptySlice => write!(f, "sphere slice does not intersect the domain"),
            Error::EmptySupport => write!(f, "weight field has empty support"),
            Error::AllZeroWeight => write!(f, "weight field is zero everywhere"),
            Error::FiberEscape { point } => {
                write!(f, "fiber quadrature point {point:?} escaped the source support")
            }
            Error::DegenerateJacobian { point, jac } => {
                write!(f, "jacobian {jac:.3e} below 1e-12 at {point:?}")
            }
            Error::NonFiniteValue { node } => {
                write!(f, "non-finite function value at node {node}")
            }
            Error::StencilUnderflow { order } => {
                write!(f, "no difference formula for derivative order {order}")
            }
            Error::SingularOperator(msg) => write!(f, "singular operator: {msg}"),
            Error::NotInSupport => write!(f, "node is not in the operator support"),
            Error::OutOfDomain => write!(f, "point is outside the domain"),
            Error::NoFitFound => write!(f, "no admissible (C, nu) fit found"),
            Error::DegenerateFit => write!(f, "degenerate fit: abscissae are constant"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Config { key, message } => write!(f, "config error at `{key}`: {message}"),
            Error::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
