//! Weighted Sobolev machinery on model singular domains: push-forward
//! densities via fiber integration, discrete weighted Sobolev norms and
//! operators, the inner (geodesic) metric, Dirac-representer kernels, model
//! conic retractions, and the verification suites that exercise them.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod kernel;
pub mod linalg;
pub mod measure;
pub mod metric;
pub mod retraction;
pub mod rng;
pub mod sobolev;
pub mod stencil;

pub use error::{Error, Result};
