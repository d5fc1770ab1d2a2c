//! Effective upper and lower bounds for Brascamp-Lieb constants.
//!
//! The crate evaluates explicit bound formulas for a datum
//! `D = ((l_j), (q_j))`, decides the metric perceptivity hypotheses those
//! formulas need, and cross-checks everything against a Gaussian variational
//! oracle and a covering-number experiment.

pub mod error;
pub mod bounds;
pub mod datum;
pub mod lieb_oracle;
pub mod linalg;
pub mod perceptivity;
pub mod visual;

pub use error::{Error, Result};
