//! Federated learning poisoning testbed spanning fake, hybrid and
//! compromised-client adversaries.

// `!(x >= 0.0)` style checks reject NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod attacks;
pub mod cost;
pub mod data;
pub mod error;
pub mod exec;
pub mod harness;
pub mod model;
pub mod params;
pub mod rng;
pub mod synthesis;

pub use error::{Error, Result};
pub use params::ParameterVector;
