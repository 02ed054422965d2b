//! SLO-driven autoscaling of containerized services on a simulated cluster.
// `!(x > 0.0)` is how validation rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod error;
pub mod harness;
pub mod hpa;
pub mod msra;
pub mod sim;
pub mod slo;
pub mod telemetry;
pub mod workload;

pub use error::{Error, Result};
