//! Aggregate flexibility of thermostatically controlled loads (TCLs) under
//! device cycling constraints: fleet simulation, capacity constraint sets,
//! reference planning by quadratic programming, priority-stack tracking and
//! run metrics.

pub mod audit;
pub mod capacity;
pub mod controller;
pub mod error;
pub mod fleet;
pub mod metrics;
pub mod planner;
pub mod qp;
pub mod scenario;
pub mod tcl;

pub use error::{Error, Result};
