//! Reservation-based scheduling and pricing for shared compute.
//!
//! Users bid for guaranteed windows of resources; the engine prices each bid
//! from predicted future demand, places it, and answers allocation polls from
//! the cloud. A deterministic simulator drives engines over synthetic or
//! recorded workloads and reports welfare, revenue and lateness.

pub mod bdl;
pub mod domain;
pub mod error;
pub mod money;
pub mod predictor;
pub mod scheduler;
pub mod simulator;
pub mod workload;
