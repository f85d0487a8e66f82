//! Online admission, pricing and placement on top of a plan ledger.

mod engine;
mod ledger;
mod pricing;

pub use engine::{Algorithm, CapacityChange, CloudFeedback, Engine, Observations, Offer, Quote, RejectReason, ReplanSummary};
pub use ledger::{AuditViolation, Placement, PlacementState, PlanLedger, Segment};
pub use pricing::{interval_cost, unit_price, PriceBounds, Pricer};
