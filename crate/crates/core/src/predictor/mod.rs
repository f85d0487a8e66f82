//! Demand prediction: step-function demand curves and the oracles that produce them.

mod curve;
mod lp;
mod oracle;
pub mod simplex;
mod spreading;

pub use curve::DemandCurve;
pub use lp::{build_lp_predictor, solve_fractional_allocation, FractionalAllocation, LpItem, LpOptions};
pub use oracle::{DemandOracle, FlatOracle, HistoricalOracle};
pub use spreading::build_spreading_predictor;

use std::io::Write;

use crate::domain::{formal_bundle, CloudSpec, ReservationRequest, Slot, TimeGrid};
use crate::money::Money;

/// How history is folded and truncated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PredictorSettings {
    /// Seasonal period in slots; history is averaged per slot-of-period.
    pub period: Slot,
    /// Only jobs submitted within this many slots of the newest one are used.
    pub history_window: Option<Slot>,
}

impl PredictorSettings {
    /// One simulated day of period and one simulated week of history.
    pub fn for_grid(grid: &TimeGrid) -> Self {
        PredictorSettings { period: grid.slots_in(24 * 3600), history_window: Some(grid.slots_in(7 * 24 * 3600)) }
    }
}

/// Formal resource-slots a job buys: `sum over entries of formal units * T`.
pub(crate) fn formal_unit_slots(job: &ReservationRequest, spec: &CloudSpec) -> u64 {
    job.requests.iter().map(|r| formal_bundle(r, spec).total() * r.duration as u64).sum()
}

/// Value per formal resource-slot, `V / (W * T)`.
pub fn unit_value(job: &ReservationRequest, spec: &CloudSpec) -> Option<Money> {
    let units = formal_unit_slots(job, spec);
    (units > 0).then(|| job.max_price.div_round(units))
}

/// Writes `resource,slot,price,cumulativeQuantity` rows for every resource and slot as seen from `now`.
pub fn dump_curves<W: Write>(oracle: &dyn DemandOracle, now: Slot, resources: &[&str], mut out: W) -> std::io::Result<()> {
    writeln!(out, "resource,slot,price,cumulativeQuantity")?;
    for (r, id) in resources.iter().enumerate() {
        for slot in now..oracle.horizon() {
            let curve = oracle.curve(now, slot, r).map_err(std::io::Error::other)?;
            for (p, q) in curve.points() {
                writeln!(out, "{id},{slot},{p},{q}")?;
            }
        }
    }
    Ok(())
}
