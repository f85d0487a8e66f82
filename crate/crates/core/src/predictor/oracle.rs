use std::fmt;

use crate::domain::Slot;
use crate::error::PredictorError;
use crate::money::{Money, Price, Qty};
use crate::predictor::DemandCurve;

/// Demand oracle: predicted demand curves for future slots.
///
/// Answers depend only on `(now, slot, resource)` and the oracle's own state.
/// There is deliberately no way to pass a bid into a query.
pub trait DemandOracle: Send + Sync + fmt::Debug {
    /// Slots `>= horizon` cannot be queried.
    fn horizon(&self) -> Slot;

    /// Curve of demand for `slot` predicted to arrive during `[now, slot]`.
    /// Callers have already checked `now <= slot < horizon`.
    fn curve_unchecked(&self, now: Slot, slot: Slot, resource: usize) -> Result<DemandCurve, PredictorError>;

    fn curve(&self, now: Slot, slot: Slot, resource: usize) -> Result<DemandCurve, PredictorError> {
        if now > slot || slot >= self.horizon() {
            return Err(PredictorError::OutOfHorizon { now, slot, horizon: self.horizon() });
        }
        self.curve_unchecked(now, slot, resource)
    }

    /// Highest price at which predicted demand reaches `quantity`.
    fn query(&self, now: Slot, slot: Slot, resource: usize, quantity: Qty) -> Result<Option<Price>, PredictorError> {
        Ok(self.curve(now, slot, resource)?.inverse_price(quantity))
    }
}

/// The same curve at every slot; also the cold-start fallback.
#[derive(Clone, Debug)]
pub struct FlatOracle {
    horizon: Slot,
    curves: Vec<DemandCurve>,
}

impl FlatOracle {
    pub fn new(horizon: Slot, curves: Vec<DemandCurve>) -> Self {
        FlatOracle { horizon, curves }
    }

    /// No predicted demand anywhere: every free unit costs zero.
    pub fn zero(horizon: Slot, resources: usize) -> Self {
        FlatOracle { horizon, curves: vec![DemandCurve::empty(); resources] }
    }

    pub fn uniform(horizon: Slot, resources: usize, price: Money, quantity: Qty) -> Self {
        FlatOracle { horizon, curves: vec![DemandCurve::flat(price, quantity); resources] }
    }
}

impl DemandOracle for FlatOracle {
    fn horizon(&self) -> Slot {
        self.horizon
    }

    fn curve_unchecked(&self, _now: Slot, _slot: Slot, resource: usize) -> Result<DemandCurve, PredictorError> {
        self.curves.get(resource).cloned().ok_or(PredictorError::UnknownResource(resource))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Contribution {
    price: Money,
    /// Slots between the contributing job's submission and the target slot.
    lead: Slot,
    qty: Qty,
}

/// Demand learned from past requests, folded onto a repeating period.
///
/// Each past job adds `(unit price, quantity)` at the slots it would occupy,
/// tagged with how far ahead of that slot it was submitted. A query at `now`
/// for `slot` only counts contributions submitted at most `slot - now` slots
/// ahead: demand that arrived earlier is already reflected in the ledger.
#[derive(Clone, Debug)]
pub struct HistoricalOracle {
    horizon: Slot,
    period: Slot,
    periods: u32,
    /// `[resource][phase]`, sorted by descending price.
    table: Vec<Vec<Vec<Contribution>>>,
}

impl HistoricalOracle {
    pub fn period(&self) -> Slot {
        self.period
    }

    /// Number of history periods averaged into each phase.
    pub fn periods(&self) -> u32 {
        self.periods
    }

    pub fn is_empty(&self) -> bool {
        self.table.iter().flatten().all(Vec::is_empty)
    }
}

impl DemandOracle for HistoricalOracle {
    fn horizon(&self) -> Slot {
        self.horizon
    }

    fn curve_unchecked(&self, now: Slot, slot: Slot, resource: usize) -> Result<DemandCurve, PredictorError> {
        let phases = self.table.get(resource).ok_or(PredictorError::UnknownResource(resource))?;
        let window = slot - now;
        let items = &phases[(slot % self.period) as usize];
        Ok(DemandCurve::from_sorted(items.iter().filter(|c| c.lead <= window).map(|c| (c.price, c.qty))))
    }
}

/// Accumulates contributions keyed by history slot, then folds and averages.
#[derive(Debug)]
pub(crate) struct ContributionTable {
    period: Slot,
    table: Vec<Vec<Vec<Contribution>>>,
}

impl ContributionTable {
    pub(crate) fn new(resources: usize, period: Slot) -> Self {
        let period = period.max(1);
        ContributionTable { period, table: vec![vec![Vec::new(); period as usize]; resources] }
    }

    pub(crate) fn add(&mut self, resource: usize, history_slot: Slot, lead: Slot, price: Money, qty: Qty) {
        if qty.is_positive() {
            let phase = (history_slot % self.period) as usize;
            self.table[resource][phase].push(Contribution { price, lead, qty });
        }
    }

    pub(crate) fn finish(mut self, horizon: Slot, periods: u32) -> HistoricalOracle {
        let periods = periods.max(1);
        for items in self.table.iter_mut().flatten() {
            items.sort_unstable_by(|a, b| b.price.cmp(&a.price).then(a.lead.cmp(&b.lead)));
            let mut merged: Vec<Contribution> = Vec::with_capacity(items.len());
            for c in items.drain(..) {
                match merged.last_mut() {
                    Some(last) if last.price == c.price && last.lead == c.lead => last.qty += c.qty,
                    _ => merged.push(c),
                }
            }
            for c in &mut merged {
                c.qty = Qty::from_micros(div_round(c.qty.micros(), periods as i64));
            }
            merged.retain(|c| c.qty.is_positive());
            *items = merged;
        }
        HistoricalOracle { horizon, period: self.period, periods, table: self.table }
    }
}

fn div_round(n: i64, d: i64) -> i64 {
    (2 * n + d) / (2 * d)
}
