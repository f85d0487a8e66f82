use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{charged_bundle, formal_bundle, ResourceRequest, Slot};
use crate::error::PredictorError;
use crate::money::{Money, Price, Qty};
use crate::predictor::{DemandCurve, DemandOracle};
use crate::scheduler::ledger::PlanLedger;

/// Per-unit bounds applied to every externality price, e.g. a maximum discount.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceBounds {
    pub floor: Option<Money>,
    pub cap: Option<Money>,
}

impl PriceBounds {
    pub fn apply(&self, p: Money) -> Money {
        let p = self.floor.map_or(p, |f| p.max(f));
        self.cap.map_or(p, |c| p.min(c))
    }
}

/// Price of the `i`-th unit of `resource` at slot `t`: the highest price at
/// which predicted demand exceeds `capacity - promised - i`, zero if demand
/// never gets there, and `Price::Infinite` if the unit does not fit.
pub fn unit_price(
    ledger: &PlanLedger,
    oracle: &dyn DemandOracle,
    now: Slot,
    t: Slot,
    resource: usize,
    i: u64,
) -> Result<Price, PredictorError> {
    let (cap, promised) = (ledger.capacity(resource, t), ledger.promised(resource, t));
    if promised + i > cap {
        return Ok(Price::Infinite);
    }
    let residual = (cap - promised - i) as i64;
    let curve = oracle.curve(now, t, resource)?;
    Ok(Price::Finite(curve.price_exceeding(Qty::from_units(residual))))
}

/// Total externality price of running `req` on `[start, start + T)`.
pub fn interval_cost(
    ledger: &PlanLedger,
    oracle: &Arc<dyn DemandOracle>,
    now: Slot,
    req: &ResourceRequest,
    start: Slot,
) -> Result<Price, PredictorError> {
    let mut pricer = Pricer::new(oracle.clone(), PriceBounds::default());
    let demand = EntryDemand::of(ledger, req);
    let mut total = Money::ZERO;
    for t in start..start + req.duration {
        match pricer.slot_cost(ledger, now, t, &demand)? {
            Price::Finite(c) => total += c,
            Price::Infinite => return Ok(Price::Infinite),
        }
    }
    Ok(Price::Finite(total))
}

/// Dense formal and charged bundles of one request entry.
#[derive(Clone, Debug)]
pub(crate) struct EntryDemand {
    pub formal: Vec<u64>,
    pub charged: Vec<u64>,
}

impl EntryDemand {
    pub fn of(ledger: &PlanLedger, req: &ResourceRequest) -> Self {
        let spec = ledger.spec();
        EntryDemand { formal: spec.dense(&formal_bundle(req, spec)), charged: spec.dense(&charged_bundle(req, spec)) }
    }

    pub fn formal_units(&self) -> u64 {
        self.formal.iter().sum()
    }
}

/// Curve cache and fast per-slot pricing for one oracle.
///
/// Curves depend on `now`, so the cache is dropped whenever `now` changes.
#[derive(Debug, Clone)]
pub struct Pricer {
    oracle: Arc<dyn DemandOracle>,
    bounds: PriceBounds,
    now: Option<Slot>,
    cache: HashMap<(Slot, usize), DemandCurve>,
}

impl Pricer {
    pub fn new(oracle: Arc<dyn DemandOracle>, bounds: PriceBounds) -> Self {
        Pricer { oracle, bounds, now: None, cache: HashMap::new() }
    }

    pub fn oracle(&self) -> &Arc<dyn DemandOracle> {
        &self.oracle
    }

    pub fn bounds(&self) -> PriceBounds {
        self.bounds
    }

    fn curve(&mut self, now: Slot, t: Slot, resource: usize) -> Result<&DemandCurve, PredictorError> {
        if self.now != Some(now) {
            self.cache.clear();
            self.now = Some(now);
        }
        if !self.cache.contains_key(&(t, resource)) {
            let c = self.oracle.curve(now, t, resource)?;
            self.cache.insert((t, resource), c);
        }
        Ok(&self.cache[&(t, resource)])
    }

    /// `cost[t]`: bounded unit prices summed over formal units and resources.
    pub(crate) fn slot_cost(&mut self, ledger: &PlanLedger, now: Slot, t: Slot, demand: &EntryDemand) -> Result<Price, PredictorError> {
        if !ledger.fits_at(&demand.charged, t) {
            return Ok(Price::Infinite);
        }
        let bounds = self.bounds;
        let mut total = Money::ZERO;
        for (r, &units) in demand.formal.iter().enumerate() {
            if units == 0 {
                continue;
            }
            let free = ledger.free(r, t);
            // Formal units never exceed the charged ones, which fit.
            let units = units.min(free);
            total += self.curve(now, t, r)?.sum_exceeding_prices(free, units, |p| bounds.apply(p));
        }
        Ok(Price::Finite(total))
    }

    /// Cheapest start for `req` against `ledger`, earliest on ties.
    /// `None` when every start hits a slot that cannot hold the entry.
    pub(crate) fn best_start(
        &mut self,
        ledger: &PlanLedger,
        now: Slot,
        req: &ResourceRequest,
        demand: &EntryDemand,
    ) -> Result<Option<(Slot, Money)>, PredictorError> {
        let (a, d, dur) = (req.arrival, req.deadline.min(ledger.horizon()), req.duration);
        if dur == 0 || a + dur > d {
            return Ok(None);
        }
        let mut costs = Vec::with_capacity((d - a) as usize);
        for t in a..d {
            costs.push(self.slot_cost(ledger, now, t, demand)?.finite());
        }
        // Sliding window over per-slot costs; a window is usable only without infinite slots.
        let n = dur as usize;
        let mut sum = Money::ZERO;
        let mut blocked = 0usize;
        let mut best: Option<(Slot, Money)> = None;
        for (k, c) in costs.iter().enumerate() {
            match c {
                Some(c) => sum += *c,
                None => blocked += 1,
            }
            if k >= n {
                match costs[k - n] {
                    Some(c) => sum -= c,
                    None => blocked -= 1,
                }
            }
            if k + 1 >= n && blocked == 0 {
                let start = a + (k + 1 - n) as Slot;
                if best.is_none_or(|(_, b)| sum < b) {
                    best = Some((start, sum));
                }
            }
        }
        Ok(best)
    }
}
