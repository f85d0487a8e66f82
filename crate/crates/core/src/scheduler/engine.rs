use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::domain::{charged_bundle, validate_request, Bundle, CloudSpec, JobId, ReservationRequest, ResourceRequest, Slot};
use crate::error::SchedulerError;
use crate::money::Money;
use crate::predictor::DemandOracle;
use crate::scheduler::ledger::{AuditViolation, PlacementState, PlanLedger, Segment};
use crate::scheduler::pricing::{EntryDemand, PriceBounds, Pricer};

/// Which admission and pricing rule an engine runs.
#[derive(Clone, Debug)]
pub enum Algorithm {
    /// Externality pricing against predicted demand; cheapest start in the window.
    BasicEcon { oracle: Arc<dyn DemandOracle>, bounds: PriceBounds },
    /// Fixed unit price; earliest start in the window that fits.
    FirstFit { unit_price: Money },
    /// Fixed unit price; checks only the current slot and starts immediately.
    OnDemand { unit_price: Money },
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::BasicEcon { .. } => "basicEcon",
            Algorithm::FirstFit { .. } => "firstFit",
            Algorithm::OnDemand { .. } => "onDemand",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RejectReason {
    /// Some entry has no start at which it fits.
    NoCapacity,
    /// The price exceeds the bid.
    PriceAboveBid,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::NoCapacity => "no-capacity",
            RejectReason::PriceAboveBid => "price-above-bid",
        })
    }
}

/// The price and starts the engine would charge for a request list, computed without the bid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Offer {
    pub price: Money,
    pub starts: Vec<Slot>,
}

/// Answer to a reservation request.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Quote {
    pub accepted: bool,
    /// Price charged; set only when accepted.
    pub price: Option<Money>,
    /// Start slot of each entry; set only when accepted.
    pub starts: Vec<Slot>,
    /// The bid-independent offer, also reported on a price rejection.
    pub offer: Option<Offer>,
    pub reason: Option<RejectReason>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CapacityChange {
    pub resource: String,
    pub slot: Slot,
    pub delta: i64,
}

/// What the cloud reports back at the end of a slot.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CloudFeedback {
    pub capacity_delta: Vec<CapacityChange>,
    pub consumption: BTreeMap<JobId, Bundle>,
    pub terminations: BTreeSet<JobId>,
    pub waiting_processes: BTreeMap<JobId, u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReplanSummary {
    pub finished: Vec<JobId>,
    /// Accepted jobs whose guarantee was broken by a capacity drop.
    pub cancelled: Vec<JobId>,
    pub capacity_changes: usize,
}

/// Consumption and queue statistics reported by the cloud.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Observations {
    pub consumed: Bundle,
    pub feedback_rounds: u64,
    pub peak_waiting: u64,
}

#[derive(Clone, Debug)]
struct OnDemandJob {
    job_id: JobId,
    bundle: Vec<u64>,
    finished: bool,
}

/// One scheduling engine: a serial state machine over a plan ledger.
#[derive(Clone, Debug)]
pub struct Engine {
    spec: Arc<CloudSpec>,
    algorithm: Algorithm,
    ledger: PlanLedger,
    pricer: Option<Pricer>,
    on_demand: Vec<OnDemandJob>,
    broken_guarantees: u64,
    observations: Observations,
}

impl Engine {
    pub fn new(spec: Arc<CloudSpec>, algorithm: Algorithm) -> Self {
        let pricer = match &algorithm {
            Algorithm::BasicEcon { oracle, bounds } => Some(Pricer::new(oracle.clone(), *bounds)),
            _ => None,
        };
        Engine {
            ledger: PlanLedger::new(spec.clone()),
            spec,
            algorithm,
            pricer,
            on_demand: Vec::new(),
            broken_guarantees: 0,
            observations: Observations::default(),
        }
    }

    pub fn spec(&self) -> &Arc<CloudSpec> {
        &self.spec
    }

    pub fn algorithm(&self) -> &Algorithm {
        &self.algorithm
    }

    pub fn ledger(&self) -> &PlanLedger {
        &self.ledger
    }

    pub fn broken_guarantees(&self) -> u64 {
        self.broken_guarantees
    }

    pub fn observations(&self) -> &Observations {
        &self.observations
    }

    pub fn audit(&self) -> Vec<AuditViolation> {
        self.ledger.audit()
    }

    fn knows(&self, job: &JobId) -> bool {
        self.ledger.placement(job).is_some() || self.on_demand.iter().any(|j| &j.job_id == job)
    }

    /// Price and starts for `requests` at `now`. The bid is not an input.
    pub fn offer(&mut self, now: Slot, requests: &[ResourceRequest]) -> Result<Option<Offer>, SchedulerError> {
        match self.algorithm {
            Algorithm::BasicEcon { .. } => self.offer_econ(now, requests),
            Algorithm::FirstFit { unit_price } => Ok(self.offer_first_fit(requests, unit_price)),
            Algorithm::OnDemand { unit_price } => Ok(self.offer_on_demand(now, requests, unit_price)),
        }
    }

    fn offer_econ(&mut self, now: Slot, requests: &[ResourceRequest]) -> Result<Option<Offer>, SchedulerError> {
        let pricer = self.pricer.as_mut().expect("econ engine has a pricer");
        let ledger = &mut self.ledger;
        // Later entries are priced with earlier ones tentatively held.
        let mut held = Vec::new();
        let mut result = Ok(Some(Offer { price: Money::ZERO, starts: Vec::new() }));
        for (k, req) in requests.iter().enumerate() {
            let demand = EntryDemand::of(ledger, req);
            match pricer.best_start(ledger, now, req, &demand) {
                Ok(Some((start, cost))) => {
                    if let Ok(Some(offer)) = &mut result {
                        offer.price += cost;
                        offer.starts.push(start);
                    }
                    if k + 1 < requests.len() {
                        let seg = Segment::new(start, req.duration, demand.charged);
                        ledger.hold(&seg);
                        held.push(seg);
                    }
                }
                Ok(None) => {
                    result = Ok(None);
                    break;
                }
                Err(e) => {
                    result = Err(e.into());
                    break;
                }
            }
        }
        for seg in &held {
            ledger.unhold(seg);
        }
        result
    }

    fn offer_first_fit(&mut self, requests: &[ResourceRequest], unit_price: Money) -> Option<Offer> {
        let mut held = Vec::new();
        let mut offer = Some(Offer { price: Money::ZERO, starts: Vec::new() });
        for req in requests {
            let demand = EntryDemand::of(&self.ledger, req);
            match req.starts().find(|&s| self.ledger.fits(&demand.charged, s, req.duration)) {
                Some(start) => {
                    if let Some(o) = &mut offer {
                        o.price += unit_price * (demand.formal_units() * req.duration as u64);
                        o.starts.push(start);
                    }
                    let seg = Segment::new(start, req.duration, demand.charged);
                    self.ledger.hold(&seg);
                    held.push(seg);
                }
                None => {
                    offer = None;
                    break;
                }
            }
        }
        for seg in &held {
            self.ledger.unhold(seg);
        }
        offer
    }

    fn offer_on_demand(&self, now: Slot, requests: &[ResourceRequest], unit_price: Money) -> Option<Offer> {
        if now >= self.ledger.horizon() {
            return None;
        }
        let mut need = vec![0u64; self.ledger.resources()];
        let mut price = Money::ZERO;
        for req in requests {
            let demand = EntryDemand::of(&self.ledger, req);
            for (n, q) in need.iter_mut().zip(&demand.charged) {
                *n += q;
            }
            price += unit_price * (demand.formal_units() * req.duration as u64);
        }
        let in_use = self.on_demand_in_use();
        let fits = need.iter().enumerate().all(|(r, &q)| in_use[r] + q <= self.ledger.capacity(r, now));
        fits.then(|| Offer { price, starts: vec![now; requests.len()] })
    }

    fn on_demand_in_use(&self) -> Vec<u64> {
        let mut used = vec![0u64; self.ledger.resources()];
        for j in self.on_demand.iter().filter(|j| !j.finished) {
            for (u, q) in used.iter_mut().zip(&j.bundle) {
                *u += q;
            }
        }
        used
    }

    /// Prices the request list, then compares the price with the bid once.
    pub fn make_reservation(&mut self, now: Slot, req: &ReservationRequest) -> Result<Quote, SchedulerError> {
        let violations = validate_request(req, &self.spec);
        if !violations.is_empty() {
            return Err(SchedulerError::InvalidRequest { job: req.job_id.clone(), violations });
        }
        if self.knows(&req.job_id) {
            return Err(SchedulerError::DuplicateJob(req.job_id.clone()));
        }
        if !matches!(self.algorithm, Algorithm::OnDemand { .. }) {
            if let Some(a) = req.earliest_arrival().filter(|&a| a < now) {
                return Err(SchedulerError::ArrivalInPast { now, arrival: a });
            }
        }
        let Some(offer) = self.offer(now, &req.requests)? else {
            return Ok(Quote { accepted: false, price: None, starts: Vec::new(), offer: None, reason: Some(RejectReason::NoCapacity) });
        };
        if offer.price > req.max_price {
            return Ok(Quote {
                accepted: false,
                price: None,
                starts: Vec::new(),
                offer: Some(offer),
                reason: Some(RejectReason::PriceAboveBid),
            });
        }
        self.commit(req, &offer)?;
        Ok(Quote { accepted: true, price: Some(offer.price), starts: offer.starts.clone(), offer: Some(offer), reason: None })
    }

    fn commit(&mut self, req: &ReservationRequest, offer: &Offer) -> Result<(), SchedulerError> {
        if let Algorithm::OnDemand { .. } = self.algorithm {
            let mut bundle = vec![0u64; self.ledger.resources()];
            for r in &req.requests {
                for (b, q) in bundle.iter_mut().zip(self.spec.dense(&charged_bundle(r, &self.spec))) {
                    *b += q;
                }
            }
            self.on_demand.push(OnDemandJob { job_id: req.job_id.clone(), bundle, finished: false });
            return Ok(());
        }
        let mut segments = Vec::with_capacity(req.requests.len());
        let mut unit_slots = 0;
        for (r, &start) in req.requests.iter().zip(&offer.starts) {
            let demand = EntryDemand::of(&self.ledger, r);
            unit_slots += demand.formal_units() * r.duration as u64;
            segments.push(Segment::new(start, r.duration, demand.charged));
        }
        self.ledger.commit(req.job_id.clone(), segments, offer.price, unit_slots)
    }

    /// What every job should hold at `now`. Read-only, so repeated calls agree.
    pub fn current_allocation(&self, now: Slot) -> Vec<(JobId, Bundle)> {
        if let Algorithm::OnDemand { .. } = self.algorithm {
            return self.on_demand_allocation(now);
        }
        let mut out = Vec::new();
        for p in self.ledger.placements().filter(|p| p.is_active()) {
            let mut dense = vec![0u64; self.ledger.resources()];
            let mut any = false;
            for seg in p.segments.iter().filter(|s| s.holds(now)) {
                any = true;
                for (d, q) in dense.iter_mut().zip(&seg.bundle) {
                    *d += q;
                }
            }
            if any {
                out.push((p.job_id.clone(), self.spec.sparse(&dense)));
            }
        }
        out
    }

    /// Admitted jobs in admission order, each started if it still fits.
    fn on_demand_allocation(&self, now: Slot) -> Vec<(JobId, Bundle)> {
        if now >= self.ledger.horizon() {
            return Vec::new();
        }
        let mut used = vec![0u64; self.ledger.resources()];
        let mut out = Vec::new();
        for j in self.on_demand.iter().filter(|j| !j.finished) {
            let fits = j.bundle.iter().enumerate().all(|(r, &q)| used[r] + q <= self.ledger.capacity(r, now));
            if fits {
                for (u, q) in used.iter_mut().zip(&j.bundle) {
                    *u += q;
                }
                out.push((j.job_id.clone(), self.spec.sparse(&j.bundle)));
            }
        }
        out
    }

    /// Applies end-of-slot feedback. Nothing changes if any part of it is invalid.
    pub fn update(&mut self, now: Slot, fb: &CloudFeedback) -> Result<ReplanSummary, SchedulerError> {
        for job in fb.terminations.iter().chain(fb.consumption.keys()).chain(fb.waiting_processes.keys()) {
            if !self.knows(job) {
                return Err(SchedulerError::UnknownJob(job.clone()));
            }
        }
        let mut changes = Vec::with_capacity(fb.capacity_delta.len());
        for c in &fb.capacity_delta {
            let r = self.spec.resource_index(&c.resource).ok_or_else(|| SchedulerError::UnknownResource(c.resource.clone()))?;
            if c.slot <= now || c.slot >= self.ledger.horizon() {
                return Err(SchedulerError::PastCapacityChange { now, slot: c.slot });
            }
            changes.push((r, c.slot, c.delta));
        }

        let mut summary = ReplanSummary { capacity_changes: changes.len(), ..ReplanSummary::default() };
        for job in &fb.terminations {
            if let Some(j) = self.on_demand.iter_mut().find(|j| &j.job_id == job) {
                j.finished = true;
            } else if self.ledger.placement(job).is_some_and(|p| p.is_active()) {
                self.ledger.finish(job, now)?;
            }
            summary.finished.push(job.clone());
        }
        for (r, t, delta) in changes {
            self.ledger.change_capacity(r, t, delta);
        }
        self.ledger.mark_running(now);
        if !matches!(self.algorithm, Algorithm::OnDemand { .. }) {
            summary.cancelled = self.repair(now)?;
            self.broken_guarantees += summary.cancelled.len() as u64;
        }

        for bundle in fb.consumption.values() {
            self.observations.consumed += bundle.clone();
        }
        self.observations.feedback_rounds += 1;
        let waiting: u64 = fb.waiting_processes.values().sum();
        self.observations.peak_waiting = self.observations.peak_waiting.max(waiting);
        Ok(summary)
    }

    /// Cancels placements until no future slot is over-committed: planned ones
    /// first by ascending value density, then running ones if still needed.
    fn repair(&mut self, now: Slot) -> Result<Vec<JobId>, SchedulerError> {
        let mut cancelled = Vec::new();
        loop {
            let over = self.ledger.overcommitted_after(now);
            if over.is_empty() {
                return Ok(cancelled);
            }
            let victim = self
                .ledger
                .placements()
                .filter(|p| p.is_active())
                .filter(|p| over.iter().any(|&(r, t)| p.segments.iter().any(|s| s.holds(t) && s.bundle[r] > 0)))
                .min_by(|a, b| {
                    let rank = |s: PlacementState| u8::from(s != PlacementState::Planned);
                    rank(a.state).cmp(&rank(b.state)).then(a.value_density().total_cmp(&b.value_density())).then(a.job_id.cmp(&b.job_id))
                })
                .map(|p| p.job_id.clone());
            let Some(job) = victim else {
                // Over-commitment without a holder cannot happen: promises come only from placements.
                return Ok(cancelled);
            };
            self.ledger.cancel(&job, now)?;
            cancelled.push(job);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TimeGrid;
    use crate::predictor::FlatOracle;

    fn spec(cap: u64, horizon: Slot) -> Arc<CloudSpec> {
        Arc::new(CloudSpec::single_resource(TimeGrid::new(60, horizon).unwrap(), "core", vec![cap; horizon as usize]).unwrap())
    }

    fn econ(spec: &Arc<CloudSpec>) -> Engine {
        let oracle = Arc::new(FlatOracle::zero(spec.horizon(), 1));
        Engine::new(spec.clone(), Algorithm::BasicEcon { oracle, bounds: PriceBounds::default() })
    }

    fn job(id: &str, w: u64, t: Slot, a: Slot, d: Slot, v: i64) -> ReservationRequest {
        ReservationRequest::single(id, ResourceRequest::new("core", w, t, a, d), Money::from_units(v))
    }

    #[test]
    fn econ_accepts_free_job_at_arrival() {
        let s = spec(4, 10);
        let mut e = econ(&s);
        let q = e.make_reservation(0, &job("a", 1, 2, 3, 9, 0)).unwrap();
        assert!(q.accepted);
        assert_eq!(q.price, Some(Money::ZERO));
        assert_eq!(q.starts, vec![3]);
    }

    #[test]
    fn econ_rejects_when_cost_exceeds_bid_and_leaves_ledger() {
        let s = spec(4, 4);
        let oracle = Arc::new(FlatOracle::uniform(4, 1, Money::from_units(3), crate::money::Qty::from_units(4)));
        let mut e = Engine::new(s, Algorithm::BasicEcon { oracle, bounds: PriceBounds::default() });
        let q = e.make_reservation(0, &job("a", 2, 1, 0, 1, 5)).unwrap();
        assert!(!q.accepted);
        assert_eq!(q.reason, Some(RejectReason::PriceAboveBid));
        assert_eq!(q.offer.unwrap().price, Money::from_units(6));
        assert_eq!(e.ledger().promised(0, 0), 0);
    }

    #[test]
    fn zero_prediction_is_myopic() {
        let s = spec(1, 2);
        let mut e = econ(&s);
        let q1 = e.make_reservation(0, &job("j1", 1, 1, 0, 2, 10)).unwrap();
        assert_eq!((q1.accepted, q1.starts.clone()), (true, vec![0]));
        let q2 = e.make_reservation(0, &job("j2", 1, 1, 0, 1, 10)).unwrap();
        assert!(!q2.accepted);
        assert_eq!(q2.reason, Some(RejectReason::NoCapacity));
    }

    #[test]
    fn first_fit_prices_by_units() {
        let s = spec(4, 10);
        let mut e = Engine::new(s, Algorithm::FirstFit { unit_price: Money::from_units(1) });
        let q = e.make_reservation(0, &job("a", 2, 3, 1, 9, 100)).unwrap();
        assert_eq!((q.accepted, q.price, q.starts), (true, Some(Money::from_units(6)), vec![1]));
        let full = e.make_reservation(0, &job("b", 3, 8, 1, 9, 100)).unwrap();
        assert!(!full.accepted);
    }

    #[test]
    fn and_list_entries_see_each_other() {
        let s = spec(2, 4);
        let mut e = Engine::new(s, Algorithm::FirstFit { unit_price: Money::ZERO });
        let mut req = job("a", 2, 1, 0, 2, 1);
        req.requests.push(ResourceRequest::new("core", 2, 1, 0, 2));
        let q = e.make_reservation(0, &req).unwrap();
        assert_eq!(q.starts, vec![0, 1]);
        assert!(e.audit().is_empty());
    }

    #[test]
    fn on_demand_checks_only_now() {
        let s = spec(2, 10);
        let mut e = Engine::new(s, Algorithm::OnDemand { unit_price: Money::from_units(1) });
        let q = e.make_reservation(0, &job("a", 2, 3, 0, 10, 100)).unwrap();
        assert_eq!(q.price, Some(Money::from_units(6)));
        assert!(!e.make_reservation(0, &job("b", 1, 1, 0, 10, 100)).unwrap().accepted);
        let mut fb = CloudFeedback::default();
        fb.terminations.insert("a".into());
        e.update(0, &fb).unwrap();
        assert!(e.make_reservation(1, &job("b", 1, 1, 0, 10, 100)).unwrap().accepted);
    }

    #[test]
    fn allocation_uses_half_open_intervals() {
        let s = spec(4, 10);
        let mut e = econ(&s);
        e.make_reservation(0, &job("a", 2, 3, 2, 5, 1)).unwrap();
        assert!(e.current_allocation(1).is_empty());
        assert_eq!(e.current_allocation(3), vec![(JobId::from("a"), [("core", 2)].into_iter().collect())]);
        assert_eq!(e.current_allocation(3), e.current_allocation(3));
        assert!(e.current_allocation(5).is_empty());
    }

    #[test]
    fn termination_releases_later_slots() {
        let s = spec(4, 10);
        let mut e = econ(&s);
        e.make_reservation(0, &job("a", 1, 4, 2, 6, 1)).unwrap();
        let mut fb = CloudFeedback::default();
        fb.terminations.insert("a".into());
        e.update(3, &fb).unwrap();
        let promised: Vec<u64> = (0..7).map(|t| e.ledger().promised(0, t)).collect();
        assert_eq!(promised, vec![0, 0, 1, 1, 0, 0, 0]);
    }

    #[test]
    fn capacity_drop_cancels_planned_job() {
        let s = spec(1, 10);
        let mut e = econ(&s);
        e.make_reservation(0, &job("a", 1, 2, 5, 7, 1)).unwrap();
        let fb = CloudFeedback {
            capacity_delta: vec![CapacityChange { resource: "core".into(), slot: 6, delta: -1 }],
            ..CloudFeedback::default()
        };
        let summary = e.update(0, &fb).unwrap();
        assert_eq!(summary.cancelled, vec![JobId::from("a")]);
        assert_eq!(e.broken_guarantees(), 1);
        assert!(e.audit().is_empty());
    }

    #[test]
    fn cheaper_placement_is_cancelled_first() {
        let s = spec(2, 10);
        let mut e = Engine::new(s, Algorithm::FirstFit { unit_price: Money::ZERO });
        e.make_reservation(0, &job("a", 1, 2, 5, 7, 1)).unwrap();
        e.make_reservation(0, &job("b", 1, 2, 5, 7, 1)).unwrap();
        // Same density: the job id breaks the tie.
        let fb = CloudFeedback {
            capacity_delta: vec![CapacityChange { resource: "core".into(), slot: 5, delta: -1 }],
            ..CloudFeedback::default()
        };
        assert_eq!(e.update(0, &fb).unwrap().cancelled, vec![JobId::from("a")]);
    }

    #[test]
    fn empty_feedback_is_a_no_op() {
        let s = spec(2, 10);
        let mut e = econ(&s);
        e.make_reservation(0, &job("a", 1, 2, 5, 7, 1)).unwrap();
        let before = e.ledger().promised_series().to_vec();
        assert_eq!(e.update(0, &CloudFeedback::default()).unwrap(), ReplanSummary::default());
        assert_eq!(e.ledger().promised_series(), before.as_slice());
    }

    #[test]
    fn feedback_errors() {
        let s = spec(2, 10);
        let mut e = econ(&s);
        let mut fb = CloudFeedback::default();
        fb.terminations.insert("ghost".into());
        assert!(matches!(e.update(0, &fb), Err(SchedulerError::UnknownJob(_))));
        let fb = CloudFeedback {
            capacity_delta: vec![CapacityChange { resource: "core".into(), slot: 2, delta: -1 }],
            ..CloudFeedback::default()
        };
        assert!(matches!(e.update(2, &fb), Err(SchedulerError::PastCapacityChange { .. })));
    }
}
