//! Time grid, resources, configurations, requests and the cloud description.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::DomainError;
use crate::money::Money;

/// Index of a time slot on the grid.
pub type Slot = u32;

/// Slotted time: every window, start and duration is a whole number of slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    slot_seconds: u64,
    horizon: Slot,
}

impl TimeGrid {
    pub fn new(slot_seconds: u64, horizon: Slot) -> Result<Self, DomainError> {
        if slot_seconds == 0 {
            return Err(DomainError::InvalidGrid("slot duration must be positive".into()));
        }
        if horizon == 0 {
            return Err(DomainError::InvalidGrid("horizon must be at least one slot".into()));
        }
        Ok(TimeGrid { slot_seconds, horizon })
    }

    pub fn slot_seconds(&self) -> u64 {
        self.slot_seconds
    }

    pub fn horizon(&self) -> Slot {
        self.horizon
    }

    // Wall-clock conversions never promise finer granularity than the grid:
    // window starts round up, window ends round down, durations round up.

    pub fn arrival_slot(&self, seconds: u64) -> u64 {
        seconds.div_ceil(self.slot_seconds)
    }

    pub fn deadline_slot(&self, seconds: u64) -> u64 {
        seconds / self.slot_seconds
    }

    pub fn duration_slots(&self, seconds: u64) -> u64 {
        seconds.div_ceil(self.slot_seconds)
    }

    /// Number of slots in `period_seconds`, at least one.
    pub fn slots_in(&self, period_seconds: u64) -> Slot {
        (period_seconds / self.slot_seconds).max(1) as Slot
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceKind {
    /// Sold to users (cores, GB).
    Formal,
    /// Bookkeeping only; appears in actual bundles to encode packing limits.
    Virtual,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceType {
    pub id: String,
    pub kind: ResourceKind,
}

/// Nonnegative integer quantities keyed by resource id. Zero entries are dropped.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bundle(BTreeMap<String, u64>);

impl Bundle {
    pub fn new() -> Self {
        Bundle(BTreeMap::new())
    }

    pub fn get(&self, resource: &str) -> u64 {
        self.0.get(resource).copied().unwrap_or(0)
    }

    pub fn set(&mut self, resource: impl Into<String>, quantity: u64) {
        let key = resource.into();
        if quantity == 0 {
            self.0.remove(&key);
        } else {
            self.0.insert(key, quantity);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, factor: u64) -> Bundle {
        let mut out = Bundle::new();
        for (r, q) in self.iter() {
            out.set(r, q * factor);
        }
        out
    }

    pub fn total(&self) -> u64 {
        self.0.values().sum()
    }
}

impl<K: Into<String>> FromIterator<(K, u64)> for Bundle {
    fn from_iter<I: IntoIterator<Item = (K, u64)>>(iter: I) -> Self {
        let mut b = Bundle::new();
        for (k, q) in iter {
            let k = k.into();
            let prev = b.get(&k);
            b.set(k, prev + q);
        }
        b
    }
}

impl Add for Bundle {
    type Output = Bundle;
    fn add(mut self, rhs: Bundle) -> Bundle {
        self += rhs;
        self
    }
}

impl AddAssign for Bundle {
    fn add_assign(&mut self, rhs: Bundle) {
        for (r, q) in rhs.0 {
            let prev = self.get(&r);
            self.set(r, prev + q);
        }
    }
}

impl fmt::Display for Bundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (r, q) in self.iter() {
            if !first {
                f.write_str(",")?;
            }
            first = false;
            write!(f, "{r}:{q}")?;
        }
        Ok(())
    }
}

/// A preset bundle that users request by id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    pub id: String,
    /// What the user sees and pays for.
    pub formal: Bundle,
    /// What is charged against capacity, including overhead and virtual resources.
    pub actual: Bundle,
}

/// The cloud as the scheduler sees it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CloudSpec {
    grid: TimeGrid,
    resources: Vec<ResourceType>,
    configurations: Vec<Configuration>,
    capacity: Vec<Vec<u64>>,
    tick_seconds: u64,
}

impl CloudSpec {
    /// `capacity[r][t]` follows the order of `resources`.
    pub fn new(
        grid: TimeGrid,
        resources: Vec<ResourceType>,
        configurations: Vec<Configuration>,
        capacity: Vec<Vec<u64>>,
        tick_seconds: u64,
    ) -> Result<Self, DomainError> {
        if tick_seconds == 0 {
            return Err(DomainError::InvalidSpec("tick interval must be positive".into()));
        }
        let mut seen = BTreeSet::new();
        for r in &resources {
            if !seen.insert(r.id.as_str()) {
                return Err(DomainError::InvalidSpec(format!("duplicate resource {:?}", r.id)));
            }
        }
        if capacity.len() != resources.len() {
            return Err(DomainError::InvalidSpec(format!("capacity given for {} resources, expected {}", capacity.len(), resources.len())));
        }
        for (r, series) in resources.iter().zip(&capacity) {
            if series.len() != grid.horizon() as usize {
                return Err(DomainError::InvalidSpec(format!(
                    "capacity series for {:?} has {} slots, horizon is {}",
                    r.id,
                    series.len(),
                    grid.horizon()
                )));
            }
        }
        let kind_of = |id: &str| resources.iter().find(|r| r.id == id).map(|r| r.kind);
        let mut config_ids = BTreeSet::new();
        for c in &configurations {
            if !config_ids.insert(c.id.as_str()) {
                return Err(DomainError::InvalidSpec(format!("duplicate configuration {:?}", c.id)));
            }
            if c.formal.is_empty() {
                return Err(DomainError::InvalidSpec(format!("configuration {:?} has an empty formal bundle", c.id)));
            }
            for (r, q) in c.formal.iter() {
                match kind_of(r) {
                    Some(ResourceKind::Formal) => {}
                    Some(ResourceKind::Virtual) => {
                        return Err(DomainError::InvalidSpec(format!("configuration {:?} sells virtual resource {r:?}", c.id)))
                    }
                    None => return Err(DomainError::InvalidSpec(format!("configuration {:?} uses unknown resource {r:?}", c.id))),
                }
                if c.actual.get(r) < q {
                    return Err(DomainError::InvalidSpec(format!("configuration {:?}: actual {r} is below the formal quantity", c.id)));
                }
            }
            for (r, _) in c.actual.iter() {
                if kind_of(r).is_none() {
                    return Err(DomainError::InvalidSpec(format!("configuration {:?} uses unknown resource {r:?}", c.id)));
                }
            }
        }
        Ok(CloudSpec { grid, resources, configurations, capacity, tick_seconds })
    }

    /// Single formal resource with one unit configuration of the same name.
    pub fn single_resource(grid: TimeGrid, resource: &str, capacity: Vec<u64>) -> Result<Self, DomainError> {
        let unit: Bundle = [(resource, 1)].into_iter().collect();
        CloudSpec::new(
            grid,
            vec![ResourceType { id: resource.to_string(), kind: ResourceKind::Formal }],
            vec![Configuration { id: resource.to_string(), formal: unit.clone(), actual: unit }],
            vec![capacity],
            grid.slot_seconds(),
        )
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn horizon(&self) -> Slot {
        self.grid.horizon()
    }

    pub fn resources(&self) -> &[ResourceType] {
        &self.resources
    }

    pub fn configurations(&self) -> &[Configuration] {
        &self.configurations
    }

    pub fn tick_seconds(&self) -> u64 {
        self.tick_seconds
    }

    /// Polls of the allocation per slot implied by the tick interval.
    pub fn ticks_per_slot(&self) -> u32 {
        (self.grid.slot_seconds() / self.tick_seconds).max(1) as u32
    }

    pub fn resource_index(&self, id: &str) -> Option<usize> {
        self.resources.iter().position(|r| r.id == id)
    }

    pub fn configuration(&self, id: &str) -> Option<&Configuration> {
        self.configurations.iter().find(|c| c.id == id)
    }

    pub fn capacity(&self, resource: usize, slot: Slot) -> u64 {
        self.capacity[resource][slot as usize]
    }

    pub fn capacity_series(&self, resource: usize) -> &[u64] {
        &self.capacity[resource]
    }

    /// Total capacity resource-slots over the horizon.
    pub fn total_capacity(&self) -> u64 {
        self.capacity.iter().flatten().sum()
    }

    /// Dense per-resource vector in `resources` order. Unknown ids are ignored.
    pub fn dense(&self, bundle: &Bundle) -> Vec<u64> {
        let mut out = vec![0; self.resources.len()];
        for (r, q) in bundle.iter() {
            if let Some(i) = self.resource_index(r) {
                out[i] += q;
            }
        }
        out
    }

    pub fn sparse(&self, dense: &[u64]) -> Bundle {
        self.resources.iter().zip(dense).map(|(r, q)| (r.id.clone(), *q)).collect()
    }

    pub fn with_capacity(&self, capacity: Vec<Vec<u64>>) -> Result<Self, DomainError> {
        CloudSpec::new(self.grid, self.resources.clone(), self.configurations.clone(), capacity, self.tick_seconds)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JobId(pub String);

impl JobId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for JobId {
    fn from(s: &str) -> Self {
        JobId(s.to_string())
    }
}

impl From<String> for JobId {
    fn from(s: String) -> Self {
        JobId(s)
    }
}

/// `configs` for `duration` contiguous slots somewhere inside `[arrival, deadline)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResourceRequest {
    pub configs: BTreeMap<String, u64>,
    pub duration: Slot,
    pub arrival: Slot,
    pub deadline: Slot,
    /// Index of an earlier entry this one should follow. Recorded, not enforced.
    pub after: Option<usize>,
}

impl ResourceRequest {
    pub fn new(config: &str, count: u64, duration: Slot, arrival: Slot, deadline: Slot) -> Self {
        ResourceRequest { configs: [(config.to_string(), count)].into_iter().collect(), duration, arrival, deadline, after: None }
    }

    /// Window length minus duration.
    pub fn laxity(&self) -> i64 {
        self.deadline as i64 - self.arrival as i64 - self.duration as i64
    }

    /// Feasible start slots `A ..= D - T` (empty when the window is too short).
    pub fn starts(&self) -> std::ops::RangeInclusive<Slot> {
        if self.laxity() < 0 {
            #[allow(clippy::reversed_empty_ranges)]
            return 1..=0;
        }
        self.arrival..=self.deadline - self.duration
    }
}

/// A bid: every entry must be supplied (AND), for at most `max_price` in total.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReservationRequest {
    pub job_id: JobId,
    pub requests: Vec<ResourceRequest>,
    pub max_price: Money,
    pub submit_time: Slot,
    /// Workload class label, used only for reporting.
    pub class: Option<String>,
}

impl ReservationRequest {
    pub fn single(job_id: &str, request: ResourceRequest, max_price: Money) -> Self {
        let submit_time = request.arrival;
        ReservationRequest { job_id: job_id.into(), requests: vec![request], max_price, submit_time, class: None }
    }

    pub fn earliest_arrival(&self) -> Option<Slot> {
        self.requests.iter().map(|r| r.arrival).min()
    }

    pub fn latest_deadline(&self) -> Option<Slot> {
        self.requests.iter().map(|r| r.deadline).max()
    }
}

/// Why a request cannot be placed even on an empty cloud.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    EmptyRequestList,
    ZeroDuration { entry: usize },
    EmptyWindow { entry: usize },
    WindowShorterThanDuration { entry: usize },
    WindowOutsideHorizon { entry: usize },
    UnknownConfiguration { entry: usize, config: String },
    ZeroCount { entry: usize, config: String },
    NoConfigurations { entry: usize },
    BadOrdering { entry: usize },
    SubmitAfterArrival,
    NegativePrice,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyRequestList => write!(f, "empty request list"),
            Violation::ZeroDuration { entry } => write!(f, "request {entry}: duration must be at least one slot"),
            Violation::EmptyWindow { entry } => write!(f, "request {entry}: window is empty"),
            Violation::WindowShorterThanDuration { entry } => {
                write!(f, "request {entry}: window shorter than duration")
            }
            Violation::WindowOutsideHorizon { entry } => write!(f, "request {entry}: window outside horizon"),
            Violation::UnknownConfiguration { entry, config } => {
                write!(f, "request {entry}: unknown configuration {config:?}")
            }
            Violation::ZeroCount { entry, config } => write!(f, "request {entry}: zero count for {config:?}"),
            Violation::NoConfigurations { entry } => write!(f, "request {entry}: no configurations"),
            Violation::BadOrdering { entry } => {
                write!(f, "request {entry}: ordering must refer to an earlier request")
            }
            Violation::SubmitAfterArrival => write!(f, "submit time after earliest arrival"),
            Violation::NegativePrice => write!(f, "negative maximum price"),
        }
    }
}

/// Empty result means the request could be placed on an empty cloud of sufficient capacity.
pub fn validate_request(req: &ReservationRequest, spec: &CloudSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    if req.requests.is_empty() {
        out.push(Violation::EmptyRequestList);
    }
    if req.max_price.is_negative() {
        out.push(Violation::NegativePrice);
    }
    let horizon = spec.horizon();
    for (entry, r) in req.requests.iter().enumerate() {
        if r.duration == 0 {
            out.push(Violation::ZeroDuration { entry });
        }
        if r.arrival >= r.deadline {
            out.push(Violation::EmptyWindow { entry });
        } else if r.deadline - r.arrival < r.duration {
            out.push(Violation::WindowShorterThanDuration { entry });
        }
        if r.deadline > horizon || r.arrival >= horizon {
            out.push(Violation::WindowOutsideHorizon { entry });
        }
        if r.configs.is_empty() {
            out.push(Violation::NoConfigurations { entry });
        }
        for (config, count) in &r.configs {
            if spec.configuration(config).is_none() {
                out.push(Violation::UnknownConfiguration { entry, config: config.clone() });
            }
            if *count == 0 {
                out.push(Violation::ZeroCount { entry, config: config.clone() });
            }
        }
        if let Some(prev) = r.after {
            if prev >= entry {
                out.push(Violation::BadOrdering { entry });
            }
        }
    }
    if let Some(first) = req.earliest_arrival() {
        if req.submit_time > first {
            out.push(Violation::SubmitAfterArrival);
        }
    }
    out
}

/// Per-slot bundle charged against capacity: `sum count * config.actual`.
pub fn charged_bundle(req: &ResourceRequest, spec: &CloudSpec) -> Bundle {
    bundle_of(req, spec, |c| &c.actual)
}

/// Per-slot bundle the user is sold: `sum count * config.formal`.
pub fn formal_bundle(req: &ResourceRequest, spec: &CloudSpec) -> Bundle {
    bundle_of(req, spec, |c| &c.formal)
}

fn bundle_of(req: &ResourceRequest, spec: &CloudSpec, pick: impl Fn(&Configuration) -> &Bundle) -> Bundle {
    let mut out = Bundle::new();
    for (id, count) in &req.configs {
        if let Some(c) = spec.configuration(id) {
            out += pick(c).scaled(*count);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_config_spec() -> CloudSpec {
        let grid = TimeGrid::new(3600, 20).unwrap();
        let resources = vec![
            ResourceType { id: "core".into(), kind: ResourceKind::Formal },
            ResourceType { id: "gb".into(), kind: ResourceKind::Formal },
            ResourceType { id: "disk".into(), kind: ResourceKind::Formal },
            ResourceType { id: "rack-slot".into(), kind: ResourceKind::Virtual },
        ];
        let conf_a: Bundle = [("core", 4), ("gb", 7)].into_iter().collect();
        let conf_b: Bundle = [("disk", 100)].into_iter().collect();
        let conf_b_actual: Bundle = [("disk", 110), ("rack-slot", 1)].into_iter().collect();
        let container: Bundle = [("core", 2), ("gb", 6)].into_iter().collect();
        CloudSpec::new(
            grid,
            resources,
            vec![
                Configuration { id: "ConfA".into(), formal: conf_a.clone(), actual: conf_a },
                Configuration { id: "ConfB".into(), formal: conf_b, actual: conf_b_actual },
                Configuration { id: "container".into(), formal: container.clone(), actual: container },
            ],
            vec![vec![1000; 20]; 4],
            60,
        )
        .unwrap()
    }

    fn job(r: ResourceRequest) -> ReservationRequest {
        ReservationRequest::single("j", r, Money::from_units(1))
    }

    #[test]
    fn accepts_slack_request() {
        let spec = two_config_spec();
        assert!(validate_request(&job(ResourceRequest::new("ConfA", 1, 2, 3, 10)), &spec).is_empty());
    }

    #[test]
    fn flags_short_window() {
        let spec = two_config_spec();
        let v = validate_request(&job(ResourceRequest::new("ConfA", 1, 5, 3, 7)), &spec);
        assert_eq!(v, vec![Violation::WindowShorterThanDuration { entry: 0 }]);
        assert_eq!(v[0].to_string(), "request 0: window shorter than duration");
    }

    #[test]
    fn flags_unknown_configuration() {
        let spec = two_config_spec();
        let v = validate_request(&job(ResourceRequest::new("ConfZ", 1, 2, 3, 10)), &spec);
        assert!(matches!(&v[..], [Violation::UnknownConfiguration { entry: 0, config }] if config == "ConfZ"));
    }

    #[test]
    fn flags_structural_problems() {
        let spec = two_config_spec();
        let mut req = job(ResourceRequest::new("ConfA", 0, 0, 19, 25));
        req.submit_time = 19;
        let v = validate_request(&req, &spec);
        assert!(v.contains(&Violation::ZeroDuration { entry: 0 }));
        assert!(v.contains(&Violation::WindowOutsideHorizon { entry: 0 }));
        assert!(v.contains(&Violation::ZeroCount { entry: 0, config: "ConfA".into() }));

        let empty = ReservationRequest { job_id: "e".into(), requests: vec![], max_price: Money::ZERO, submit_time: 0, class: None };
        assert_eq!(validate_request(&empty, &spec), vec![Violation::EmptyRequestList]);

        let mut late = job(ResourceRequest::new("ConfA", 1, 2, 3, 10));
        late.submit_time = 4;
        assert_eq!(validate_request(&late, &spec), vec![Violation::SubmitAfterArrival]);
    }

    #[test]
    fn charged_bundle_is_linear() {
        let spec = two_config_spec();
        let b = charged_bundle(&ResourceRequest::new("ConfA", 3, 1, 0, 1), &spec);
        assert_eq!(b, [("core", 12), ("gb", 21)].into_iter().collect());
    }

    #[test]
    fn charged_bundle_unions_disjoint_configs() {
        let spec = two_config_spec();
        let mut r = ResourceRequest::new("ConfA", 1, 1, 0, 1);
        r.configs.insert("ConfB".into(), 2);
        let b = charged_bundle(&r, &spec);
        assert_eq!(b, [("core", 4), ("gb", 7), ("disk", 220), ("rack-slot", 2)].into_iter().collect());
        let f = formal_bundle(&r, &spec);
        assert_eq!(f, [("core", 4), ("gb", 7), ("disk", 200)].into_iter().collect());
    }

    #[test]
    fn hundred_containers() {
        let spec = two_config_spec();
        let b = charged_bundle(&ResourceRequest::new("container", 100, 5, 6, 18), &spec);
        assert_eq!(b, [("core", 200), ("gb", 600)].into_iter().collect());
    }

    #[test]
    fn rejects_bad_specs() {
        let grid = TimeGrid::new(60, 4).unwrap();
        assert!(CloudSpec::single_resource(grid, "core", vec![1, 2, 3]).is_err());
        assert!(TimeGrid::new(0, 4).is_err());
        assert!(TimeGrid::new(60, 0).is_err());
        let core = ResourceType { id: "core".into(), kind: ResourceKind::Formal };
        let small: Bundle = [("core", 1)].into_iter().collect();
        let big: Bundle = [("core", 2)].into_iter().collect();
        let undersized = Configuration { id: "c".into(), formal: big, actual: small };
        assert!(CloudSpec::new(grid, vec![core], vec![undersized], vec![vec![1; 4]], 60).is_err());
    }

    #[test]
    fn grid_rounding_is_conservative() {
        let grid = TimeGrid::new(3600, 24).unwrap();
        assert_eq!(grid.arrival_slot(5400), 2);
        assert_eq!(grid.deadline_slot(5400), 1);
        assert_eq!(grid.duration_slots(1), 1);
        assert_eq!(grid.duration_slots(7200), 2);
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn charged_bundle_is_additive(a in 1u64..50, b in 1u64..50, c in 1u64..50) {
            let spec = two_config_spec();
            let r1 = ResourceRequest::new("ConfA", a, 1, 0, 1);
            let mut r2 = ResourceRequest::new("ConfB", b, 1, 0, 1);
            r2.configs.insert("container".into(), c);
            let mut merged = r2.clone();
            merged.configs.insert("ConfA".into(), a);
            prop_assert_eq!(
                charged_bundle(&merged, &spec),
                charged_bundle(&r1, &spec) + charged_bundle(&r2, &spec)
            );
        }
    }
}
