//! Deterministic slot-by-slot cloud simulation around a scheduling engine.
//!
//! Each slot: requests submitted in the slot are quoted in `(submitTime,
//! jobId)` order; the engine is polled once per tick and the mock cloud runs
//! whatever it is told to; jobs that have received all their resource-slots
//! finish; the cloud then reports terminations, consumption, waiting jobs and
//! capacity changes announced for later slots.
//!
//! Event log lines are `slot<TAB>TYPE<TAB>jobId<TAB>payload` with `TYPE` one of
//! `SUBMIT ACCEPT REJECT START EARLY FINISH CANCEL CAPACITY`. Capacity events
//! use `-` for the job id.

mod metrics;
mod optimal;
pub mod setup;

pub use metrics::{write_comparison_csv, MetricsReport, Tally, COMPARISON_HEADER, METRICS_HEADER};
pub use optimal::{brute_force_optimal, MAX_JOBS, MAX_SLOTS};

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;
use std::thread;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bdl::WorkloadTrace;
use crate::domain::{charged_bundle, validate_request, CloudSpec, JobId, ReservationRequest, Slot};
use crate::error::SimulationError;
use crate::money::Money;
use crate::scheduler::{Algorithm, CapacityChange, CloudFeedback, Engine};
use crate::workload::Dist;

/// A capacity change on `[at, at + length)`, reported to the engine `notice` slots ahead.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureEvent {
    pub at: Slot,
    pub resource: String,
    pub delta: i64,
    #[serde(default = "one")]
    pub length: Slot,
    #[serde(default = "one")]
    pub notice: Slot,
}

fn one() -> Slot {
    1
}

#[derive(Clone, Debug)]
pub struct SimulationConfig {
    pub spec: Arc<CloudSpec>,
    pub workload: WorkloadTrace,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub failures: Vec<FailureEvent>,
    /// Distribution of used/reserved duration; jobs finish after `ceil(ratio * T)` slots.
    pub early_termination: Option<Dist>,
    /// Let admitted jobs run on idle capacity before their reserved start.
    pub early_start: bool,
}

impl SimulationConfig {
    pub fn new(spec: Arc<CloudSpec>, workload: WorkloadTrace, algorithm: Algorithm) -> Self {
        SimulationConfig { spec, workload, algorithm, seed: 0, failures: Vec::new(), early_termination: None, early_start: false }
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        for job in &self.workload {
            let v = validate_request(job, &self.spec);
            if !v.is_empty() {
                let reasons: Vec<String> = v.iter().map(ToString::to_string).collect();
                return Err(SimulationError::Config(format!("job {}: {}", job.job_id, reasons.join("; "))));
            }
        }
        for f in &self.failures {
            if self.spec.resource_index(&f.resource).is_none() {
                return Err(SimulationError::Config(format!("failure on unknown resource {:?}", f.resource)));
            }
            if f.notice == 0 || f.at < f.notice {
                return Err(SimulationError::Config(format!("failure at slot {} needs 1 <= notice <= at", f.at)));
            }
        }
        if let Some(d) = &self.early_termination {
            d.validate().map_err(|e| SimulationError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    Submit,
    Accept,
    Reject,
    Start,
    Early,
    Finish,
    Cancel,
    Capacity,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Submit => "SUBMIT",
            EventKind::Accept => "ACCEPT",
            EventKind::Reject => "REJECT",
            EventKind::Start => "START",
            EventKind::Early => "EARLY",
            EventKind::Finish => "FINISH",
            EventKind::Cancel => "CANCEL",
            EventKind::Capacity => "CAPACITY",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub slot: Slot,
    pub kind: EventKind,
    pub job: Option<JobId>,
    pub payload: String,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let job = self.job.as_ref().map_or("-", |j| j.as_str());
        write!(f, "{}\t{}\t{}\t{}", self.slot, self.kind, job, self.payload)
    }
}

#[derive(Clone, Debug)]
pub struct SimulationOutput {
    pub metrics: MetricsReport,
    pub events: Vec<Event>,
}

impl SimulationOutput {
    /// The event log, one line per event.
    pub fn event_log(&self) -> String {
        let mut s = String::new();
        for e in &self.events {
            s.push_str(&e.to_string());
            s.push('\n');
        }
        s
    }
}

/// Mock-cloud state of an accepted job.
struct Run {
    job: usize,
    price: Money,
    bundle: Vec<u64>,
    required: u64,
    progress: u64,
    planned_end: Slot,
    started: bool,
    early: bool,
    completed: Option<Slot>,
    cancelled: bool,
}

fn starts_text(starts: &[Slot]) -> String {
    starts.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Runs one engine over the whole horizon.
pub fn run_simulation(cfg: &SimulationConfig) -> Result<SimulationOutput, SimulationError> {
    cfg.validate()?;
    let spec = cfg.spec.clone();
    let horizon = spec.horizon();
    let nres = spec.resources().len();
    let mut engine = Engine::new(spec.clone(), cfg.algorithm.clone());
    let mut capacity: Vec<Vec<u64>> = (0..nres).map(|r| spec.capacity_series(r).to_vec()).collect();

    let mut jobs: Vec<&ReservationRequest> = cfg.workload.iter().collect();
    jobs.sort_by(|a, b| a.submit_time.cmp(&b.submit_time).then_with(|| a.job_id.cmp(&b.job_id)));
    let mut failures: BTreeMap<Slot, Vec<&FailureEvent>> = BTreeMap::new();
    for f in &cfg.failures {
        failures.entry(f.at - f.notice).or_default().push(f);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(u64::MAX);
    let mut runs: Vec<Run> = Vec::new();
    let mut run_of: HashMap<JobId, usize> = HashMap::new();
    let mut events = Vec::new();
    let mut report = MetricsReport { algorithm: cfg.algorithm.name().to_string(), ..MetricsReport::default() };
    let mut next = 0;

    for now in 0..horizon {
        while next < jobs.len() && jobs[next].submit_time <= now {
            let job = jobs[next];
            let ev = |kind, payload: String| Event { slot: now, kind, job: Some(job.job_id.clone()), payload };
            events.push(ev(EventKind::Submit, format!("value={}", job.max_price)));
            let quote = engine.make_reservation(now, job)?;
            if quote.accepted {
                let price = quote.price.unwrap_or(Money::ZERO);
                events.push(ev(EventKind::Accept, format!("price={};starts={}", price, starts_text(&quote.starts))));
                let ratio = cfg.early_termination.as_ref().map(|d| d.sample(&mut rng).clamp(0.0, 1.0));
                let mut bundle = vec![0u64; nres];
                let mut required = 0;
                for r in &job.requests {
                    let dense = spec.dense(&charged_bundle(r, &spec));
                    let slots = match ratio {
                        Some(x) => ((x * r.duration as f64).ceil() as Slot).clamp(1, r.duration),
                        None => r.duration,
                    };
                    required += dense.iter().sum::<u64>() * slots as u64;
                    for (b, q) in bundle.iter_mut().zip(dense) {
                        *b += q;
                    }
                }
                let planned_end = job.requests.iter().zip(&quote.starts).map(|(r, s)| s + r.duration).max().unwrap_or(now);
                run_of.insert(job.job_id.clone(), runs.len());
                runs.push(Run {
                    job: next,
                    price,
                    bundle,
                    required,
                    progress: 0,
                    planned_end,
                    started: false,
                    early: false,
                    completed: None,
                    cancelled: false,
                });
            } else {
                let reason = quote.reason.map_or(String::new(), |r| r.to_string());
                let payload = match &quote.offer {
                    Some(o) => format!("reason={reason};offer={}", o.price),
                    None => format!("reason={reason}"),
                };
                events.push(ev(EventKind::Reject, payload));
            }
            next += 1;
        }

        let allocation = engine.current_allocation(now);
        for _ in 1..spec.ticks_per_slot() {
            if engine.current_allocation(now) != allocation {
                report.poll_mismatches += 1;
            }
        }
        for (r, cap) in capacity.iter().enumerate() {
            if engine.ledger().promised(r, now) > cap[now as usize] {
                report.promise_violations += 1;
            }
        }

        let mut used = vec![0u64; nres];
        let mut ran: Vec<usize> = Vec::new();
        let mut fb = CloudFeedback::default();
        for (job_id, bundle) in &allocation {
            let dense = spec.dense(bundle);
            for (u, q) in used.iter_mut().zip(&dense) {
                *u += q;
            }
            let Some(&i) = run_of.get(job_id) else { continue };
            let run = &mut runs[i];
            if run.completed.is_some() || run.cancelled {
                continue;
            }
            run.progress += dense.iter().sum::<u64>();
            if !run.started {
                run.started = true;
                events.push(Event { slot: now, kind: EventKind::Start, job: Some(job_id.clone()), payload: format!("bundle={bundle}") });
            }
            fb.consumption.insert(job_id.clone(), bundle.clone());
            ran.push(i);
        }
        if (0..nres).any(|r| used[r] > capacity[r][now as usize]) {
            report.capacity_violations += 1;
        }

        if cfg.early_start {
            for (i, run) in runs.iter_mut().enumerate() {
                let job = jobs[run.job];
                let waiting =
                    run.completed.is_none() && !run.cancelled && !ran.contains(&i) && job.earliest_arrival().is_some_and(|a| a <= now);
                let fits = (0..nres).all(|r| used[r] + run.bundle[r] <= capacity[r][now as usize]);
                if waiting && fits {
                    for (u, q) in used.iter_mut().zip(&run.bundle) {
                        *u += q;
                    }
                    run.progress += run.bundle.iter().sum::<u64>();
                    if !run.early {
                        run.early = true;
                        events.push(Event { slot: now, kind: EventKind::Early, job: Some(job.job_id.clone()), payload: String::new() });
                    }
                    fb.consumption.insert(job.job_id.clone(), spec.sparse(&run.bundle));
                    ran.push(i);
                }
            }
        }

        for &i in &ran {
            let run = &mut runs[i];
            if run.completed.is_none() && run.progress >= run.required {
                run.completed = Some(now);
                let job = jobs[run.job];
                let on_time = job.latest_deadline().is_some_and(|d| now < d);
                events.push(Event {
                    slot: now,
                    kind: EventKind::Finish,
                    job: Some(job.job_id.clone()),
                    payload: format!("onTime={on_time}"),
                });
                fb.terminations.insert(job.job_id.clone());
            }
        }
        for run in &runs {
            let job = jobs[run.job];
            let in_window = job.earliest_arrival().is_some_and(|a| a <= now);
            if run.completed.is_none() && !run.cancelled && in_window && !fb.consumption.contains_key(&job.job_id) {
                fb.waiting_processes.insert(job.job_id.clone(), 1);
            }
        }
        for f in failures.remove(&now).unwrap_or_default() {
            let r = spec.resource_index(&f.resource).expect("validated");
            for t in f.at..(f.at + f.length).min(horizon) {
                let c = &mut capacity[r][t as usize];
                *c = (*c as i64 + f.delta).max(0) as u64;
                fb.capacity_delta.push(CapacityChange { resource: f.resource.clone(), slot: t, delta: f.delta });
            }
            events.push(Event {
                slot: now,
                kind: EventKind::Capacity,
                job: None,
                payload: format!("resource={};from={};length={};delta={}", f.resource, f.at, f.length, f.delta),
            });
        }

        let summary = engine.update(now, &fb)?;
        for job_id in summary.cancelled {
            if let Some(&i) = run_of.get(&job_id) {
                runs[i].cancelled = true;
            }
            events.push(Event { slot: now, kind: EventKind::Cancel, job: Some(job_id), payload: "reason=capacity".into() });
        }
        report.promise_violations += engine.ledger().overcommitted_after(now).len() as u64;
    }
    report.promise_violations += engine.audit().len() as u64;
    // Capacity after failures.
    report.capacity_resource_slots = capacity.iter().flatten().sum();

    let mut classes: BTreeMap<String, Tally> = BTreeMap::new();
    let mut overall = Tally::new("all");
    let class_of = |job: &ReservationRequest| job.class.clone().unwrap_or_else(|| "-".to_string());
    for job in &jobs {
        let name = class_of(job);
        for t in [&mut overall, classes.entry(name.clone()).or_insert_with(|| Tally::new(&name))] {
            t.jobs += 1;
            t.requested_value += job.max_price;
        }
    }
    let mut allocated_by_job: HashMap<usize, u64> = HashMap::new();
    for run in &runs {
        let job = jobs[run.job];
        let name = class_of(job);
        let on_time = run.completed.is_some_and(|c| job.latest_deadline().is_some_and(|d| c < d));
        let early = run.completed.is_some_and(|c| c + 1 < run.planned_end);
        allocated_by_job.insert(run.job, run.progress);
        for t in [&mut overall, classes.get_mut(&name).expect("class seen")] {
            t.accepted += 1;
            t.allocated_resource_slots += run.progress;
            if on_time {
                t.on_time += 1;
                t.welfare += job.max_price;
                t.revenue += run.price;
            } else {
                t.late += 1;
            }
            if run.cancelled {
                t.broken_guarantees += 1;
            }
            if early {
                t.early_completions += 1;
            }
        }
    }
    debug_assert_eq!(overall.broken_guarantees as u64, engine.broken_guarantees());
    report.overall = overall;
    report.per_class = classes.into_values().collect();
    Ok(SimulationOutput { metrics: report, events })
}

/// Metrics for several algorithms on the same inputs, plus the offline optimum when it is small enough to search.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub reports: Vec<MetricsReport>,
    pub optimum: Option<Money>,
}

impl Comparison {
    /// Welfare over the offline optimum, per report.
    pub fn welfare_ratios(&self) -> Option<Vec<f64>> {
        let opt = self.optimum?.to_f64();
        Some(self.reports.iter().map(|r| if opt > 0.0 { r.welfare().to_f64() / opt } else { 1.0 }).collect())
    }
}

/// Runs every configuration on its own thread; reports keep input order.
pub fn compare_algorithms(configs: &[SimulationConfig]) -> Result<Comparison, SimulationError> {
    let results: Vec<Result<SimulationOutput, SimulationError>> = thread::scope(|s| {
        let handles: Vec<_> = configs.iter().map(|cfg| s.spawn(move || run_simulation(cfg))).collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    let reports = results.into_iter().map(|r| r.map(|o| o.metrics)).collect::<Result<Vec<_>, _>>()?;
    let optimum = match configs.first() {
        Some(c) if c.workload.len() <= MAX_JOBS && c.spec.horizon() <= MAX_SLOTS => Some(brute_force_optimal(&c.workload, &c.spec)?),
        _ => None,
    };
    Ok(Comparison { reports, optimum })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ResourceRequest, TimeGrid};
    use crate::predictor::FlatOracle;
    use crate::scheduler::PriceBounds;

    fn spec(cap: u64, horizon: Slot) -> Arc<CloudSpec> {
        Arc::new(CloudSpec::single_resource(TimeGrid::new(60, horizon).unwrap(), "core", vec![cap; horizon as usize]).unwrap())
    }

    fn job(id: &str, w: u64, t: Slot, a: Slot, d: Slot, v: i64) -> ReservationRequest {
        ReservationRequest::single(id, ResourceRequest::new("core", w, t, a, d), Money::from_units(v))
    }

    fn econ(spec: &Arc<CloudSpec>) -> Algorithm {
        Algorithm::BasicEcon { oracle: Arc::new(FlatOracle::zero(spec.horizon(), 1)), bounds: PriceBounds::default() }
    }

    #[test]
    fn empty_workload_gives_zero_metrics() {
        let s = spec(4, 10);
        let out = run_simulation(&SimulationConfig::new(s.clone(), WorkloadTrace::empty(), econ(&s))).unwrap();
        assert_eq!(out.metrics.welfare(), Money::ZERO);
        assert_eq!(out.metrics.utilization(), 0.0);
        assert!(out.events.is_empty());
    }

    #[test]
    fn single_job_filling_the_cloud() {
        let s = spec(4, 3);
        let w = WorkloadTrace::new(vec![job("a", 4, 3, 0, 3, 9)]).unwrap();
        let out = run_simulation(&SimulationConfig::new(s.clone(), w, econ(&s))).unwrap();
        assert_eq!(out.metrics.utilization(), 1.0);
        assert_eq!(out.metrics.welfare(), Money::from_units(9));
        assert_eq!(out.metrics.late_pct(), 0.0);
    }

    #[test]
    fn on_demand_delay_makes_a_job_late() {
        // b is admitted at slot 3, runs one slot, then loses the cloud for two
        // slots and finishes after its deadline.
        let s = spec(2, 10);
        let w = WorkloadTrace::new(vec![job("a", 2, 3, 0, 10, 10), job("b", 2, 2, 3, 5, 10)]).unwrap();
        let mut cfg = SimulationConfig::new(s, w, Algorithm::OnDemand { unit_price: Money::ZERO });
        cfg.failures.push(FailureEvent { at: 4, resource: "core".into(), delta: -2, length: 2, notice: 1 });
        let out = run_simulation(&cfg).unwrap();
        assert_eq!(out.metrics.overall.accepted, 2);
        assert_eq!(out.metrics.overall.late, 1);
        assert_eq!(out.metrics.capacity_violations, 0);
    }

    #[test]
    fn early_termination_frees_capacity() {
        let s = spec(1, 8);
        let w = WorkloadTrace::new(vec![job("a", 1, 4, 0, 4, 1), job("b", 1, 4, 3, 8, 1)]).unwrap();
        let mut cfg = SimulationConfig::new(s, w, Algorithm::FirstFit { unit_price: Money::ZERO });
        cfg.early_termination = Some(Dist::fixed(0.5));
        let out = run_simulation(&cfg).unwrap();
        // a runs slots 0..2 and ends at slot 1, so b can start at 3.
        assert!(out.event_log().contains("1\tFINISH\ta\tonTime=true"));
        assert_eq!(out.metrics.overall.on_time, 2);
    }

    #[test]
    fn repeated_runs_are_identical() {
        let s = spec(2, 12);
        let w = WorkloadTrace::new((0..6).map(|i| job(&format!("j{i}"), 1, 2, i, i + 5, 3 + i as i64)).collect()).unwrap();
        let cfg = SimulationConfig::new(s.clone(), w, econ(&s));
        assert_eq!(run_simulation(&cfg).unwrap().event_log(), run_simulation(&cfg).unwrap().event_log());
    }

    #[test]
    fn compare_runs_each_algorithm() {
        let s = spec(1, 6);
        let w = WorkloadTrace::new(vec![job("a", 1, 2, 0, 4, 3), job("b", 1, 2, 0, 2, 5)]).unwrap();
        let configs: Vec<SimulationConfig> = [econ(&s), Algorithm::FirstFit { unit_price: Money::ZERO }]
            .into_iter()
            .map(|a| SimulationConfig::new(s.clone(), w.clone(), a))
            .collect();
        let c = compare_algorithms(&configs).unwrap();
        assert_eq!(c.reports.len(), 2);
        assert_eq!(c.optimum, Some(Money::from_units(8)));
    }
}
