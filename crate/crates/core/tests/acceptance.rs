//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Runs without the libtest harness so the lines are always printed.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use era_core::bdl::scenario::{PredictorKind, ResolvedScenario, Scenario};
use era_core::bdl::WorkloadTrace;
use era_core::domain::{CloudSpec, ReservationRequest, ResourceRequest, Slot, TimeGrid};
use era_core::error::PredictorError;
use era_core::money::{Money, Price, Qty};
use era_core::predictor::{
    build_spreading_predictor, solve_fractional_allocation, DemandCurve, DemandOracle, FlatOracle, PredictorSettings,
};
use era_core::scheduler::{Algorithm, Engine, PriceBounds};
use era_core::simulator::setup::{build_algorithm, build_oracle, simulation_configs, AlgorithmName};
use era_core::simulator::{brute_force_optimal, run_simulation, MetricsReport, SimulationConfig, SimulationOutput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRUTHFUL_REQUESTS: usize = 1000;
const TRUTHFUL_LIMIT: Duration = Duration::from_secs(60);
const YAHOO_MARGIN: f64 = 2.0;
const COMPARISON_LIMIT: Duration = Duration::from_secs(300);
const OPTIMUM_INSTANCES: usize = 200;
const OPTIMUM_MAX_JOBS: usize = 8;
const OPTIMUM_MAX_SLOTS: Slot = 16;
const OPTIMUM_LIMIT: Duration = Duration::from_secs(120);
const LP_REL_EPS: f64 = 1e-6;
const CURVES: usize = 1000;

const SCENARIOS: [&str; 5] = ["yahoo_like", "azure_like", "day_night", "failures", "empty"];
const ALL: [&str; 3] = ["basicEcon", "firstFit", "onDemand"];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn scenario(name: &str) -> ResolvedScenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"));
    Scenario::load(&path).unwrap_or_else(|e| panic!("{name}: {e}")).resolve(None).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn run_all(s: &ResolvedScenario, algos: &[&str]) -> Vec<SimulationOutput> {
    let names: Vec<String> = algos.iter().map(|a| a.to_string()).collect();
    simulation_configs(s, &names, None).unwrap().iter().map(|c| run_simulation(c).unwrap_or_else(|e| panic!("{}: {e}", s.name))).collect()
}

fn metrics_csv(m: &MetricsReport) -> Vec<u8> {
    let mut buf = Vec::new();
    m.write_csv(&mut buf).unwrap();
    buf
}

/// Per-slot curves drawn at random, one set per resource.
#[derive(Debug)]
struct RandomOracle {
    horizon: Slot,
    curves: Vec<DemandCurve>,
}

impl DemandOracle for RandomOracle {
    fn horizon(&self) -> Slot {
        self.horizon
    }

    fn curve_unchecked(&self, _now: Slot, slot: Slot, _resource: usize) -> Result<DemandCurve, PredictorError> {
        Ok(self.curves[slot as usize].clone())
    }
}

fn random_curve(rng: &mut ChaCha8Rng, max_price: i64, max_points: usize) -> DemandCurve {
    let n = rng.random_range(0..=max_points);
    DemandCurve::from_contributions(
        (0..n).map(|_| (Money::from_raw(rng.random_range(0..=max_price / 100) * 100), Qty::from_micros(rng.random_range(1..=4_000_000)))),
    )
}

fn random_request(rng: &mut ChaCha8Rng, horizon: Slot, cap: u64) -> ResourceRequest {
    let t = rng.random_range(1..=horizon.min(6));
    let a = rng.random_range(0..=horizon - t);
    let d = rng.random_range(a + t..=horizon);
    ResourceRequest::new("core", rng.random_range(1..=cap), t, a, d)
}

fn single(cap: u64, horizon: Slot) -> Arc<CloudSpec> {
    Arc::new(CloudSpec::single_resource(TimeGrid::new(60, horizon).unwrap(), "core", vec![cap; horizon as usize]).unwrap())
}

/// Quoted price does not depend on the bid and acceptance is monotone in it.
fn truthfulness() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut violations = Vec::new();
    let (mut accepts, mut rejects) = (0usize, 0usize);
    for case in 0..TRUTHFUL_REQUESTS {
        let horizon = rng.random_range(4..=24);
        let cap = rng.random_range(1..=12);
        let spec = single(cap, horizon);
        let algorithm = if case % 4 == 3 {
            Algorithm::FirstFit { unit_price: Money::from_raw(rng.random_range(0..=30_000)) }
        } else {
            let oracle = RandomOracle { horizon, curves: (0..horizon).map(|_| random_curve(&mut rng, 50_000, 6)).collect() };
            let bounds = match rng.random_range(0..3) {
                0 => PriceBounds::default(),
                1 => PriceBounds { floor: Some(Money::from_raw(5_000)), cap: None },
                _ => PriceBounds { floor: Some(Money::from_raw(2_000)), cap: Some(Money::from_raw(30_000)) },
            };
            Algorithm::BasicEcon { oracle: Arc::new(oracle), bounds }
        };
        let mut engine = Engine::new(spec, algorithm);
        for k in 0..rng.random_range(0..8) {
            let r = random_request(&mut rng, horizon, cap);
            let rich = ReservationRequest::single(&format!("bg{k}"), r, Money::from_units(1_000_000));
            engine.make_reservation(0, &rich).unwrap();
        }
        let entries: Vec<ResourceRequest> = (0..rng.random_range(1..=2)).map(|_| random_request(&mut rng, horizon, cap)).collect();
        let offer = engine.clone().offer(0, &entries).unwrap();
        let mut bids: Vec<Money> = (0..6).map(|_| Money::from_raw(rng.random_range(0..=600_000))).collect();
        if let Some(o) = &offer {
            bids.extend([o.price, o.price + Money::from_raw(1), Money::from_raw((o.price.raw() - 1).max(0))]);
        }
        bids.sort();
        let mut accepted_before = false;
        for bid in bids {
            let req = ReservationRequest { job_id: "probe".into(), requests: entries.clone(), max_price: bid, submit_time: 0, class: None };
            let q = engine.clone().make_reservation(0, &req).unwrap();
            let expected = offer.as_ref().is_some_and(|o| o.price <= bid);
            let consistent = match &offer {
                Some(o) if q.accepted => q.price == Some(o.price) && q.starts == o.starts,
                Some(o) => q.offer.as_ref().is_none_or(|qo| qo == o),
                None => !q.accepted,
            };
            if q.accepted != expected || !consistent || (accepted_before && !q.accepted) {
                violations.push(format!("case {case} bid {bid}"));
            }
            accepted_before |= q.accepted;
            if q.accepted {
                accepts += 1;
            } else {
                rejects += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        violations.is_empty() && elapsed < TRUTHFUL_LIMIT,
        format!(
            "{TRUTHFUL_REQUESTS} requests ({accepts} accepted / {rejects} rejected quotes), {} violations {:?}, {:.1}s",
            violations.len(),
            violations.first(),
            elapsed.as_secs_f64()
        ),
    )
}

struct Runs {
    by_scenario: BTreeMap<&'static str, (ResolvedScenario, Vec<SimulationOutput>)>,
}

/// Nothing promised or handed out beyond capacity, in any run.
fn capacity_safety(runs: &Runs) -> Verdict {
    let mut bad = Vec::new();
    let mut count = 0;
    for (name, (_, outs)) in &runs.by_scenario {
        for o in outs {
            count += 1;
            let m = &o.metrics;
            if m.capacity_violations + m.promise_violations + m.poll_mismatches > 0 {
                bad.push(format!(
                    "{name}/{}: capacity {} promise {} polls {}",
                    m.algorithm, m.capacity_violations, m.promise_violations, m.poll_mismatches
                ));
            }
        }
    }
    verdict(bad.is_empty(), format!("{count} runs, failures: {bad:?}"))
}

/// No late jobs and no broken guarantees without failures.
fn guarantees(runs: &Runs) -> Verdict {
    let mut bad = Vec::new();
    let mut count = 0;
    for (name, (s, outs)) in &runs.by_scenario {
        if !s.failures.is_empty() {
            continue;
        }
        for o in outs.iter().filter(|o| o.metrics.algorithm != "onDemand") {
            count += 1;
            let m = &o.metrics;
            if m.late_pct() != 0.0 || m.broken_guarantees() != 0 {
                bad.push(format!("{name}/{}: late {} broken {}", m.algorithm, m.late_pct(), m.broken_guarantees()));
            }
        }
    }
    verdict(bad.is_empty() && count > 0, format!("{count} failure-free runs, failures: {bad:?}"))
}

fn timed_compare(name: &str, algos: &[&str]) -> (ResolvedScenario, Vec<MetricsReport>, Duration) {
    let start = Instant::now();
    let s = scenario(name);
    let names: Vec<String> = algos.iter().map(|a| a.to_string()).collect();
    let configs = simulation_configs(&s, &names, None).unwrap();
    let cmp = era_core::simulator::compare_algorithms(&configs).unwrap();
    (s, cmp.reports, start.elapsed())
}

fn yahoo() -> Verdict {
    let (s, reports, elapsed) = timed_compare("yahoo_like", &["basicEcon", "firstFit"]);
    let (econ, ff) = (&reports[0], &reports[1]);
    let jobs = s.workload.len();
    let ratio = econ.welfare_share() / ff.welfare_share();
    verdict(
        ratio >= YAHOO_MARGIN && (8_000..=9_000).contains(&jobs) && elapsed < COMPARISON_LIMIT,
        format!(
            "{jobs} jobs, welfare share basicEcon {:.3} firstFit {:.3} (ratio {ratio:.2}), {:.1}s",
            econ.welfare_share(),
            ff.welfare_share(),
            elapsed.as_secs_f64()
        ),
    )
}

fn azure() -> Verdict {
    let (_, reports, elapsed) = timed_compare("azure_like", &ALL);
    let (econ, ff, od) = (&reports[0], &reports[1], &reports[2]);
    verdict(
        econ.revenue() >= ff.revenue() && econ.late_pct() <= od.late_pct() && elapsed < COMPARISON_LIMIT,
        format!(
            "revenue basicEcon {} firstFit {}; latePct basicEcon {:.4} onDemand {:.4}; {:.1}s",
            econ.revenue(),
            ff.revenue(),
            econ.late_pct(),
            od.late_pct(),
            elapsed.as_secs_f64()
        ),
    )
}

/// Exhaustive subset-and-start search kept separate from the library's search.
fn reference_optimum(jobs: &[ReservationRequest], cap: u64, horizon: Slot) -> Money {
    fn go(jobs: &[ReservationRequest], k: usize, free: &mut Vec<u64>, horizon: Slot) -> Money {
        if k == jobs.len() {
            return Money::ZERO;
        }
        let mut best = go(jobs, k + 1, free, horizon);
        let r = &jobs[k].requests[0];
        let d = r.deadline.min(horizon);
        let mut s = r.arrival;
        while s + r.duration <= d {
            let span = s as usize..(s + r.duration) as usize;
            if free[span.clone()].iter().all(|&f| f >= r.configs["core"]) {
                free[span.clone()].iter_mut().for_each(|f| *f -= r.configs["core"]);
                best = best.max(jobs[k].max_price + go(jobs, k + 1, free, horizon));
                free[span].iter_mut().for_each(|f| *f += r.configs["core"]);
            }
            s += 1;
        }
        best
    }
    go(jobs, 0, &mut vec![cap; horizon as usize], horizon)
}

fn optimum() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut bad = Vec::new();
    let (mut optimal, mut below) = (0usize, 0usize);
    for case in 0..OPTIMUM_INSTANCES {
        let horizon = rng.random_range(2..=OPTIMUM_MAX_SLOTS);
        let cap = rng.random_range(1..=5);
        let spec = single(cap, horizon);
        let n = rng.random_range(1..=OPTIMUM_MAX_JOBS);
        let jobs: Vec<ReservationRequest> = (0..n)
            .map(|i| {
                let r = random_request(&mut rng, horizon, cap);
                let mut job = ReservationRequest::single(&format!("j{i}"), r, Money::from_units(rng.random_range(1..=40)));
                job.submit_time = rng.random_range(0..=job.requests[0].arrival);
                job
            })
            .collect();
        let trace = WorkloadTrace::new(jobs.clone()).unwrap();
        let brute = brute_force_optimal(&trace, &spec).unwrap();
        let reference = reference_optimum(&jobs, cap, horizon);
        let oracle: Arc<dyn DemandOracle> = if case % 2 == 0 {
            let settings = PredictorSettings { period: horizon, history_window: None };
            Arc::new(build_spreading_predictor(&trace, &spec, horizon, settings))
        } else {
            Arc::new(FlatOracle::new(horizon, vec![random_curve(&mut rng, 100_000, 4)]))
        };
        let cfg = SimulationConfig::new(spec.clone(), trace.clone(), Algorithm::BasicEcon { oracle, bounds: PriceBounds::default() });
        let econ = run_simulation(&cfg).unwrap().metrics.welfare();
        let lp = solve_fractional_allocation(&trace, &spec).unwrap().objective;
        let b = brute.to_f64();
        if econ == brute {
            optimal += 1;
        } else {
            below += 1;
        }
        if brute != reference || econ > brute || lp < b - LP_REL_EPS * b.max(1.0) {
            bad.push(format!("case {case}: brute {brute} reference {reference} econ {econ} lp {lp}"));
        }
    }
    let elapsed = start.elapsed();
    verdict(
        bad.is_empty() && elapsed < OPTIMUM_LIMIT,
        format!(
            "{OPTIMUM_INSTANCES} instances (econ optimal on {optimal}, below on {below}), {} violations {:?}, {:.1}s",
            bad.len(),
            bad.first(),
            elapsed.as_secs_f64()
        ),
    )
}

/// Medium-class value whose reservation starts in the night half `[14, 24)`.
fn medium_night_value(s: &ResolvedScenario, out: &SimulationOutput) -> Money {
    let medium: BTreeMap<&str, Money> =
        s.workload.iter().filter(|j| j.class.as_deref() == Some("medium")).map(|j| (j.job_id.as_str(), j.max_price)).collect();
    let mut total = Money::ZERO;
    for e in out.event_log().lines() {
        let f: Vec<&str> = e.split('\t').collect();
        if f[1] != "ACCEPT" {
            continue;
        }
        let Some(v) = medium.get(f[2]) else { continue };
        let start: Slot = f[3].split("starts=").nth(1).unwrap().parse().unwrap();
        if start >= 14 {
            total += *v;
        }
    }
    total
}

fn day_night() -> Verdict {
    let s = scenario("day_night");
    let medium_unit = Money::from_units(3);
    let capacity = Qty::from_units(10);
    let spreading = build_oracle(&s, PredictorKind::Spreading).unwrap();
    let lp = build_oracle(&s, PredictorKind::Lp).unwrap();
    let mut notes = Vec::new();
    for t in 14..24 {
        let sc = spreading.curve(0, t, 0).unwrap();
        let lc = lp.curve(0, t, 0).unwrap();
        // 25 jobs of 4 core-slots spread over 20 slots: 5 units per class per slot.
        if sc.demand(Money::from_units(3)) != Qty::from_units(5) || sc.demand(Money::from_units(1)) != capacity {
            notes.push(format!("spreading curve at {t}: {sc}"));
        }
        if sc.price_exceeding(capacity - Qty::from_units(1)) >= medium_unit {
            notes.push(format!("spreading price at {t} not below medium"));
        }
        if lc.demand(medium_unit) < capacity || lc.price_exceeding(capacity - Qty::from_units(1)) != medium_unit {
            notes.push(format!("lp curve at {t}: {lc}"));
        }
    }
    let run = |oracle: &Arc<dyn DemandOracle>| {
        let mut cfg = SimulationConfig::new(s.spec.clone(), s.workload.clone(), build_algorithm(&s, AlgorithmName::BasicEcon, oracle));
        cfg.seed = s.seed;
        run_simulation(&cfg).unwrap()
    };
    let (with_lp, with_spreading) = (run(&lp), run(&spreading));
    let (vl, vs) = (medium_night_value(&s, &with_lp), medium_night_value(&s, &with_spreading));
    if vl <= vs {
        notes.push("lp does not beat spreading at night".into());
    }
    verdict(notes.is_empty(), format!("medium value at night: lp {vl} spreading {vs}; {notes:?}"))
}

fn determinism(runs: &Runs) -> Verdict {
    let mut bad = Vec::new();
    for (name, (_, first)) in &runs.by_scenario {
        let again = run_all(&scenario(name), &ALL);
        for (a, b) in first.iter().zip(&again) {
            if a.event_log() != b.event_log() || metrics_csv(&a.metrics) != metrics_csv(&b.metrics) {
                bad.push(format!("{name}/{}", a.metrics.algorithm));
            }
        }
    }
    verdict(bad.is_empty(), format!("{} scenarios rerun, differing: {bad:?}", runs.by_scenario.len()))
}

/// Inverse queries against a scan of every price on the grid the curve lives on.
fn inverse_price() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut bad = Vec::new();
    let mut checks = 0usize;
    for case in 0..CURVES {
        let n = rng.random_range(0..=12);
        let contributions: Vec<(Money, Qty)> =
            (0..n).map(|_| (Money::from_raw(rng.random_range(0..=100) * 100), Qty::from_micros(rng.random_range(1..=3_000_000)))).collect();
        let curve = DemandCurve::from_contributions(contributions.clone());
        let grid: Vec<Money> = (0..=101).rev().map(|k| Money::from_raw(k * 100)).collect();
        let demand = |p: Money| -> Qty { contributions.iter().filter(|(cp, _)| *cp >= p).fold(Qty::ZERO, |acc, (_, q)| acc + *q) };
        let scan_inverse = |q: Qty| -> Option<Price> {
            if !q.is_positive() {
                return Some(Price::Infinite);
            }
            grid.iter().find(|&&p| demand(p) >= q).map(|&p| Price::Finite(p))
        };
        let scan_exceeding = |r: Qty| grid.iter().find(|&&p| demand(p) > r).copied().unwrap_or(Money::ZERO);
        let mut probes = vec![Qty::ZERO, Qty::from_micros(-1), Qty::from_units(100)];
        for &(_, q) in curve.points() {
            probes.extend([q, q - Qty::from_micros(1), q + Qty::from_micros(1)]);
        }
        probes.extend((0..5).map(|_| Qty::from_micros(rng.random_range(0..=40_000_000))));
        for &p in &grid {
            checks += 1;
            if curve.demand(p) != demand(p) {
                bad.push(format!("case {case}: demand at {p}"));
            }
        }
        for q in probes {
            checks += 1 + usize::from(!q.is_negative());
            if curve.inverse_price(q) != scan_inverse(q) {
                bad.push(format!("case {case}: inverse of {q}"));
            }
            if !q.is_negative() && curve.price_exceeding(q) != scan_exceeding(q) {
                bad.push(format!("case {case}: exceeding {q}"));
            }
        }
    }
    verdict(bad.is_empty(), format!("{CURVES} curves, {checks} checks, mismatches {:?}", bad.first()))
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut record = |n: u32, title: &'static str, v: Verdict| {
        println!("criterion {n} [{}] {title}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((n, title, v));
    };
    record(1, "price independent of bid, acceptance monotone", truthfulness());
    let runs = Runs {
        by_scenario: SCENARIOS
            .iter()
            .map(|&n| {
                let s = scenario(n);
                let outs = run_all(&s, &ALL);
                (n, (s, outs))
            })
            .collect(),
    };
    record(2, "capacity safety", capacity_safety(&runs));
    record(3, "guarantees kept without failures", guarantees(&runs));
    record(4, "yahoo-like welfare share", yahoo());
    record(5, "azure-like revenue and lateness", azure());
    record(6, "offline optimum bounds", optimum());
    record(7, "day/night predictor comparison", day_night());
    record(8, "determinism", determinism(&runs));
    record(9, "inverse price against grid scan", inverse_price());
    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
