use std::path::PathBuf;

use era_core::bdl::scenario::{PredictorKind, ResolvedScenario, Scenario};
use era_core::money::{Money, Qty};
use era_core::predictor::solve_fractional_allocation;
use era_core::simulator::setup::{build_oracle, simulation_configs};
use era_core::simulator::{brute_force_optimal, compare_algorithms, run_simulation};

fn path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn load(name: &str) -> ResolvedScenario {
    Scenario::load(&path(&format!("{name}.toml"))).unwrap().resolve(None).unwrap()
}

#[test]
fn day_night_lp_puts_high_jobs_in_the_day_and_medium_at_night() {
    let s = load("day_night");
    let lp = solve_fractional_allocation(&s.workload, &s.spec).unwrap();
    // 25 high jobs at 36 fill the day, 25 medium at 12 fill the night.
    assert!((lp.objective - 1200.0).abs() < 1e-6, "{}", lp.objective);
    for (i, item) in lp.items.iter().enumerate() {
        let class = s.workload.requests()[item.job].class.as_deref().unwrap();
        let frac = lp.scheduled_fraction(i);
        match class {
            "high" | "medium" => assert!((frac - 1.0).abs() < 1e-6, "{class} {frac}"),
            _ => assert!(frac.abs() < 1e-6, "{class} {frac}"),
        }
    }
}

#[test]
fn day_night_econ_with_lp_reaches_the_optimum() {
    let s = load("day_night");
    let names = vec!["basicEcon".to_string(), "firstFit".to_string()];
    let cmp = compare_algorithms(&simulation_configs(&s, &names, Some(PredictorKind::Lp)).unwrap()).unwrap();
    assert_eq!(cmp.reports[0].welfare(), Money::from_units(1200));
    assert!(cmp.reports[1].welfare() < Money::from_units(1200));
    // Too many jobs for the exhaustive search.
    assert_eq!(cmp.optimum, None);
    assert!(brute_force_optimal(&s.workload, &s.spec).is_err());
}

#[test]
fn spreading_example_spreads_one_core_over_the_window() {
    let s = load("spreading_example");
    let oracle = build_oracle(&s, PredictorKind::Spreading).unwrap();
    for t in 0..60 {
        let c = oracle.curve(0, t, 0).unwrap();
        if t < 50 {
            assert_eq!(c.points(), &[(Money::from_units(1), Qty::from_units(1))]);
        } else {
            assert!(c.is_empty());
        }
    }
}

#[test]
fn failure_scenario_breaks_some_guarantees_but_never_capacity() {
    let s = load("failures");
    let names: Vec<String> = ["basicEcon", "firstFit", "onDemand"].map(String::from).to_vec();
    for cfg in simulation_configs(&s, &names, None).unwrap() {
        let out = run_simulation(&cfg).unwrap();
        let m = &out.metrics;
        assert_eq!((m.capacity_violations, m.promise_violations, m.poll_mismatches), (0, 0, 0), "{}", m.algorithm);
        let cancels = out.event_log().lines().filter(|l| l.contains("\tCANCEL\t")).count();
        assert_eq!(cancels, m.broken_guarantees(), "{}", m.algorithm);
        assert!(out.event_log().contains("\tEARLY\t") || m.algorithm == "onDemand");
    }
}

#[test]
fn azure_like_capacity_is_a_fluctuating_slice() {
    let s = load("azure_like");
    let series = s.spec.capacity_series(0);
    let (lo, hi) = (*series.iter().min().unwrap(), *series.iter().max().unwrap());
    // Background share 0.8 +- 0.08 +- 0.06 of 2000 cores.
    assert!(lo >= 2000 - 1880 && hi <= 2000 - 1320, "{lo}..{hi}");
    assert!(hi - lo > 100);
}

#[test]
fn yahoo_like_capacity_is_a_quarter_of_demand() {
    let s = load("yahoo_like");
    let demand = s.workload.demanded_resource_slots(&s.spec) as f64;
    let capacity = s.spec.capacity_series(0).iter().sum::<u64>() as f64;
    assert!((capacity / demand - 0.25).abs() < 0.01, "{}", capacity / demand);
}

#[test]
fn seed_override_changes_generated_workloads() {
    let sc = Scenario::load(&path("azure_like.toml")).unwrap();
    let (a, b) = (sc.resolve(None).unwrap(), sc.resolve(Some(7)).unwrap());
    assert_ne!(a.workload, b.workload);
    assert_eq!(a.workload, sc.resolve(None).unwrap().workload);
}

#[test]
fn unknown_fields_are_rejected() {
    let text = std::fs::read_to_string(path("empty.toml")).unwrap().replace("seed = 5", "seed = 5\nsede = 6");
    assert!(Scenario::parse(&text, path("")).is_err());
}

#[test]
fn missing_trace_file_fails_to_resolve() {
    let text = std::fs::read_to_string(path("day_night.toml")).unwrap().replace("day_night.csv", "nope.csv");
    assert!(Scenario::parse(&text, path("")).unwrap().resolve(None).is_err());
}
