//! `era`: generate workloads, run simulations, compare algorithms and dump demand curves.
//!
//! Exit status is 0 on success, 1 when the scenario or flags are unusable and
//! 2 when a run or an output write fails.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use era_core::bdl::scenario::{PredictorKind, ResolvedScenario, Scenario};
use era_core::bdl::write_trace;
use era_core::predictor::dump_curves;
use era_core::simulator::setup::{build_oracle, simulation_configs};
use era_core::simulator::write_comparison_csv;
use era_core::simulator::{compare_algorithms, run_simulation, SimulationConfig};

#[derive(Parser, Debug)]
#[command(name = "era", version, about = "Reservation scheduling and pricing simulator")]
struct Cli {
    /// Do not print scenario warnings.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one algorithm; writes metrics and an event log.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Algorithm to run (defaults to the first one the scenario lists).
        #[arg(long)]
        algo: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Run several algorithms on the same workload; writes a comparison table.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated algorithms (defaults to the scenario's list).
        #[arg(long, value_delimiter = ',')]
        algo: Vec<String>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Write the scenario's workload as a trace CSV.
    GenWorkload {
        #[command(flatten)]
        common: Common,
    },
    /// Write the predicted demand curves seen at slot 0.
    DumpCurves {
        #[command(flatten)]
        common: Common,
        /// Predictor to use instead of the scenario's.
        #[arg(long)]
        predictor: Option<PredictorKind>,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

enum Failure {
    Config(String),
    Runtime(String),
}

fn config<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Config(e.to_string())
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn load(common: &Common, quiet: bool) -> Result<ResolvedScenario, Failure> {
    let scenario = Scenario::load(&common.scenario).map_err(config)?;
    let resolved = scenario.resolve(common.seed).map_err(config)?;
    if !quiet {
        for w in &resolved.warnings {
            eprintln!("warning: {w}");
        }
    }
    fs::create_dir_all(&common.out).map_err(|e| Failure::Config(format!("cannot create {}: {e}", common.out.display())))?;
    Ok(resolved)
}

fn configs(s: &ResolvedScenario, names: &[String]) -> Result<Vec<SimulationConfig>, Failure> {
    let configs = simulation_configs(s, names, None).map_err(config)?;
    for c in &configs {
        c.validate().map_err(config)?;
    }
    Ok(configs)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Simulate { common, algo, format } => {
            let s = load(common, cli.quiet)?;
            let name = match algo {
                Some(a) => a.clone(),
                None => s.algorithms.run.first().cloned().ok_or_else(|| Failure::Config("scenario lists no algorithms".into()))?,
            };
            let cfg = configs(&s, &[name])?.remove(0);
            let out = run_simulation(&cfg).map_err(runtime)?;
            match format {
                Format::Csv => out.metrics.write_csv(create(&common.out, "metrics.csv")?).map_err(runtime)?,
                Format::Json => {
                    let mut f = create(&common.out, "metrics.json")?;
                    serde_json_line(&mut f, &out.metrics.to_json())?;
                }
            }
            let mut log = create(&common.out, "events.log")?;
            log.write_all(out.event_log().as_bytes()).and_then(|_| log.flush()).map_err(runtime)?;
            let m = &out.metrics;
            println!(
                "{}: jobs={} accepted={} onTime={} welfare={} revenue={} latePct={:.6} utilization={:.6}",
                m.algorithm,
                m.overall.jobs,
                m.overall.accepted,
                m.overall.on_time,
                m.welfare(),
                m.revenue(),
                m.late_pct(),
                m.utilization()
            );
        }
        Command::Compare { common, algo, format } => {
            let s = load(common, cli.quiet)?;
            let names = if algo.is_empty() { s.algorithms.run.clone() } else { algo.clone() };
            let cmp = compare_algorithms(&configs(&s, &names)?).map_err(runtime)?;
            match format {
                Format::Csv => write_comparison_csv(&cmp.reports, create(&common.out, "comparison.csv")?).map_err(runtime)?,
                Format::Json => {
                    let rows: Vec<_> = cmp.reports.iter().map(|r| r.to_json()).collect();
                    let mut f = create(&common.out, "comparison.json")?;
                    serde_json_line(&mut f, &serde_json::Value::Array(rows))?;
                }
            }
            for r in &cmp.reports {
                println!(
                    "{}: welfare={} revenue={} latePct={:.6} utilization={:.6}",
                    r.algorithm,
                    r.welfare(),
                    r.revenue(),
                    r.late_pct(),
                    r.utilization()
                );
            }
            if let Some(opt) = cmp.optimum {
                println!("optimum: welfare={opt}");
            }
        }
        Command::GenWorkload { common } => {
            let s = load(common, cli.quiet)?;
            write_trace(&s.workload, create(&common.out, "trace.csv")?).map_err(runtime)?;
            println!("{} jobs written", s.workload.len());
        }
        Command::DumpCurves { common, predictor } => {
            let s = load(common, cli.quiet)?;
            let oracle = build_oracle(&s, predictor.unwrap_or(s.predictor.kind)).map_err(config)?;
            let ids: Vec<&str> = s.spec.resources().iter().map(|r| r.id.as_str()).collect();
            let mut f = create(&common.out, "curves.csv")?;
            dump_curves(oracle.as_ref(), 0, &ids, &mut f).and_then(|_| f.flush()).map_err(runtime)?;
        }
    }
    Ok(())
}

fn serde_json_line<W: Write>(w: &mut W, v: &serde_json::Value) -> Result<(), Failure> {
    serde_json::to_writer_pretty(&mut *w, v).map_err(runtime)?;
    writeln!(w).and_then(|_| w.flush()).map_err(runtime)
}
