//! Scenario files (TOML): cloud, workload, history, predictor and algorithms.
//!
//! ```toml
//! name = "example"
//! seed = 7
//!
//! [grid]
//! slot_seconds = 300
//! horizon = 288
//!
//! [capacity]
//! kind = "constant"
//! values = { core = 64 }
//!
//! [workload]
//! kind = "generated"
//! [[workload.classes]]
//! name = "small"
//! rate = 0.5
//! config = "core"
//! width = { kind = "uniform", low = 1, high = 4 }
//! duration = { kind = "uniform", low = 2, high = 12 }
//! laxity = { kind = "uniform", low = 1, high = 4 }
//! laxity_relative = true
//! unit_value = { kind = "fixed", value = 10 }
//! ```
//!
//! Without `resources`/`configurations` the cloud has one formal resource
//! `core` and one configuration `core` selling a single unit of it. Relative
//! paths are resolved against the scenario file's directory.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bdl::{parse_raw_trace, read_trace_file, ParseMode, WorkloadTrace};
use crate::domain::{Bundle, CloudSpec, Configuration, ResourceKind, ResourceType, Slot, TimeGrid};
use crate::error::{BdlError, SimulationError};
use crate::money::Money;
use crate::simulator::FailureEvent;
use crate::workload::{augment_trace, generate_workload, Dist, JobClassSpec, LaxityRule, ValueRule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDoc {
    pub slot_seconds: u64,
    pub horizon: Slot,
    /// Seconds between allocation polls; one poll per slot by default.
    #[serde(default)]
    pub tick_seconds: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceDoc {
    pub id: String,
    #[serde(default)]
    pub virtual_resource: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigurationDoc {
    pub id: String,
    pub formal: BTreeMap<String, u64>,
    /// Defaults to the formal bundle.
    #[serde(default)]
    pub actual: Option<BTreeMap<String, u64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CapacityDoc {
    Constant {
        values: BTreeMap<String, u64>,
    },
    Series {
        values: BTreeMap<String, Vec<u64>>,
    },
    /// Per resource, `fraction` of the workload's charged resource-slots spread evenly over the horizon.
    DemandFraction {
        fraction: f64,
    },
    /// What is left of `total` after an exogenous load of
    /// `share + amplitude * sin(2 pi t / period) + uniform(-noise, noise)` of it.
    Background {
        total: BTreeMap<String, u64>,
        share: f64,
        #[serde(default)]
        amplitude: f64,
        #[serde(default)]
        noise: f64,
        /// Defaults to one day.
        #[serde(default)]
        period_slots: Option<Slot>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorkloadDoc {
    Generated { classes: Vec<JobClassSpec> },
    Trace { path: PathBuf },
    Raw { path: PathBuf, value_rule: ValueRule, laxity_rule: LaxityRule },
}

/// Where predictors learn from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum HistoryDoc {
    #[default]
    None,
    /// The workload itself.
    Workload,
    /// The generated classes again, with seed `seed + seed_offset`.
    Generated {
        #[serde(default = "default_offset")]
        seed_offset: u64,
    },
    Trace {
        path: PathBuf,
    },
}

fn default_offset() -> u64 {
    1
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    #[default]
    Zero,
    Flat,
    Spreading,
    Lp,
}

impl std::str::FromStr for PredictorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "zero" => Ok(PredictorKind::Zero),
            "flat" => Ok(PredictorKind::Flat),
            "spreading" => Ok(PredictorKind::Spreading),
            "lp" => Ok(PredictorKind::Lp),
            other => Err(format!("unknown predictor {other:?} (expected zero, flat, spreading or lp)")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorDoc {
    #[serde(default)]
    pub kind: PredictorKind,
    /// Folding period; one day by default.
    #[serde(default)]
    pub period_slots: Option<Slot>,
    /// History truncation; one week by default.
    #[serde(default)]
    pub history_window_slots: Option<Slot>,
    /// Flat predictor: price and quantity per slot.
    #[serde(default)]
    pub price: Option<Money>,
    #[serde(default)]
    pub quantity: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconDoc {
    /// Lowest price per unit-slot, e.g. the list price minus the largest discount.
    #[serde(default)]
    pub unit_floor: Option<Money>,
    #[serde(default)]
    pub unit_cap: Option<Money>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPriceDoc {
    pub unit_price: Money,
}

impl Default for FixedPriceDoc {
    fn default() -> Self {
        FixedPriceDoc { unit_price: Money::from_units(1) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmsDoc {
    #[serde(default = "default_run")]
    pub run: Vec<String>,
    #[serde(default)]
    pub basic_econ: EconDoc,
    #[serde(default)]
    pub first_fit: FixedPriceDoc,
    #[serde(default)]
    pub on_demand: FixedPriceDoc,
}

fn default_run() -> Vec<String> {
    vec!["basicEcon".into(), "firstFit".into(), "onDemand".into()]
}

impl Default for AlgorithmsDoc {
    fn default() -> Self {
        AlgorithmsDoc {
            run: default_run(),
            basic_econ: EconDoc::default(),
            first_fit: FixedPriceDoc::default(),
            on_demand: FixedPriceDoc::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub grid: GridDoc,
    #[serde(default)]
    pub resources: Vec<ResourceDoc>,
    #[serde(default)]
    pub configurations: Vec<ConfigurationDoc>,
    pub capacity: CapacityDoc,
    pub workload: WorkloadDoc,
    #[serde(default)]
    pub history: HistoryDoc,
    #[serde(default)]
    pub predictor: PredictorDoc,
    #[serde(default)]
    pub algorithms: AlgorithmsDoc,
    #[serde(default)]
    pub failures: Vec<FailureEvent>,
    #[serde(default)]
    pub early_termination: Option<Dist>,
    #[serde(default)]
    pub early_start: bool,
}

/// A parsed scenario and the directory its relative paths start from.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub base_dir: PathBuf,
}

/// Everything a run needs, with traces generated or loaded.
#[derive(Clone, Debug)]
pub struct ResolvedScenario {
    pub name: String,
    pub seed: u64,
    pub spec: Arc<CloudSpec>,
    pub workload: WorkloadTrace,
    pub history: WorkloadTrace,
    pub predictor: PredictorDoc,
    pub algorithms: AlgorithmsDoc,
    pub failures: Vec<FailureEvent>,
    pub early_termination: Option<Dist>,
    pub early_start: bool,
    pub warnings: Vec<String>,
}

fn scenario_err(message: impl Into<String>) -> BdlError {
    BdlError::Scenario(message.into())
}

impl Scenario {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, BdlError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| scenario_err(e.to_string()))?;
        Ok(Scenario { file, base_dir: base_dir.into() })
    }

    pub fn load(path: &Path) -> Result<Self, BdlError> {
        let text = std::fs::read_to_string(path).map_err(|source| BdlError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Scenario::parse(&text, base)
    }

    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// The cloud without capacity applied (every slot at zero).
    fn shape(&self) -> Result<(TimeGrid, Vec<ResourceType>, Vec<Configuration>, u64), BdlError> {
        let f = &self.file;
        let grid = TimeGrid::new(f.grid.slot_seconds, f.grid.horizon)?;
        let resources = if f.resources.is_empty() {
            vec![ResourceType { id: "core".into(), kind: ResourceKind::Formal }]
        } else {
            f.resources
                .iter()
                .map(|r| ResourceType {
                    id: r.id.clone(),
                    kind: if r.virtual_resource { ResourceKind::Virtual } else { ResourceKind::Formal },
                })
                .collect()
        };
        let configurations = if f.configurations.is_empty() {
            resources
                .iter()
                .filter(|r| r.kind == ResourceKind::Formal)
                .map(|r| {
                    let unit: Bundle = [(r.id.as_str(), 1)].into_iter().collect();
                    Configuration { id: r.id.clone(), formal: unit.clone(), actual: unit }
                })
                .collect()
        } else {
            f.configurations
                .iter()
                .map(|c| {
                    let formal: Bundle = c.formal.iter().map(|(k, v)| (k.clone(), *v)).collect();
                    let actual = c.actual.as_ref().map_or_else(|| formal.clone(), |a| a.iter().map(|(k, v)| (k.clone(), *v)).collect());
                    Configuration { id: c.id.clone(), formal, actual }
                })
                .collect()
        };
        Ok((grid, resources, configurations, f.grid.tick_seconds.unwrap_or(f.grid.slot_seconds)))
    }

    /// Builds the cloud, loads or generates the workload and history, and sizes capacity.
    /// `seed` overrides the file's seed.
    pub fn resolve(&self, seed: Option<u64>) -> Result<ResolvedScenario, SimulationError> {
        let f = &self.file;
        let seed = seed.unwrap_or(f.seed);
        let (grid, resources, configurations, tick) = self.shape()?;
        let horizon = grid.horizon();
        // Workloads only need configurations, so generate against a placeholder capacity.
        let placeholder =
            CloudSpec::new(grid, resources.clone(), configurations.clone(), vec![vec![1; horizon as usize]; resources.len()], tick)?;
        let mut warnings = Vec::new();
        let workload = self.load_workload(&f.workload, &placeholder, seed, &mut warnings)?;
        let history = match &f.history {
            HistoryDoc::None => WorkloadTrace::empty(),
            HistoryDoc::Workload => workload.clone(),
            HistoryDoc::Generated { seed_offset } => match &f.workload {
                WorkloadDoc::Generated { classes } => generate_workload(classes, &placeholder, seed.wrapping_add(*seed_offset))?.trace,
                _ => return Err(SimulationError::Config("generated history needs a generated workload".into())),
            },
            HistoryDoc::Trace { path } => read_trace_file(&self.path(path), &placeholder, ParseMode::Lenient)?.trace,
        };
        let capacity = self.capacity(&placeholder, &workload, seed)?;
        let spec = Arc::new(CloudSpec::new(grid, resources, configurations, capacity, tick)?);
        Ok(ResolvedScenario {
            name: f.name.clone(),
            seed,
            spec,
            workload,
            history,
            predictor: f.predictor.clone(),
            algorithms: f.algorithms.clone(),
            failures: f.failures.clone(),
            early_termination: f.early_termination.clone(),
            early_start: f.early_start,
            warnings,
        })
    }

    fn load_workload(
        &self,
        doc: &WorkloadDoc,
        spec: &CloudSpec,
        seed: u64,
        warnings: &mut Vec<String>,
    ) -> Result<WorkloadTrace, SimulationError> {
        match doc {
            WorkloadDoc::Generated { classes } => {
                let g = generate_workload(classes, spec, seed)?;
                warnings.extend(g.warnings);
                Ok(g.trace)
            }
            WorkloadDoc::Trace { path } => {
                let parsed = read_trace_file(&self.path(path), spec, ParseMode::Lenient)?;
                for r in &parsed.rejected {
                    let reasons: Vec<String> = r.violations.iter().map(ToString::to_string).collect();
                    warnings.push(format!("line {}: job {} dropped: {}", r.line, r.job, reasons.join("; ")));
                }
                Ok(parsed.trace)
            }
            WorkloadDoc::Raw { path, value_rule, laxity_rule } => {
                let p = self.path(path);
                let file = std::fs::File::open(&p).map_err(|source| BdlError::Io { path: p.clone(), source })?;
                let raw = parse_raw_trace(file)?;
                let aug = augment_trace(&raw, spec, value_rule, laxity_rule, seed)?;
                for (job, v) in &aug.flagged {
                    let reasons: Vec<String> = v.iter().map(ToString::to_string).collect();
                    warnings.push(format!("job {job} flagged: {}", reasons.join("; ")));
                }
                Ok(aug.trace)
            }
        }
    }

    fn capacity(&self, spec: &CloudSpec, workload: &WorkloadTrace, seed: u64) -> Result<Vec<Vec<u64>>, SimulationError> {
        let horizon = spec.horizon() as usize;
        let by_resource = |values: &BTreeMap<String, u64>| -> Result<Vec<u64>, SimulationError> {
            for k in values.keys() {
                if spec.resource_index(k).is_none() {
                    return Err(SimulationError::Config(format!("capacity for unknown resource {k:?}")));
                }
            }
            Ok(spec.resources().iter().map(|r| values.get(&r.id).copied().unwrap_or(0)).collect())
        };
        match &self.file.capacity {
            CapacityDoc::Constant { values } => Ok(by_resource(values)?.into_iter().map(|c| vec![c; horizon]).collect()),
            CapacityDoc::Series { values } => spec
                .resources()
                .iter()
                .map(|r| {
                    let s = values.get(&r.id).ok_or_else(|| SimulationError::Config(format!("no capacity series for {:?}", r.id)))?;
                    if s.len() != horizon {
                        return Err(SimulationError::Config(format!(
                            "capacity series for {:?} has {} slots, need {horizon}",
                            r.id,
                            s.len()
                        )));
                    }
                    Ok(s.clone())
                })
                .collect(),
            CapacityDoc::DemandFraction { fraction } => {
                if !(fraction.is_finite() && *fraction > 0.0) {
                    return Err(SimulationError::Config("demand fraction must be > 0".into()));
                }
                let mut demand = vec![0u64; spec.resources().len()];
                for job in workload {
                    for r in &job.requests {
                        for (d, q) in demand.iter_mut().zip(spec.dense(&crate::domain::charged_bundle(r, spec))) {
                            *d += q * r.duration as u64;
                        }
                    }
                }
                Ok(demand.into_iter().map(|d| vec![((d as f64 * fraction / horizon as f64).ceil() as u64).max(1); horizon]).collect())
            }
            CapacityDoc::Background { total, share, amplitude, noise, period_slots } => {
                let totals = by_resource(total)?;
                let period = period_slots.unwrap_or_else(|| spec.grid().slots_in(24 * 3600)).max(1) as f64;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(u64::MAX - 1);
                let mut out = vec![Vec::with_capacity(horizon); totals.len()];
                for t in 0..horizon {
                    let wave = amplitude * (TAU * t as f64 / period).sin();
                    let jitter = if *noise > 0.0 { rng.random_range(-*noise..=*noise) } else { 0.0 };
                    let load = (share + wave + jitter).clamp(0.0, 1.0);
                    for (r, &tot) in totals.iter().enumerate() {
                        out[r].push(tot - (tot as f64 * load).round() as u64);
                    }
                }
                Ok(out)
            }
        }
    }
}
