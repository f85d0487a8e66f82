//! Synthetic class-based workloads and value/deadline augmentation of raw traces.
//!
//! Sampling uses ChaCha8 seeded with `seed_from_u64(seed)`. Class `i` of a
//! generated workload draws from stream `i` of that generator, so adding a
//! class never perturbs the others.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use crate::bdl::WorkloadTrace;
use crate::domain::{formal_bundle, validate_request, CloudSpec, JobId, ReservationRequest, ResourceRequest, Slot, Violation};
use crate::error::WorkloadError;
use crate::money::Money;

/// A scalar distribution as written in scenario files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Dist {
    Fixed {
        value: f64,
    },
    /// Uniform on `[low, high]`; integer quantities draw uniformly from the integers in it.
    Uniform {
        low: f64,
        high: f64,
    },
    Exponential {
        mean: f64,
    },
    Choice {
        values: Vec<f64>,
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
}

impl Dist {
    pub fn fixed(value: f64) -> Self {
        Dist::Fixed { value }
    }

    pub fn uniform(low: f64, high: f64) -> Self {
        Dist::Uniform { low, high }
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: &str| Err(WorkloadError::InvalidDistribution(m.to_string()));
        match self {
            Dist::Fixed { value } if !value.is_finite() || *value < 0.0 => bad("fixed value must be finite and >= 0"),
            Dist::Uniform { low, high } if !(low.is_finite() && high.is_finite()) || *low < 0.0 || low > high => {
                bad("uniform needs 0 <= low <= high")
            }
            Dist::Exponential { mean } if !mean.is_finite() || *mean <= 0.0 => bad("exponential mean must be > 0"),
            Dist::Choice { values, .. } if values.is_empty() || values.iter().any(|v| !v.is_finite() || *v < 0.0) => {
                bad("choice needs at least one finite value >= 0")
            }
            Dist::Choice { values, weights: Some(w) }
                if w.len() != values.len() || w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 =>
            {
                bad("choice weights must match values and have a positive sum")
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Dist::Fixed { value } => *value,
            Dist::Uniform { low, high } => (low + high) / 2.0,
            Dist::Exponential { mean } => *mean,
            Dist::Choice { values, weights: None } => values.iter().sum::<f64>() / values.len() as f64,
            Dist::Choice { values, weights: Some(w) } => values.iter().zip(w).map(|(v, w)| v * w).sum::<f64>() / w.iter().sum::<f64>(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Dist::Fixed { value } => *value,
            Dist::Uniform { low, high } => {
                if low == high {
                    *low
                } else {
                    rng.random_range(*low..=*high)
                }
            }
            Dist::Exponential { mean } => Exp::new(1.0 / mean).expect("validated").sample(rng),
            Dist::Choice { values, weights } => match weights {
                None => values[rng.random_range(0..values.len())],
                Some(w) => values[WeightedIndex::new(w).expect("validated").sample(rng)],
            },
        }
    }

    /// Nonnegative integer sample.
    pub fn sample_int<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            Dist::Uniform { low, high } => {
                let (lo, hi) = (low.ceil() as u64, high.floor() as u64);
                if lo >= hi {
                    lo
                } else {
                    rng.random_range(lo..=hi)
                }
            }
            other => other.sample(rng).round().max(0.0) as u64,
        }
    }
}

/// One job class of a synthetic workload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobClassSpec {
    pub name: String,
    /// Poisson arrivals per slot.
    pub rate: f64,
    /// Stop after this many jobs.
    #[serde(default)]
    pub count: Option<usize>,
    /// Configuration each job requests `width` copies of.
    pub config: String,
    pub width: Dist,
    /// Duration in slots.
    pub duration: Dist,
    /// Window length minus duration, in slots.
    pub laxity: Dist,
    /// Laxity samples are multiples of the job's duration instead of slots.
    #[serde(default)]
    pub laxity_relative: bool,
    /// Value per formal resource-slot.
    pub unit_value: Dist,
    /// Slots between submission and the start of the window.
    #[serde(default)]
    pub lead: Option<Dist>,
}

impl JobClassSpec {
    pub fn validate(&self, spec: &CloudSpec) -> Result<(), WorkloadError> {
        let err = |message: String| WorkloadError::InvalidClass { class: self.name.clone(), message };
        if !self.rate.is_finite() || self.rate < 0.0 {
            return Err(err("rate must be finite and >= 0".into()));
        }
        if spec.configuration(&self.config).is_none() {
            return Err(err(format!("unknown configuration {:?}", self.config)));
        }
        for d in [&self.width, &self.duration, &self.laxity, &self.unit_value].into_iter().chain(self.lead.as_ref()) {
            d.validate().map_err(|e| err(e.to_string()))?;
        }
        Ok(())
    }
}

/// A generated trace plus notes about classes that produced nothing usable.
#[derive(Clone, Debug)]
pub struct GeneratedWorkload {
    pub trace: WorkloadTrace,
    /// Per class: jobs kept, jobs dropped because their window did not fit the horizon.
    pub per_class: Vec<(String, usize, usize)>,
    pub warnings: Vec<String>,
}

fn class_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Value of `count` copies of `config` for `duration` slots at `unit` per formal resource-slot.
fn job_value(spec: &CloudSpec, config: &str, count: u64, duration: Slot, unit: Money) -> Money {
    let formal = formal_bundle(&ResourceRequest::new(config, count, duration, 0, duration), spec).total();
    unit * (formal * duration as u64)
}

/// Draws a deterministic workload: Poisson arrivals per slot for every class.
pub fn generate_workload(classes: &[JobClassSpec], spec: &CloudSpec, seed: u64) -> Result<GeneratedWorkload, WorkloadError> {
    let horizon = spec.horizon();
    let mut jobs = Vec::new();
    let mut per_class = Vec::new();
    let mut warnings = Vec::new();
    for (ci, class) in classes.iter().enumerate() {
        class.validate(spec)?;
        let mut rng = class_rng(seed, ci as u64);
        let poisson = (class.rate > 0.0).then(|| Poisson::new(class.rate).expect("rate checked"));
        let cap = class.count.unwrap_or(usize::MAX);
        let (mut kept, mut dropped, mut index) = (0usize, 0usize, 0usize);
        for t in 0..horizon {
            let Some(p) = &poisson else { break };
            if index >= cap {
                break;
            }
            let n = p.sample(&mut rng) as usize;
            for _ in 0..n {
                if index >= cap {
                    break;
                }
                let width = class.width.sample_int(&mut rng).max(1);
                let duration = class.duration.sample_int(&mut rng).max(1) as Slot;
                let laxity = if class.laxity_relative {
                    (class.laxity.sample(&mut rng) * duration as f64).round().max(0.0) as Slot
                } else {
                    class.laxity.sample_int(&mut rng) as Slot
                };
                let unit = Money::from_f64(class.unit_value.sample(&mut rng).max(0.0));
                let lead = class.lead.as_ref().map_or(0, |d| d.sample_int(&mut rng) as Slot);
                let job_id = JobId(format!("{}-{:05}", class.name, index));
                index += 1;

                let arrival = t.saturating_add(lead);
                let deadline = arrival.saturating_add(duration).saturating_add(laxity).min(horizon);
                if arrival >= horizon || deadline < arrival + duration {
                    dropped += 1;
                    continue;
                }
                let request = ResourceRequest::new(&class.config, width, duration, arrival, deadline);
                let value = job_value(spec, &class.config, width, duration, unit);
                jobs.push(ReservationRequest {
                    job_id,
                    requests: vec![request],
                    max_price: value,
                    submit_time: t,
                    class: Some(class.name.clone()),
                });
                kept += 1;
            }
        }
        if kept == 0 {
            warnings.push(format!("class {} produced no feasible jobs", class.name));
        }
        per_class.push((class.name.clone(), kept, dropped));
    }
    jobs.sort_by(|a, b| a.submit_time.cmp(&b.submit_time).then_with(|| a.job_id.cmp(&b.job_id)));
    let trace = WorkloadTrace::new(jobs).map_err(|e| WorkloadError::InvalidClass { class: String::new(), message: e.to_string() })?;
    Ok(GeneratedWorkload { trace, per_class, warnings })
}

/// A past job as recorded without values or deadlines.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawJob {
    pub job_id: JobId,
    pub submit_time: Slot,
    pub config: String,
    pub count: u64,
    pub duration: Slot,
    pub class: Option<String>,
}

/// How a raw job gets its value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ValueRule {
    /// The same value per formal resource-slot for every job.
    Constant { unit: Money },
    /// Unit value looked up by class, `default` for unlisted classes.
    ByClass { units: BTreeMap<String, Money>, default: Money },
}

impl ValueRule {
    pub fn unit_for(&self, class: Option<&str>) -> Money {
        match self {
            ValueRule::Constant { unit } => *unit,
            ValueRule::ByClass { units, default } => class.and_then(|c| units.get(c)).copied().unwrap_or(*default),
        }
    }
}

/// How a raw job gets its deadline: `D = A + T + laxity`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LaxityRule {
    /// Laxity in slots drawn from a distribution.
    Slots { dist: Dist },
    /// Laxity as a multiple of the duration drawn from a distribution.
    Relative { dist: Dist },
}

impl LaxityRule {
    /// Rigid jobs: the window is exactly the duration.
    pub fn rigid() -> Self {
        LaxityRule::Slots { dist: Dist::fixed(0.0) }
    }

    fn sample<R: Rng + ?Sized>(&self, duration: Slot, rng: &mut R) -> Slot {
        match self {
            LaxityRule::Slots { dist } => dist.sample_int(rng) as Slot,
            LaxityRule::Relative { dist } => (dist.sample(rng) * duration as f64).round().max(0.0) as Slot,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AugmentedTrace {
    pub trace: WorkloadTrace,
    /// Rows whose augmented request is invalid, with the reasons.
    pub flagged: Vec<(JobId, Vec<Violation>)>,
}

/// Adds windows and values to raw jobs. Arrival is the submit time.
pub fn augment_trace(
    raw: &[RawJob],
    spec: &CloudSpec,
    value_rule: &ValueRule,
    laxity_rule: &LaxityRule,
    seed: u64,
) -> Result<AugmentedTrace, WorkloadError> {
    let (LaxityRule::Slots { dist } | LaxityRule::Relative { dist }) = laxity_rule;
    dist.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jobs = Vec::with_capacity(raw.len());
    let mut flagged = Vec::new();
    for row in raw {
        let laxity = laxity_rule.sample(row.duration, &mut rng);
        let arrival = row.submit_time;
        let deadline = arrival.saturating_add(row.duration).saturating_add(laxity);
        let unit = value_rule.unit_for(row.class.as_deref());
        let job = ReservationRequest {
            job_id: row.job_id.clone(),
            requests: vec![ResourceRequest::new(&row.config, row.count, row.duration, arrival, deadline)],
            max_price: job_value(spec, &row.config, row.count, row.duration, unit),
            submit_time: row.submit_time,
            class: row.class.clone(),
        };
        let violations = validate_request(&job, spec);
        if violations.is_empty() {
            jobs.push(job);
        } else {
            flagged.push((row.job_id.clone(), violations));
        }
    }
    let trace = WorkloadTrace::new(jobs).map_err(|e| WorkloadError::InvalidClass { class: String::new(), message: e.to_string() })?;
    Ok(AugmentedTrace { trace, flagged })
}
