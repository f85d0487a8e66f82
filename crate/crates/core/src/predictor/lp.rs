use std::collections::BTreeMap;

use crate::bdl::WorkloadTrace;
use crate::domain::{charged_bundle, formal_bundle, CloudSpec, Slot};
use crate::error::PredictorError;
use crate::money::Qty;
use crate::predictor::oracle::ContributionTable;
use crate::predictor::simplex::{Constraint, LinearProgram, LpSolution};
use crate::predictor::{unit_value, HistoricalOracle, PredictorSettings};

/// One LP item: a single resource request of a past job.
#[derive(Clone, Debug)]
pub struct LpItem {
    /// Index into the history trace.
    pub job: usize,
    pub entry: usize,
    pub first_start: Slot,
    pub duration: Slot,
    /// Charged bundle in resource order.
    pub bundle: Vec<u64>,
    /// Share of the job's value attributed to this entry.
    pub value: f64,
    var_offset: usize,
    starts: usize,
}

/// Value-maximizing fractional allocation of past requests.
#[derive(Clone, Debug)]
pub struct FractionalAllocation {
    pub items: Vec<LpItem>,
    x: Vec<f64>,
    pub objective: f64,
    pub solution: LpSolution,
}

impl FractionalAllocation {
    /// `x[s]` for starts `first_start + s`.
    pub fn assignment(&self, item: usize) -> &[f64] {
        let it = &self.items[item];
        &self.x[it.var_offset..it.var_offset + it.starts]
    }

    /// Fraction of the item that is scheduled at all.
    pub fn scheduled_fraction(&self, item: usize) -> f64 {
        self.assignment(item).iter().sum()
    }

    /// Fractional occupancy `sum_{s <= t < s+T} x_s` of `item` at slot `t`.
    pub fn occupancy(&self, item: usize, t: Slot) -> f64 {
        let it = &self.items[item];
        self.assignment(item)
            .iter()
            .enumerate()
            .filter(|(s, _)| {
                let s = it.first_start + *s as Slot;
                s <= t && t < s + it.duration
            })
            .map(|(_, v)| v)
            .sum()
    }
}

/// Options for the LP-based predictor.
#[derive(Clone, Debug, Default)]
pub struct LpOptions {
    /// Capacity already committed, `[resource][slot]`, removed before solving.
    /// `None` solves on history alone.
    pub reserved: Option<Vec<Vec<u64>>>,
}

/// Solves the relaxation
/// `max sum_j v_j sum_s x_js` s.t. `sum_s x_js <= 1` per job and
/// `sum_j sum_{s <= t < s+T_j} x_js W_jr <= capacity_r[t]` per slot and resource.
pub fn solve_fractional_allocation(history: &WorkloadTrace, spec: &CloudSpec) -> Result<FractionalAllocation, PredictorError> {
    solve_with(history, spec, &LpOptions::default())
}

fn solve_with(history: &WorkloadTrace, spec: &CloudSpec, options: &LpOptions) -> Result<FractionalAllocation, PredictorError> {
    let horizon = spec.horizon();
    let nres = spec.resources().len();
    let mut items = Vec::new();
    let mut num_vars = 0usize;
    for (j, job) in history.iter().enumerate() {
        let sizes: Vec<u64> = job.requests.iter().map(|r| formal_bundle(r, spec).total() * r.duration as u64).collect();
        let total: u64 = sizes.iter().sum();
        for (e, r) in job.requests.iter().enumerate() {
            if r.deadline > horizon || r.laxity() < 0 || r.duration == 0 {
                continue;
            }
            let starts = (r.deadline - r.duration - r.arrival + 1) as usize;
            let share = if total == 0 { 1.0 / job.requests.len() as f64 } else { sizes[e] as f64 / total as f64 };
            items.push(LpItem {
                job: j,
                entry: e,
                first_start: r.arrival,
                duration: r.duration,
                bundle: spec.dense(&charged_bundle(r, spec)),
                value: job.max_price.to_f64() * share,
                var_offset: num_vars,
                starts,
            });
            num_vars += starts;
        }
    }

    let mut objective = vec![0.0; num_vars];
    let mut constraints = Vec::new();
    for it in &items {
        objective[it.var_offset..it.var_offset + it.starts].fill(it.value);
        constraints.push(Constraint { coeffs: (it.var_offset..it.var_offset + it.starts).map(|v| (v, 1.0)).collect(), bound: 1.0 });
    }
    let mut usage: BTreeMap<(Slot, usize), Vec<(usize, f64)>> = BTreeMap::new();
    for it in &items {
        for s in 0..it.starts {
            let start = it.first_start + s as Slot;
            for t in start..start + it.duration {
                for (r, &w) in it.bundle.iter().enumerate() {
                    if w > 0 {
                        usage.entry((t, r)).or_default().push((it.var_offset + s, w as f64));
                    }
                }
            }
        }
    }
    for ((t, r), coeffs) in usage {
        debug_assert!(r < nres);
        let reserved = options.reserved.as_ref().map_or(0, |res| res[r][t as usize]);
        let bound = spec.capacity(r, t).saturating_sub(reserved) as f64;
        constraints.push(Constraint { coeffs, bound });
    }
    let lp = LinearProgram { objective, constraints };
    let solution = lp.solve()?;
    Ok(FractionalAllocation { items, x: solution.x.clone(), objective: solution.objective, solution })
}

/// Predicts demand at each slot from the fractional optimum over history.
///
/// Every job with fractional occupancy `o > 0` at slot `t` adds `o * W`
/// units at its unit value `V/(W*T)`.
pub fn build_lp_predictor(
    history: &WorkloadTrace,
    spec: &CloudSpec,
    target_horizon: Slot,
    settings: PredictorSettings,
    options: &LpOptions,
) -> Result<HistoricalOracle, PredictorError> {
    let history = match settings.history_window {
        Some(w) => history.recent(w),
        None => history.clone(),
    };
    let alloc = solve_with(&history, spec, options)?;
    let mut table = ContributionTable::new(spec.resources().len(), settings.period);
    let jobs = history.requests();
    for (i, it) in alloc.items.iter().enumerate() {
        let job = &jobs[it.job];
        let Some(price) = unit_value(job, spec) else { continue };
        let x = alloc.assignment(i);
        if x.iter().all(|v| *v <= 1e-12) {
            continue;
        }
        let first = it.first_start;
        let last = first + x.len() as Slot - 1 + it.duration;
        for t in first..last {
            let occ = alloc.occupancy(i, t);
            if occ <= 1e-12 {
                continue;
            }
            let lead = t.saturating_sub(job.submit_time);
            for (r, &w) in it.bundle.iter().enumerate() {
                if w > 0 {
                    table.add(r, t, lead, price, Qty::from_f64(occ * w as f64));
                }
            }
        }
    }
    Ok(table.finish(target_horizon, spec.horizon().div_ceil(settings.period.max(1))))
}
