use std::io::Write;

use serde_json::{json, Value};

use crate::money::Money;

/// Outcome counts for one group of jobs (everything, or one class).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub class: String,
    pub jobs: usize,
    pub accepted: usize,
    pub on_time: usize,
    /// Accepted jobs that finished at or after their deadline or never finished.
    pub late: usize,
    pub broken_guarantees: usize,
    pub early_completions: usize,
    pub requested_value: Money,
    /// Value of jobs that finished inside their windows.
    pub welfare: Money,
    /// Payments kept; late and cancelled jobs are refunded.
    pub revenue: Money,
    pub allocated_resource_slots: u64,
}

fn ratio(n: f64, d: f64) -> f64 {
    if d > 0.0 {
        n / d
    } else {
        0.0
    }
}

impl Tally {
    pub fn new(class: &str) -> Self {
        Tally { class: class.to_string(), ..Tally::default() }
    }

    pub fn late_pct(&self) -> f64 {
        ratio(self.late as f64, self.accepted as f64)
    }

    pub fn acceptance_rate(&self) -> f64 {
        ratio(self.accepted as f64, self.jobs as f64)
    }

    /// Welfare as a fraction of the value requested.
    pub fn welfare_share(&self) -> f64 {
        ratio(self.welfare.to_f64(), self.requested_value.to_f64())
    }
}

/// Results of one simulation run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub algorithm: String,
    pub overall: Tally,
    pub per_class: Vec<Tally>,
    pub capacity_resource_slots: u64,
    /// Slots where the cloud was asked to hand out more than it had.
    pub capacity_violations: u64,
    /// Ledger states promising more than capacity, or disagreeing with placements.
    pub promise_violations: u64,
    /// Polls within one slot that returned different allocations.
    pub poll_mismatches: u64,
}

pub const METRICS_HEADER: [&str; 16] = [
    "algorithm",
    "class",
    "jobs",
    "accepted",
    "onTime",
    "late",
    "requestedValue",
    "welfare",
    "revenue",
    "welfareShare",
    "latePct",
    "acceptanceRate",
    "utilization",
    "brokenGuarantees",
    "earlyCompletions",
    "allocatedResourceSlots",
];

pub const COMPARISON_HEADER: [&str; 6] = ["algorithm", "welfare", "revenue", "latePct", "utilization", "acceptanceRate"];

fn frac(x: f64) -> String {
    format!("{x:.6}")
}

impl MetricsReport {
    pub fn welfare(&self) -> Money {
        self.overall.welfare
    }

    pub fn revenue(&self) -> Money {
        self.overall.revenue
    }

    pub fn requested_value(&self) -> Money {
        self.overall.requested_value
    }

    pub fn late_pct(&self) -> f64 {
        self.overall.late_pct()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.overall.acceptance_rate()
    }

    pub fn welfare_share(&self) -> f64 {
        self.overall.welfare_share()
    }

    pub fn broken_guarantees(&self) -> usize {
        self.overall.broken_guarantees
    }

    pub fn utilization(&self) -> f64 {
        self.utilization_of(&self.overall)
    }

    fn utilization_of(&self, t: &Tally) -> f64 {
        ratio(t.allocated_resource_slots as f64, self.capacity_resource_slots as f64)
    }

    fn row(&self, t: &Tally) -> Vec<String> {
        vec![
            self.algorithm.clone(),
            t.class.clone(),
            t.jobs.to_string(),
            t.accepted.to_string(),
            t.on_time.to_string(),
            t.late.to_string(),
            t.requested_value.to_string(),
            t.welfare.to_string(),
            t.revenue.to_string(),
            frac(t.welfare_share()),
            frac(t.late_pct()),
            frac(t.acceptance_rate()),
            frac(self.utilization_of(t)),
            t.broken_guarantees.to_string(),
            t.early_completions.to_string(),
            t.allocated_resource_slots.to_string(),
        ]
    }

    /// One row for all jobs (class `all`) followed by one row per class.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(METRICS_HEADER)?;
        w.write_record(self.row(&self.overall))?;
        for t in &self.per_class {
            w.write_record(self.row(t))?;
        }
        w.flush()?;
        Ok(())
    }

    fn tally_json(&self, t: &Tally) -> Value {
        json!({
            "class": t.class,
            "jobs": t.jobs,
            "accepted": t.accepted,
            "onTime": t.on_time,
            "late": t.late,
            "requestedValue": t.requested_value,
            "welfare": t.welfare,
            "revenue": t.revenue,
            "welfareShare": frac(t.welfare_share()),
            "latePct": frac(t.late_pct()),
            "acceptanceRate": frac(t.acceptance_rate()),
            "utilization": frac(self.utilization_of(t)),
            "brokenGuarantees": t.broken_guarantees,
            "earlyCompletions": t.early_completions,
            "allocatedResourceSlots": t.allocated_resource_slots,
        })
    }

    pub fn to_json(&self) -> Value {
        json!({
            "algorithm": self.algorithm,
            "overall": self.tally_json(&self.overall),
            "perClass": self.per_class.iter().map(|t| self.tally_json(t)).collect::<Vec<_>>(),
            "capacityResourceSlots": self.capacity_resource_slots,
            "capacityViolations": self.capacity_violations,
            "promiseViolations": self.promise_violations,
            "pollMismatches": self.poll_mismatches,
        })
    }

    pub fn comparison_row(&self) -> Vec<String> {
        vec![
            self.algorithm.clone(),
            self.welfare().to_string(),
            self.revenue().to_string(),
            frac(self.late_pct()),
            frac(self.utilization()),
            frac(self.acceptance_rate()),
        ]
    }
}

/// `algorithm,welfare,revenue,latePct,utilization,acceptanceRate`, one row per report.
pub fn write_comparison_csv<W: Write>(reports: &[MetricsReport], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COMPARISON_HEADER)?;
    for r in reports {
        w.write_record(r.comparison_row())?;
    }
    w.flush()?;
    Ok(())
}
