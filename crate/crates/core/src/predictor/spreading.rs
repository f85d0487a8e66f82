use crate::bdl::WorkloadTrace;
use crate::domain::{charged_bundle, CloudSpec, Slot};
use crate::money::Qty;
use crate::predictor::oracle::ContributionTable;
use crate::predictor::{unit_value, HistoricalOracle, PredictorSettings};

/// Spreads each past job uniformly over its window.
///
/// A job of width `W`, duration `T` and window `[A, D)` adds `W*T/(D-A)` at
/// its unit value `V/(W*T)` to every slot of the window.
pub fn build_spreading_predictor(
    history: &WorkloadTrace,
    spec: &CloudSpec,
    target_horizon: Slot,
    settings: PredictorSettings,
) -> HistoricalOracle {
    let history = match settings.history_window {
        Some(w) => history.recent(w),
        None => history.clone(),
    };
    let mut table = ContributionTable::new(spec.resources().len(), settings.period);
    for job in &history {
        let Some(price) = unit_value(job, spec) else { continue };
        for entry in &job.requests {
            let window = entry.deadline.saturating_sub(entry.arrival);
            if window == 0 {
                continue;
            }
            let bundle = spec.dense(&charged_bundle(entry, spec));
            for t in entry.arrival..entry.deadline.min(spec.horizon()) {
                let lead = t.saturating_sub(job.submit_time);
                for (r, &w) in bundle.iter().enumerate() {
                    if w > 0 {
                        table.add(r, t, lead, price, Qty::ratio(w * entry.duration as u64, window as u64));
                    }
                }
            }
        }
    }
    table.finish(target_horizon, spec.horizon().div_ceil(settings.period.max(1)))
}
