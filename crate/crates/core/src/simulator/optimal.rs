use crate::bdl::WorkloadTrace;
use crate::domain::{charged_bundle, CloudSpec, Slot};
use crate::error::SimulationError;
use crate::money::Money;

pub const MAX_JOBS: usize = 10;
pub const MAX_SLOTS: Slot = 24;

struct Entry {
    bundle: Vec<u64>,
    duration: Slot,
    first: Slot,
    last: Slot,
}

struct Job {
    value: Money,
    entries: Vec<Entry>,
}

struct Search<'a> {
    jobs: &'a [Job],
    /// `suffix[k]`: value of jobs `k..`.
    suffix: Vec<Money>,
    free: Vec<Vec<u64>>,
    best: Money,
}

impl Search<'_> {
    fn fits(&self, e: &Entry, s: Slot) -> bool {
        (s..s + e.duration).all(|t| e.bundle.iter().enumerate().all(|(r, &q)| q <= self.free[r][t as usize]))
    }

    fn take(&mut self, e: &Entry, s: Slot, sign: bool) {
        for t in s..s + e.duration {
            for (r, &q) in e.bundle.iter().enumerate() {
                let f = &mut self.free[r][t as usize];
                if sign {
                    *f -= q;
                } else {
                    *f += q;
                }
            }
        }
    }

    fn job(&mut self, k: usize, value: Money) {
        if value > self.best {
            self.best = value;
        }
        if k == self.jobs.len() || value + self.suffix[k] <= self.best {
            return;
        }
        self.entry(k, 0, value);
        self.job(k + 1, value);
    }

    /// Places entries `e..` of job `k`, then moves on with the job accepted.
    fn entry(&mut self, k: usize, e: usize, value: Money) {
        let jobs = self.jobs;
        let job = &jobs[k];
        if e == job.entries.len() {
            self.job(k + 1, value + job.value);
            return;
        }
        let entry = &job.entries[e];
        for s in entry.first..=entry.last {
            if self.fits(entry, s) {
                self.take(entry, s, true);
                self.entry(k, e + 1, value);
                self.take(entry, s, false);
            }
        }
    }
}

/// Highest total value of any set of jobs that can all be placed inside their windows.
///
/// Exhaustive search, so only small instances are allowed.
pub fn brute_force_optimal(workload: &WorkloadTrace, spec: &CloudSpec) -> Result<Money, SimulationError> {
    let horizon = spec.horizon();
    if workload.len() > MAX_JOBS || horizon > MAX_SLOTS {
        return Err(SimulationError::InstanceTooLarge { jobs: workload.len(), slots: horizon, max_jobs: MAX_JOBS, max_slots: MAX_SLOTS });
    }
    let mut jobs: Vec<Job> = Vec::new();
    for req in workload {
        let mut entries = Vec::new();
        let mut feasible = true;
        for r in &req.requests {
            let d = r.deadline.min(horizon);
            if r.duration == 0 || r.arrival + r.duration > d {
                feasible = false;
                break;
            }
            entries.push(Entry {
                bundle: spec.dense(&charged_bundle(r, spec)),
                duration: r.duration,
                first: r.arrival,
                last: d - r.duration,
            });
        }
        if feasible && !entries.is_empty() {
            jobs.push(Job { value: req.max_price, entries });
        }
    }
    jobs.sort_by_key(|j| std::cmp::Reverse(j.value));
    let mut suffix = vec![Money::ZERO; jobs.len() + 1];
    for k in (0..jobs.len()).rev() {
        suffix[k] = suffix[k + 1] + jobs[k].value;
    }
    let free = (0..spec.resources().len()).map(|r| spec.capacity_series(r).to_vec()).collect();
    let mut search = Search { jobs: &jobs, suffix, free, best: Money::ZERO };
    search.job(0, Money::ZERO);
    Ok(search.best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ReservationRequest, ResourceRequest, TimeGrid};

    fn spec(cap: u64, horizon: Slot) -> CloudSpec {
        CloudSpec::single_resource(TimeGrid::new(60, horizon).unwrap(), "core", vec![cap; horizon as usize]).unwrap()
    }

    fn job(id: &str, w: u64, t: Slot, a: Slot, d: Slot, v: i64) -> ReservationRequest {
        ReservationRequest::single(id, ResourceRequest::new("core", w, t, a, d), Money::from_units(v))
    }

    #[test]
    fn one_feasible_job() {
        let w = WorkloadTrace::new(vec![job("a", 1, 2, 0, 4, 7)]).unwrap();
        assert_eq!(brute_force_optimal(&w, &spec(1, 4)).unwrap(), Money::from_units(7));
    }

    #[test]
    fn mutually_exclusive_pair() {
        let w = WorkloadTrace::new(vec![job("a", 1, 2, 0, 2, 3), job("b", 1, 2, 0, 2, 5)]).unwrap();
        assert_eq!(brute_force_optimal(&w, &spec(1, 4)).unwrap(), Money::from_units(5));
    }

    #[test]
    fn shifting_makes_room() {
        let w = WorkloadTrace::new(vec![job("a", 1, 2, 0, 4, 3), job("b", 1, 2, 0, 2, 5)]).unwrap();
        assert_eq!(brute_force_optimal(&w, &spec(1, 4)).unwrap(), Money::from_units(8));
    }

    #[test]
    fn large_instances_are_refused() {
        let w = WorkloadTrace::new((0..11).map(|i| job(&format!("j{i}"), 1, 1, 0, 2, 1)).collect()).unwrap();
        assert!(matches!(brute_force_optimal(&w, &spec(1, 4)), Err(SimulationError::InstanceTooLarge { .. })));
        assert!(brute_force_optimal(&WorkloadTrace::empty(), &spec(1, 25)).is_err());
    }
}
