use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::domain::{CloudSpec, JobId, Slot};
use crate::error::SchedulerError;
use crate::money::Money;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlacementState {
    Planned,
    Running,
    Finished,
    Cancelled,
}

/// One contiguous interval of a placement: `bundle` on every slot of `[start, held_until)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub start: Slot,
    pub duration: Slot,
    /// Charged bundle in resource order.
    pub bundle: Vec<u64>,
    /// End of the slots still held; shrinks when the job releases early.
    pub held_until: Slot,
}

impl Segment {
    pub fn new(start: Slot, duration: Slot, bundle: Vec<u64>) -> Self {
        Segment { start, duration, bundle, held_until: start + duration }
    }

    pub fn end(&self) -> Slot {
        self.start + self.duration
    }

    pub fn holds(&self, t: Slot) -> bool {
        self.start <= t && t < self.held_until
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Placement {
    pub job_id: JobId,
    pub segments: Vec<Segment>,
    pub price: Money,
    /// Formal resource-slots bought, the denominator of value density.
    pub unit_slots: u64,
    pub state: PlacementState,
}

impl Placement {
    pub fn start(&self) -> Slot {
        self.segments.iter().map(|s| s.start).min().unwrap_or(0)
    }

    pub fn end(&self) -> Slot {
        self.segments.iter().map(|s| s.end()).max().unwrap_or(0)
    }

    /// Price paid per formal resource-slot.
    pub fn value_density(&self) -> f64 {
        if self.unit_slots == 0 {
            0.0
        } else {
            self.price.to_f64() / self.unit_slots as f64
        }
    }

    pub fn is_active(&self) -> bool {
        matches!(self.state, PlacementState::Planned | PlacementState::Running)
    }
}

/// Where the ledger disagrees with its own invariants.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AuditViolation {
    OverCapacity { resource: usize, slot: Slot, promised: u64, capacity: u64 },
    PromisedMismatch { resource: usize, slot: Slot, promised: u64, placed: u64 },
}

impl fmt::Display for AuditViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuditViolation::OverCapacity { resource, slot, promised, capacity } => {
                write!(f, "resource {resource} slot {slot}: promised {promised} > capacity {capacity}")
            }
            AuditViolation::PromisedMismatch { resource, slot, promised, placed } => {
                write!(f, "resource {resource} slot {slot}: promised {promised} but placements hold {placed}")
            }
        }
    }
}

/// Committed quantities per slot and the placements behind them.
#[derive(Clone, Debug)]
pub struct PlanLedger {
    spec: Arc<CloudSpec>,
    capacity: Vec<Vec<u64>>,
    promised: Vec<Vec<u64>>,
    placements: BTreeMap<JobId, Placement>,
}

impl PlanLedger {
    pub fn new(spec: Arc<CloudSpec>) -> Self {
        let capacity: Vec<Vec<u64>> = (0..spec.resources().len()).map(|r| spec.capacity_series(r).to_vec()).collect();
        let promised = capacity.iter().map(|c| vec![0; c.len()]).collect();
        PlanLedger { spec, capacity, promised, placements: BTreeMap::new() }
    }

    pub fn spec(&self) -> &Arc<CloudSpec> {
        &self.spec
    }

    pub fn horizon(&self) -> Slot {
        self.spec.horizon()
    }

    pub fn resources(&self) -> usize {
        self.capacity.len()
    }

    pub fn capacity(&self, resource: usize, t: Slot) -> u64 {
        self.capacity[resource][t as usize]
    }

    pub fn promised(&self, resource: usize, t: Slot) -> u64 {
        self.promised[resource][t as usize]
    }

    pub fn promised_series(&self) -> &[Vec<u64>] {
        &self.promised
    }

    pub fn free(&self, resource: usize, t: Slot) -> u64 {
        self.capacity(resource, t).saturating_sub(self.promised(resource, t))
    }

    /// Whether `bundle` fits on top of current promises at slot `t`.
    pub fn fits_at(&self, bundle: &[u64], t: Slot) -> bool {
        bundle.iter().enumerate().all(|(r, &q)| q == 0 || self.promised(r, t) + q <= self.capacity(r, t))
    }

    pub fn fits(&self, bundle: &[u64], start: Slot, duration: Slot) -> bool {
        start + duration <= self.horizon() && (start..start + duration).all(|t| self.fits_at(bundle, t))
    }

    pub fn placement(&self, job: &JobId) -> Option<&Placement> {
        self.placements.get(job)
    }

    pub fn placements(&self) -> impl Iterator<Item = &Placement> {
        self.placements.values()
    }

    fn add_segment(&mut self, seg: &Segment) {
        for t in seg.start..seg.held_until {
            for (r, &q) in seg.bundle.iter().enumerate() {
                self.promised[r][t as usize] += q;
            }
        }
    }

    /// Adds `seg` to the promises without recording a placement.
    pub(crate) fn hold(&mut self, seg: &Segment) {
        self.add_segment(seg);
    }

    /// Undoes a [`hold`](Self::hold).
    pub(crate) fn unhold(&mut self, seg: &Segment) {
        for t in seg.start..seg.held_until {
            for (r, &q) in seg.bundle.iter().enumerate() {
                self.promised[r][t as usize] -= q;
            }
        }
    }

    pub fn commit(&mut self, job_id: JobId, segments: Vec<Segment>, price: Money, unit_slots: u64) -> Result<(), SchedulerError> {
        if self.placements.contains_key(&job_id) {
            return Err(SchedulerError::DuplicateJob(job_id));
        }
        for seg in &segments {
            debug_assert!(self.fits(&seg.bundle, seg.start, seg.duration), "commit must follow a fit check");
            self.add_segment(seg);
        }
        self.placements.insert(job_id.clone(), Placement { job_id, segments, price, unit_slots, state: PlacementState::Planned });
        Ok(())
    }

    /// Releases every slot after `now` and moves the placement to `state`.
    fn release_after(&mut self, job: &JobId, now: Slot, state: PlacementState) -> Result<(), SchedulerError> {
        let p = self.placements.get_mut(job).ok_or_else(|| SchedulerError::UnknownJob(job.clone()))?;
        p.state = state;
        let mut freed = Vec::new();
        for seg in &mut p.segments {
            let keep_until = seg.held_until.min((now + 1).max(seg.start));
            if keep_until < seg.held_until {
                freed.push((seg.bundle.clone(), keep_until, seg.held_until));
                seg.held_until = keep_until;
            }
        }
        for (bundle, from, to) in freed {
            for t in from..to {
                for (r, &q) in bundle.iter().enumerate() {
                    self.promised[r][t as usize] -= q;
                }
            }
        }
        Ok(())
    }

    pub fn finish(&mut self, job: &JobId, now: Slot) -> Result<(), SchedulerError> {
        self.release_after(job, now, PlacementState::Finished)
    }

    pub fn cancel(&mut self, job: &JobId, now: Slot) -> Result<(), SchedulerError> {
        self.release_after(job, now, PlacementState::Cancelled)
    }

    /// Moves planned placements that have started by `now` to running.
    pub fn mark_running(&mut self, now: Slot) {
        for p in self.placements.values_mut() {
            if p.state == PlacementState::Planned && p.start() <= now {
                p.state = PlacementState::Running;
            }
        }
    }

    pub fn change_capacity(&mut self, resource: usize, t: Slot, delta: i64) {
        let c = &mut self.capacity[resource][t as usize];
        *c = (*c as i64 + delta).max(0) as u64;
    }

    /// Slots after `now` where some resource is promised beyond capacity.
    pub fn overcommitted_after(&self, now: Slot) -> Vec<(usize, Slot)> {
        let mut out = Vec::new();
        for r in 0..self.resources() {
            for t in now + 1..self.horizon() {
                if self.promised(r, t) > self.capacity(r, t) {
                    out.push((r, t));
                }
            }
        }
        out
    }

    /// Recomputes promises from placements and checks them against capacity.
    pub fn audit(&self) -> Vec<AuditViolation> {
        let mut placed: Vec<Vec<u64>> = self.promised.iter().map(|s| vec![0; s.len()]).collect();
        for p in self.placements.values() {
            for seg in &p.segments {
                for t in seg.start..seg.held_until {
                    for (r, &q) in seg.bundle.iter().enumerate() {
                        placed[r][t as usize] += q;
                    }
                }
            }
        }
        let mut out = Vec::new();
        for (r, placed_r) in placed.iter().enumerate() {
            for t in 0..self.horizon() {
                let (promised, capacity, held) = (self.promised(r, t), self.capacity(r, t), placed_r[t as usize]);
                if promised != held {
                    out.push(AuditViolation::PromisedMismatch { resource: r, slot: t, promised, placed: held });
                }
                if promised > capacity {
                    out.push(AuditViolation::OverCapacity { resource: r, slot: t, promised, capacity });
                }
            }
        }
        out
    }
}
