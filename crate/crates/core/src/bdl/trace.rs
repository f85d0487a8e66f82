//! Workload traces: ordered reservation requests and their CSV form.
//!
//! One row per resource request. Jobs with several AND-ed requests repeat
//! their `jobId` on consecutive rows with `seq` counting up from zero;
//! `submitTime`, `value` and `class` must agree across a job's rows.
//!
//! ```text
//! submitTime,jobId,seq,configId,count,durationSlots,arrivalSlot,deadlineSlot,value,class
//! ```

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{charged_bundle, validate_request, CloudSpec, JobId, ReservationRequest, ResourceRequest, Slot, Violation};
use crate::error::BdlError;
use crate::money::Money;
use crate::workload::RawJob;

pub const TRACE_HEADER: [&str; 10] =
    ["submitTime", "jobId", "seq", "configId", "count", "durationSlots", "arrivalSlot", "deadlineSlot", "value", "class"];

pub const RAW_TRACE_HEADER: [&str; 6] = ["submitTime", "jobId", "configId", "count", "durationSlots", "class"];

/// Requests in nondecreasing submit order; equal submit times keep input order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WorkloadTrace {
    requests: Vec<ReservationRequest>,
}

impl WorkloadTrace {
    pub fn new(mut requests: Vec<ReservationRequest>) -> Result<Self, BdlError> {
        let mut seen = BTreeSet::new();
        for r in &requests {
            if !seen.insert(r.job_id.clone()) {
                return Err(BdlError::DuplicateJob { line: 0, job: r.job_id.clone() });
            }
        }
        requests.sort_by_key(|r| r.submit_time);
        Ok(WorkloadTrace { requests })
    }

    pub fn empty() -> Self {
        WorkloadTrace::default()
    }

    pub fn requests(&self) -> &[ReservationRequest] {
        &self.requests
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ReservationRequest> {
        self.requests.iter()
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    /// Jobs submitted within the last `window` slots of the trace.
    pub fn recent(&self, window: Slot) -> WorkloadTrace {
        let Some(last) = self.requests.last().map(|r| r.submit_time) else {
            return WorkloadTrace::empty();
        };
        let cutoff = last.saturating_sub(window);
        WorkloadTrace { requests: self.requests.iter().filter(|r| r.submit_time >= cutoff).cloned().collect() }
    }

    pub fn requested_value(&self) -> Money {
        self.requests.iter().map(|r| r.max_price).sum()
    }

    /// Total charged resource-slots over all resources.
    pub fn demanded_resource_slots(&self, spec: &CloudSpec) -> u64 {
        self.requests.iter().flat_map(|j| &j.requests).map(|r| charged_bundle(r, spec).total() * r.duration as u64).sum()
    }
}

impl<'a> IntoIterator for &'a WorkloadTrace {
    type Item = &'a ReservationRequest;
    type IntoIter = std::slice::Iter<'a, ReservationRequest>;
    fn into_iter(self) -> Self::IntoIter {
        self.requests.iter()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParseMode {
    /// Any invalid job rejects the whole trace.
    Strict,
    /// Invalid jobs are dropped and reported.
    Lenient,
}

#[derive(Debug)]
pub struct RejectedRow {
    pub line: u64,
    pub job: JobId,
    pub violations: Vec<Violation>,
}

#[derive(Debug)]
pub struct ParsedTrace {
    pub trace: WorkloadTrace,
    pub rejected: Vec<RejectedRow>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    #[serde(rename = "submitTime")]
    submit_time: Slot,
    #[serde(rename = "jobId")]
    job_id: String,
    #[serde(default)]
    seq: usize,
    #[serde(rename = "configId")]
    config_id: String,
    count: u64,
    #[serde(rename = "durationSlots")]
    duration_slots: Slot,
    #[serde(rename = "arrivalSlot")]
    arrival_slot: Slot,
    #[serde(rename = "deadlineSlot")]
    deadline_slot: Slot,
    value: Money,
    #[serde(default)]
    class: String,
}

fn format_err(line: u64, message: impl Into<String>) -> BdlError {
    BdlError::Format { line, message: message.into() }
}

fn check_header(headers: &csv::StringRecord, required: &[&str]) -> Result<(), BdlError> {
    for name in required {
        if !headers.iter().any(|h| h == *name) {
            return Err(format_err(1, format!("missing column {name:?} in header")));
        }
    }
    Ok(())
}

/// Parses a trace CSV and validates every job against `spec`.
pub fn parse_trace<R: Read>(reader: R, spec: &CloudSpec, mode: ParseMode) -> Result<ParsedTrace, BdlError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let required: Vec<&str> = TRACE_HEADER.iter().copied().filter(|h| *h != "seq" && *h != "class").collect();
    check_header(&headers, &required)?;

    let mut jobs: Vec<(u64, ReservationRequest)> = Vec::new();
    let mut seen = BTreeSet::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let row: TraceRow = record.deserialize(Some(&headers)).map_err(|e| format_err(line, e.to_string()))?;
        let request = ResourceRequest {
            configs: [(row.config_id.clone(), row.count)].into_iter().collect(),
            duration: row.duration_slots,
            arrival: row.arrival_slot,
            deadline: row.deadline_slot,
            after: None,
        };
        let class = (!row.class.is_empty()).then(|| row.class.clone());
        let continues = matches!(jobs.last(), Some((_, last)) if last.job_id.as_str() == row.job_id);
        if continues {
            let (_, job) = jobs.last_mut().expect("checked above");
            if row.seq != job.requests.len() {
                return Err(format_err(line, format!("job {}: expected seq {}, found {}", row.job_id, job.requests.len(), row.seq)));
            }
            if row.submit_time != job.submit_time || row.value != job.max_price || class != job.class {
                return Err(format_err(line, format!("job {}: submitTime, value and class must match across rows", row.job_id)));
            }
            job.requests.push(request);
        } else {
            let job_id = JobId(row.job_id.clone());
            if !seen.insert(job_id.clone()) {
                return Err(BdlError::DuplicateJob { line, job: job_id });
            }
            if row.seq != 0 {
                return Err(format_err(line, format!("job {}: first row must have seq 0", row.job_id)));
            }
            jobs.push((
                line,
                ReservationRequest { job_id, requests: vec![request], max_price: row.value, submit_time: row.submit_time, class },
            ));
        }
    }

    let mut kept = Vec::with_capacity(jobs.len());
    let mut rejected = Vec::new();
    for (line, job) in jobs {
        let violations = validate_request(&job, spec);
        if violations.is_empty() {
            kept.push(job);
        } else if mode == ParseMode::Strict {
            return Err(BdlError::InvalidRow { line, violations });
        } else {
            rejected.push(RejectedRow { line, job: job.job_id, violations });
        }
    }
    Ok(ParsedTrace { trace: WorkloadTrace::new(kept)?, rejected })
}

pub fn read_trace_file(path: &Path, spec: &CloudSpec, mode: ParseMode) -> Result<ParsedTrace, BdlError> {
    let file = File::open(path).map_err(|source| BdlError::Io { path: path.to_path_buf(), source })?;
    parse_trace(file, spec, mode)
}

/// Writes the trace in canonical CSV form (header always present).
pub fn write_trace<W: Write>(trace: &WorkloadTrace, writer: W) -> Result<(), BdlError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(TRACE_HEADER)?;
    for job in trace {
        for (seq, r) in job.requests.iter().enumerate() {
            for (config, count) in &r.configs {
                w.serialize(TraceRow {
                    submit_time: job.submit_time,
                    job_id: job.job_id.0.clone(),
                    seq,
                    config_id: config.clone(),
                    count: *count,
                    duration_slots: r.duration,
                    arrival_slot: r.arrival,
                    deadline_slot: r.deadline,
                    value: job.max_price,
                    class: job.class.clone().unwrap_or_default(),
                })?;
            }
        }
    }
    w.flush().map_err(|e| BdlError::Csv(e.into()))?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct RawRow {
    #[serde(rename = "submitTime")]
    submit_time: Slot,
    #[serde(rename = "jobId")]
    job_id: String,
    #[serde(rename = "configId")]
    config_id: String,
    count: u64,
    #[serde(rename = "durationSlots")]
    duration_slots: Slot,
    #[serde(default)]
    class: String,
}

/// Reads a raw trace (sizes and submit times only) for augmentation.
pub fn parse_raw_trace<R: Read>(reader: R) -> Result<Vec<RawJob>, BdlError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    check_header(&headers, &RAW_TRACE_HEADER[..5])?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let row: RawRow = record.deserialize(Some(&headers)).map_err(|e| format_err(line, e.to_string()))?;
        let job_id = JobId(row.job_id);
        if !seen.insert(job_id.clone()) {
            return Err(BdlError::DuplicateJob { line, job: job_id });
        }
        out.push(RawJob {
            job_id,
            submit_time: row.submit_time,
            config: row.config_id,
            count: row.count,
            duration: row.duration_slots,
            class: (!row.class.is_empty()).then_some(row.class),
        });
    }
    Ok(out)
}
