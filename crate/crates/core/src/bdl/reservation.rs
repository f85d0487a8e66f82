//! JSON reservation documents.
//!
//! ```json
//! {"jobId":"j1","maxPrice":"100","requests":[
//!   {"configs":{"container":100},"duration":"5h","window":["06:00","18:00"]}]}
//! ```
//!
//! Times are integer slots or wall-clock text measured from the grid origin:
//! `HH:MM[:SS]`, ISO-8601 durations (`PT6H`, `P1DT2H`) or unit shorthand
//! (`90s`, `5h`, `1h30m`, `2d`). Window starts round up to a slot boundary,
//! window ends round down and durations round up. `operator` may only be
//! `"AND"`. `after` records an ordering hint between entries; it is kept but
//! not enforced by the schedulers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{validate_request, CloudSpec, JobId, ReservationRequest, ResourceRequest, Slot, TimeGrid, Violation};
use crate::error::BdlError;
use crate::money::Money;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum TimeValue {
    Slots(u64),
    Text(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct RequestDoc {
    configs: BTreeMap<String, u64>,
    duration: TimeValue,
    window: [TimeValue; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    after: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReservationDoc {
    #[serde(rename = "jobId")]
    job_id: String,
    #[serde(rename = "maxPrice")]
    max_price: Money,
    #[serde(rename = "submitTime", default, skip_serializing_if = "Option::is_none")]
    submit_time: Option<TimeValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    operator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class: Option<String>,
    requests: Vec<RequestDoc>,
}

#[derive(Clone, Copy)]
enum Rounding {
    Up,
    Down,
}

/// Seconds from a wall-clock expression.
pub fn parse_seconds(text: &str) -> Option<u64> {
    let t = text.trim();
    if t.is_empty() {
        return None;
    }
    if t.contains(':') {
        let parts: Vec<&str> = t.split(':').collect();
        if parts.len() < 2 || parts.len() > 3 || parts.iter().any(|p| p.is_empty() || !p.chars().all(|c| c.is_ascii_digit())) {
            return None;
        }
        let h: u64 = parts[0].parse().ok()?;
        let m: u64 = parts[1].parse().ok()?;
        let s: u64 = parts.get(2).map_or(Some(0), |p| p.parse().ok())?;
        if m >= 60 || s >= 60 {
            return None;
        }
        return Some(h * 3600 + m * 60 + s);
    }
    if let Some(iso) = t.strip_prefix('P') {
        let (date, time) = match iso.split_once('T') {
            Some((d, tm)) => (d, Some(tm)),
            None => (iso, None),
        };
        let mut total = units_sum(date, &[('D', 86_400), ('W', 604_800)])?;
        if let Some(tm) = time {
            if tm.is_empty() {
                return None;
            }
            total += units_sum(tm, &[('H', 3600), ('M', 60), ('S', 1)])?;
        }
        if date.is_empty() && time.is_none() {
            return None;
        }
        return Some(total);
    }
    let lower = t.to_ascii_lowercase();
    units_sum(&lower, &[('d', 86_400), ('h', 3600), ('m', 60), ('s', 1)]).filter(|_| !lower.chars().all(|c| c.is_ascii_digit()))
}

fn units_sum(text: &str, units: &[(char, u64)]) -> Option<u64> {
    let mut total = 0u64;
    let mut digits = String::new();
    for c in text.chars() {
        if c.is_ascii_digit() {
            digits.push(c);
        } else {
            let (_, scale) = units.iter().find(|(u, _)| *u == c)?;
            if digits.is_empty() {
                return None;
            }
            total = total.checked_add(digits.parse::<u64>().ok()?.checked_mul(*scale)?)?;
            digits.clear();
        }
    }
    digits.is_empty().then_some(total)
}

fn to_slot(v: &TimeValue, grid: &TimeGrid, rounding: Rounding) -> Result<Slot, BdlError> {
    let slots = match v {
        TimeValue::Slots(n) => *n,
        TimeValue::Text(s) => {
            let secs = parse_seconds(s).ok_or_else(|| BdlError::BadTime(s.clone()))?;
            match rounding {
                Rounding::Up => grid.arrival_slot(secs),
                Rounding::Down => grid.deadline_slot(secs),
            }
        }
    };
    Slot::try_from(slots).map_err(|_| BdlError::BadTime(format!("{v:?}")))
}

fn to_duration(v: &TimeValue, grid: &TimeGrid) -> Result<Slot, BdlError> {
    let slots = match v {
        TimeValue::Slots(n) => *n,
        TimeValue::Text(s) => grid.duration_slots(parse_seconds(s).ok_or_else(|| BdlError::BadTime(s.clone()))?),
    };
    Slot::try_from(slots).map_err(|_| BdlError::BadTime(format!("{v:?}")))
}

/// Parses one reservation document and validates it against `spec`.
///
/// Without `submitTime` the request is taken to be submitted at its earliest arrival.
pub fn parse_reservation(text: &str, spec: &CloudSpec) -> Result<ReservationRequest, BdlError> {
    let doc: ReservationDoc =
        serde_json::from_str(text).map_err(|e| BdlError::Syntax { line: e.line(), column: e.column(), message: e.to_string() })?;
    if let Some(op) = &doc.operator {
        if !op.eq_ignore_ascii_case("and") {
            return Err(BdlError::UnsupportedOperator(op.clone()));
        }
    }
    if doc.requests.is_empty() {
        return Err(BdlError::Semantic(vec![Violation::EmptyRequestList]));
    }
    let grid = spec.grid();
    let mut requests = Vec::with_capacity(doc.requests.len());
    for r in &doc.requests {
        requests.push(ResourceRequest {
            configs: r.configs.clone(),
            duration: to_duration(&r.duration, &grid)?,
            arrival: to_slot(&r.window[0], &grid, Rounding::Up)?,
            deadline: to_slot(&r.window[1], &grid, Rounding::Down)?,
            after: r.after,
        });
    }
    let earliest = requests.iter().map(|r| r.arrival).min().unwrap_or(0);
    let submit_time = match &doc.submit_time {
        Some(v) => to_slot(v, &grid, Rounding::Down)?,
        None => earliest,
    };
    let req = ReservationRequest { job_id: JobId(doc.job_id), requests, max_price: doc.max_price, submit_time, class: doc.class };
    let violations = validate_request(&req, spec);
    if violations.is_empty() {
        Ok(req)
    } else {
        Err(BdlError::Semantic(violations))
    }
}

/// Canonical document: integer slots, four-decimal price, explicit submit time.
pub fn serialize_reservation(req: &ReservationRequest) -> String {
    let doc = ReservationDoc {
        job_id: req.job_id.0.clone(),
        max_price: req.max_price,
        submit_time: Some(TimeValue::Slots(req.submit_time as u64)),
        operator: None,
        class: req.class.clone(),
        requests: req
            .requests
            .iter()
            .map(|r| RequestDoc {
                configs: r.configs.clone(),
                duration: TimeValue::Slots(r.duration as u64),
                window: [TimeValue::Slots(r.arrival as u64), TimeValue::Slots(r.deadline as u64)],
                after: r.after,
            })
            .collect(),
    };
    serde_json::to_string(&doc).expect("reservation documents always serialize")
}
