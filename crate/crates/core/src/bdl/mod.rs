//! Text formats: reservation documents, workload traces and scenario files.

mod reservation;
pub mod scenario;
mod trace;

pub use reservation::{parse_reservation, parse_seconds, serialize_reservation};
pub use trace::{
    parse_raw_trace, parse_trace, read_trace_file, write_trace, ParseMode, ParsedTrace, RejectedRow, WorkloadTrace, RAW_TRACE_HEADER,
    TRACE_HEADER,
};
