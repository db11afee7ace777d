//! Traffic capture, candump-style logs, replay and period inference.

mod infer;
mod log;
mod replay;

use std::ops::Range;

pub use infer::{infer_periods, InferError, PeriodEstimate, SNAP_PERIODS_MS, SNAP_TOLERANCE};
pub use log::{read_log, strip_timestamps, write_log, LogError, LogRecord};
pub use replay::{ReplayError, Replayer};

use crate::bus::{BusEventKind, BusId, NetEvent};
use crate::Micros;

/// One record per frame delivered on `bus` with a delivery time inside
/// `window`, stamped with that time.
pub fn record(events: &[NetEvent], bus: BusId, channel: &str, window: Range<Micros>) -> Vec<LogRecord> {
    events
        .iter()
        .filter(|e| e.bus == bus && window.contains(&e.event.time))
        .filter_map(|e| match &e.event.kind {
            BusEventKind::FrameDelivered { frame, .. } => Some(LogRecord::new(Some(e.event.time), channel, *frame)),
            _ => None,
        })
        .collect()
}
