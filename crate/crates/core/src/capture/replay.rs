use thiserror::Error;

use super::LogRecord;
use crate::bus::{Node, PortRef, SimContext};
use crate::Micros;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error("log has no timestamps; infer periods first")]
    Untimed,
    #[error("replay speed must be positive, got {0}")]
    BadSpeed(f64),
}

/// Resubmits a timed log on one port. A record stamped `t` is sent at
/// `start + (t - t0) / speed`, where `t0` is the first timestamp.
#[derive(Debug, Clone)]
pub struct Replayer {
    port: PortRef,
    /// (send time, frame), in order.
    plan: Vec<(Micros, crate::frame::CanFrame)>,
    next: usize,
    dropped: u64,
}

impl Replayer {
    pub fn new(port: PortRef, records: &[LogRecord], start: Micros, speed: f64) -> Result<Self, ReplayError> {
        if !(speed.is_finite() && speed > 0.0) {
            return Err(ReplayError::BadSpeed(speed));
        }
        let Some(t0) = records.first().map(|r| r.timestamp.ok_or(ReplayError::Untimed)).transpose()? else {
            return Ok(Self { port, plan: Vec::new(), next: 0, dropped: 0 });
        };
        let mut plan = Vec::with_capacity(records.len());
        for r in records {
            let t = r.timestamp.ok_or(ReplayError::Untimed)?;
            let offset = (t.saturating_sub(t0) as f64 / speed).round() as Micros;
            plan.push((start + offset, r.frame));
        }
        Ok(Self { port, plan, next: 0, dropped: 0 })
    }

    pub fn port(&self) -> PortRef {
        self.port
    }

    pub fn remaining(&self) -> usize {
        self.plan.len() - self.next
    }

    pub fn is_done(&self) -> bool {
        self.remaining() == 0
    }

    /// Send time of the last record.
    pub fn end(&self) -> Option<Micros> {
        self.plan.last().map(|(t, _)| *t)
    }

    /// Frames refused by a full transmit queue.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}

impl Node for Replayer {
    fn owns(&self, port: PortRef) -> bool {
        port == self.port
    }

    fn tick(&mut self, ctx: &mut SimContext<'_>) {
        while let Some(&(t, frame)) = self.plan.get(self.next) {
            if t > ctx.now() {
                break;
            }
            if ctx.submit(self.port, frame).is_err() {
                self.dropped += 1;
            }
            self.next += 1;
        }
    }

    fn next_wakeup(&self) -> Option<Micros> {
        self.plan.get(self.next).map(|(t, _)| *t)
    }
}
