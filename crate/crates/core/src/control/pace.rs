//! Mapping wall-clock time onto virtual time for live operation.

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::Micros;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum PaceError {
    #[error("time scale must be positive and finite, got {0}")]
    BadScale(f64),
}

/// Source of wall-clock time.
pub trait WallClock: Send + Sync {
    /// Time since an arbitrary fixed origin.
    fn elapsed(&self) -> Duration;
}

#[derive(Debug, Clone, Copy)]
pub struct SystemClock(Instant);

impl SystemClock {
    pub fn new() -> Self {
        Self(Instant::now())
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl WallClock for SystemClock {
    fn elapsed(&self) -> Duration {
        self.0.elapsed()
    }
}

/// A clock moved by hand, for tests.
#[derive(Debug, Clone, Default)]
pub struct ManualClock(Arc<Mutex<Duration>>);

impl ManualClock {
    pub fn advance(&self, d: Duration) {
        *self.0.lock().unwrap() += d;
    }
}

impl WallClock for ManualClock {
    fn elapsed(&self) -> Duration {
        *self.0.lock().unwrap()
    }
}

/// Virtual time runs at `scale` times wall time from an anchor. Changing
/// the scale or pausing re-anchors, so virtual time never jumps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pacer {
    scale: f64,
    paused: bool,
    wall_anchor: Duration,
    virtual_anchor: Micros,
}

fn check(scale: f64) -> Result<(), PaceError> {
    if scale.is_finite() && scale > 0.0 {
        Ok(())
    } else {
        Err(PaceError::BadScale(scale))
    }
}

impl Pacer {
    pub fn new(scale: f64, wall: Duration, virtual_now: Micros) -> Result<Self, PaceError> {
        check(scale)?;
        Ok(Self {
            scale,
            paused: false,
            wall_anchor: wall,
            virtual_anchor: virtual_now,
        })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    /// Virtual time due at wall time `wall`.
    pub fn target(&self, wall: Duration) -> Micros {
        if self.paused {
            return self.virtual_anchor;
        }
        let dt = wall.saturating_sub(self.wall_anchor).as_secs_f64() * 1e6 * self.scale;
        self.virtual_anchor + dt.round() as Micros
    }

    fn rebase(&mut self, wall: Duration) {
        self.virtual_anchor = self.target(wall);
        self.wall_anchor = wall;
    }

    pub fn set_scale(&mut self, scale: f64, wall: Duration) -> Result<(), PaceError> {
        check(scale)?;
        self.rebase(wall);
        self.scale = scale;
        Ok(())
    }

    pub fn set_paused(&mut self, paused: bool, wall: Duration) {
        self.rebase(wall);
        self.paused = paused;
    }

    /// Re-anchors at `virtual_now` when the simulation fell behind, so a
    /// stall is not followed by a burst.
    pub fn catch_up(&mut self, wall: Duration, virtual_now: Micros) {
        if virtual_now > self.target(wall) {
            self.wall_anchor = wall;
            self.virtual_anchor = virtual_now;
        }
    }
}
