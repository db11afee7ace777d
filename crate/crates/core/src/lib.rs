//! Virtual CAN-bus security testbed.

pub mod bus;
pub mod capture;
pub mod catalog;
pub mod cluster;
pub mod control;
pub mod frame;
pub mod hex;
pub mod rogue;
pub mod scenario;
pub mod testbed;
pub mod vehicle;

/// Virtual time in microseconds.
pub type Micros = u64;
