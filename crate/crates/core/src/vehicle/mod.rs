//! The vehicle simulator: emits the catalog schedule from a ground-truth
//! [`VehicleState`], either following a [`DemoScript`] or set by hand.

mod demo;
mod state;

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDateTime, TimeDelta, Timelike};
use thiserror::Error;

pub use demo::{DemoScript, Keyframe};
pub use state::{field_names, Ignition, VehicleState};

use crate::bus::{Node, PortRef, SimContext};
use crate::catalog::{catalog, AliveCounter, CatalogError, PhysicalValue, SignalSource};
use crate::frame::CanFrame;
use crate::Micros;

/// Spacing between the first emissions of consecutive periodic ids.
pub const PHASE_STEP_US: Micros = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VehicleError {
    #[error("unknown vehicle field `{0}`")]
    UnknownField(String),
    #[error("{field} = {value} outside [{min}, {max}]")]
    OutOfRange { field: String, value: f64, min: f64, max: f64 },
    #[error("{value} is not a valid value for {field}")]
    WrongType { field: String, value: String },
    #[error("{field} cannot be set while ignition is {ignition}")]
    NotSettable { field: String, ignition: Ignition },
    #[error("vehicle is running a demo script; manual changes are refused")]
    NotInManualMode,
    #[error("keyframe {index} is earlier than the one before it")]
    NonMonotonicKeyframes { index: usize },
    #[error("clock epoch {0} outside 2000-2099")]
    BadEpoch(NaiveDateTime),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    Manual,
    Demo { base: VehicleState, script: DemoScript },
}

/// Transmission bookkeeping for one periodic id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleEntry {
    pub id: u32,
    pub period: Micros,
    pub next_due: Micros,
    pub counter: Option<AliveCounter>,
}

/// Default clock epoch: 2010-06-01 08:00:00.
pub fn default_epoch() -> NaiveDateTime {
    chrono::NaiveDate::from_ymd_opt(2010, 6, 1)
        .and_then(|d| d.and_hms_opt(8, 0, 0))
        .expect("valid date")
}

pub struct VehicleEcu {
    port: PortRef,
    state: VehicleState,
    mode: Mode,
    epoch: NaiveDateTime,
    schedule: Vec<ScheduleEntry>,
    one_shots: Vec<(u32, bool)>,
    was_on: bool,
    abs_rolling: u8,
    last_tick: Option<Micros>,
    sent: BTreeMap<u32, u64>,
    tx_errors: u64,
}

impl VehicleEcu {
    /// A vehicle whose schedule starts at `start`.
    pub fn new(port: PortRef, initial: VehicleState, start: Micros) -> Result<Self, VehicleError> {
        initial.validate()?;
        let mut schedule = Vec::new();
        let mut one_shots = Vec::new();
        for spec in catalog().messages() {
            match spec.period.micros() {
                Some(period) => {
                    let phase = schedule.len() as Micros * PHASE_STEP_US;
                    schedule.push(ScheduleEntry {
                        id: spec.id,
                        period,
                        next_due: start + phase,
                        counter: spec.counter_protected.then(AliveCounter::default),
                    });
                }
                None => one_shots.push((spec.id, false)),
            }
        }
        Ok(Self {
            port,
            state: initial,
            mode: Mode::Manual,
            epoch: default_epoch(),
            schedule,
            one_shots,
            was_on: false,
            abs_rolling: 0,
            last_tick: None,
            sent: BTreeMap::new(),
            tx_errors: 0,
        })
    }

    pub fn with_epoch(mut self, epoch: NaiveDateTime) -> Result<Self, VehicleError> {
        if !(2000..=2099).contains(&epoch.year()) {
            return Err(VehicleError::BadEpoch(epoch));
        }
        self.epoch = epoch;
        Ok(self)
    }

    /// Follows `script` from here on, using the current state as the base.
    pub fn run_demo(&mut self, script: DemoScript) {
        self.mode = Mode::Demo {
            base: self.state.clone(),
            script,
        };
        if let Some(t) = self.last_tick {
            self.refresh(t);
        }
    }

    /// Leaves demo mode, freezing the state where the script had it.
    pub fn set_manual(&mut self) {
        self.mode = Mode::Manual;
    }

    pub fn mode(&self) -> &Mode {
        &self.mode
    }

    pub fn is_manual(&self) -> bool {
        self.mode == Mode::Manual
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn port(&self) -> PortRef {
        self.port
    }

    pub fn set_state(&mut self, field: &str, value: &PhysicalValue) -> Result<(), VehicleError> {
        if !self.is_manual() {
            return Err(VehicleError::NotInManualMode);
        }
        self.state.set(field, value)
    }

    pub fn schedule(&self) -> &[ScheduleEntry] {
        &self.schedule
    }

    /// Frames handed to the bus per id.
    pub fn sent(&self) -> &BTreeMap<u32, u64> {
        &self.sent
    }

    /// Submissions refused by a full transmit queue.
    pub fn tx_errors(&self) -> u64 {
        self.tx_errors
    }

    /// Vehicle clock at virtual time `t`.
    pub fn clock_at(&self, t: Micros) -> NaiveDateTime {
        self.epoch + TimeDelta::microseconds(t as i64)
    }

    fn refresh(&mut self, now: Micros) {
        if let Mode::Demo { base, script } = &self.mode {
            self.state = script.state_at(base, now);
        }
    }

    fn emit(&mut self, ctx: &mut SimContext<'_>, id: u32, counter: Option<AliveCounter>) {
        let view = Emission {
            state: &self.state,
            abs_rolling: self.abs_rolling,
            clock: self.clock_at(ctx.now()),
        };
        let payload = match catalog().encode(id, &view, counter) {
            Ok(p) => p,
            Err(e) => {
                log::error!("vehicle cannot encode 0x{id:03X}: {e}");
                return;
            }
        };
        let frame = CanFrame::new(id, &payload).expect("catalog ids and lengths are valid");
        if id == 0x19E {
            self.abs_rolling = self.abs_rolling.wrapping_add(1);
        }
        match ctx.submit(self.port, frame) {
            Ok(()) => *self.sent.entry(id).or_default() += 1,
            Err(e) => {
                self.tx_errors += 1;
                log::warn!("vehicle dropped 0x{id:03X}: {e}");
            }
        }
    }
}

impl Node for VehicleEcu {
    fn owns(&self, port: PortRef) -> bool {
        port == self.port
    }

    fn tick(&mut self, ctx: &mut SimContext<'_>) {
        let now = ctx.now();
        self.last_tick = Some(now);
        self.refresh(now);
        let on = self.state.ignition.is_on();
        if on && !self.was_on {
            for shot in &mut self.one_shots {
                shot.1 = true;
            }
        }
        self.was_on = on;
        for i in 0..self.one_shots.len() {
            if self.one_shots[i].1 {
                self.one_shots[i].1 = false;
                self.emit(ctx, self.one_shots[i].0, None);
            }
        }
        for i in 0..self.schedule.len() {
            while self.schedule[i].next_due <= now {
                let ScheduleEntry { id, counter, period, .. } = self.schedule[i];
                self.emit(ctx, id, counter);
                let entry = &mut self.schedule[i];
                entry.next_due += period;
                entry.counter = counter.map(AliveCounter::next);
            }
        }
    }

    fn next_wakeup(&self) -> Option<Micros> {
        let due = self.schedule.iter().map(|e| e.next_due).min();
        let script = match (&self.mode, self.last_tick) {
            (Mode::Demo { script, .. }, Some(t)) => script.next_change_after(t),
            _ => None,
        };
        due.into_iter().chain(script).min()
    }
}

/// Signal values for one emission: the state plus derived values.
struct Emission<'a> {
    state: &'a VehicleState,
    abs_rolling: u8,
    clock: NaiveDateTime,
}

impl SignalSource for Emission<'_> {
    fn signal(&self, name: &str) -> Option<PhysicalValue> {
        let n = |v: u32| Some(PhysicalValue::Number(f64::from(v)));
        match name {
            "ignition_mirror" => self.state.get("ignition"),
            "abs_rolling" => n(u32::from(self.abs_rolling)),
            "handbrake_mirror" => self.state.get("handbrake"),
            "fuel_sensor_1" | "fuel_sensor_2" => self.state.get("fuel"),
            "unbelted" => Some(PhysicalValue::Flag(!self.state.seatbelt)),
            "hour" => n(self.clock.hour()),
            "minute" => n(self.clock.minute()),
            "second" => n(self.clock.second()),
            "day" => n(self.clock.day()),
            "month" => n(self.clock.month()),
            "year" => n(self.clock.year() as u32),
            _ => self.state.get(name),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::{BusEventKind, Network, VirtualBus};
    use crate::catalog::decode;

    fn running() -> VehicleState {
        VehicleState {
            ignition: Ignition::Running,
            rpm: 2000.0,
            speed: 60.0,
            ..VehicleState::default()
        }
    }

    /// Runs a vehicle with a silent listener and returns delivered frames.
    fn run(ecu: &mut VehicleEcu, net: &mut Network, until: Micros) -> Vec<(Micros, CanFrame)> {
        net.run_until(until, &mut [ecu])
            .unwrap()
            .into_iter()
            .filter_map(|e| match e.event.kind {
                BusEventKind::FrameDelivered { frame, started, .. } => Some((started, frame)),
                _ => None,
            })
            .collect()
    }

    fn setup(state: VehicleState) -> (Network, VehicleEcu) {
        let mut net = Network::new();
        let bus = net.add_bus(VirtualBus::default());
        let port = net.attach(bus);
        net.attach(bus);
        let ecu = VehicleEcu::new(port, state, 0).unwrap();
        (net, ecu)
    }

    fn count(frames: &[(Micros, CanFrame)], id: u32) -> usize {
        frames.iter().filter(|(_, f)| f.id() == id).count()
    }

    #[test]
    fn one_second_of_traffic() {
        let (mut net, mut ecu) = setup(running());
        let frames = run(&mut ecu, &mut net, 999_999);
        assert_eq!(count(&frames, 0x0AA), 100);
        assert_eq!(count(&frames, 0x130), 10);
        assert_eq!(count(&frames, 0x0C0), 5);
        assert_eq!(count(&frames, 0x335), 1);
        assert_eq!(count(&frames, 0x380), 1);
    }

    #[test]
    fn vin_once_per_ignition_cycle() {
        let (mut net, mut ecu) = setup(running());
        let frames = run(&mut ecu, &mut net, 10_000_000);
        assert_eq!(count(&frames, 0x380), 1);
        assert_eq!(count(&frames, 0x39E), 1);
        ecu.set_state("ignition", &"off".into()).unwrap();
        net.touch();
        run(&mut ecu, &mut net, 11_000_000);
        ecu.set_state("ignition", &"ignition_on".into()).unwrap();
        net.touch();
        let frames = run(&mut ecu, &mut net, 12_000_000);
        assert_eq!(count(&frames, 0x380), 1);
    }

    #[test]
    fn no_one_shots_while_off() {
        let (mut net, mut ecu) = setup(VehicleState::default());
        let frames = run(&mut ecu, &mut net, 2_000_000);
        assert_eq!(count(&frames, 0x380), 0);
        assert_eq!(count(&frames, 0x130), 20);
    }

    #[test]
    fn counters_step_by_one() {
        let (mut net, mut ecu) = setup(running());
        let frames = run(&mut ecu, &mut net, 5_000_000);
        for id in [0x0C0, 0x0D7] {
            let counters: Vec<u8> = frames
                .iter()
                .filter(|(_, f)| f.id() == id)
                .map(|(_, f)| f.data()[0] & 0x0F)
                .collect();
            assert_eq!(counters.len(), 25);
            for w in counters.windows(2) {
                assert_eq!(w[1], (w[0] + 1) % 15);
            }
        }
    }

    #[test]
    fn emissions_follow_the_phase_plan_without_jitter() {
        let (mut net, mut ecu) = setup(running());
        let mut starts = BTreeMap::<u32, Vec<Micros>>::new();
        for e in net.run_until(3_000_000, &mut [&mut ecu]).unwrap() {
            if let BusEventKind::ArbitrationResolved { frame, .. } = e.event.kind {
                starts.entry(frame.id()).or_default().push(e.event.time);
            }
        }
        for (i, entry) in ecu.schedule().iter().enumerate() {
            let first = i as Micros * PHASE_STEP_US;
            let sent = ecu.sent()[&entry.id];
            assert_eq!(entry.next_due, first + sent * entry.period);
            // each transmission starts shortly after its due time; the
            // cold-start burst of all ids is the worst case
            for (k, &t) in starts[&entry.id].iter().enumerate() {
                let due = first + k as Micros * entry.period;
                assert!(t >= due && t - due < 30_000, "0x{:03X} #{k} due {due} started {t}", entry.id);
            }
        }
    }

    #[test]
    fn handbrake_reaches_the_wire() {
        let (mut net, mut ecu) = setup(running());
        run(&mut ecu, &mut net, 100_000);
        ecu.set_state("handbrake", &true.into()).unwrap();
        net.touch();
        let frames = run(&mut ecu, &mut net, 1_200_000);
        let f = frames.iter().find(|(_, f)| f.id() == 0x34F).unwrap().1;
        assert_eq!(f.data()[0] & 1, 1);
    }

    #[test]
    fn demo_mode_refuses_manual_changes_and_follows_ramp() {
        let (mut net, mut ecu) = setup(VehicleState::default());
        ecu.run_demo(DemoScript::default_drive());
        assert_eq!(
            ecu.set_state("speed", &10.0.into()),
            Err(VehicleError::NotInManualMode)
        );
        let frames = run(&mut ecu, &mut net, 13_000_000);
        let script = DemoScript::default_drive();
        let base = VehicleState::default();
        let mut checked = 0;
        for (_, f) in frames.iter().filter(|(_, f)| f.id() == 0x0AA) {
            let rpm = decode(0x0AA, f.data()).unwrap()[1].value.as_f64().unwrap();
            assert!(rpm >= 0.0);
            checked += 1;
        }
        assert!(checked > 1000);
        // the k-th 0x0AA is queued at phase + k * 10 ms
        let phase = PHASE_STEP_US;
        for (k, (_, f)) in frames.iter().filter(|(_, f)| f.id() == 0x0AA).enumerate() {
            let t = phase + k as Micros * 10_000;
            let want = (script.state_at(&base, t).rpm * 4.0).round() / 4.0;
            let rpm = decode(0x0AA, f.data()).unwrap()[1].value.as_f64().unwrap();
            assert_eq!(rpm, want, "emission {k} at {t}");
        }
        assert_eq!(ecu.state().rpm, 3000.0);
    }

    #[test]
    fn time_frame_carries_epoch_plus_virtual_time() {
        let (mut net, ecu) = setup(running());
        let epoch = NaiveDateTime::parse_from_str("2021-03-04 05:06:07", "%Y-%m-%d %H:%M:%S").unwrap();
        let mut ecu = ecu.with_epoch(epoch).unwrap();
        let frames = run(&mut ecu, &mut net, 100_000);
        let f = frames.iter().find(|(_, f)| f.id() == 0x39E).unwrap().1;
        assert_eq!(f.data(), &[5, 6, 7, 4, 3, 0xE5, 0x07, 0]);
    }

    #[test]
    fn invalid_initial_state_is_refused() {
        let mut net = Network::new();
        let bus = net.add_bus(VirtualBus::default());
        let port = net.attach(bus);
        let bad = VehicleState {
            rpm: 900.0,
            ..VehicleState::default()
        };
        assert!(VehicleEcu::new(port, bad, 0).is_err());
    }
}
