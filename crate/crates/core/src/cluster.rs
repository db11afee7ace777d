//! The instrument cluster: turns catalog traffic into gauges and lamps,
//! checks alive counters and supervises message timeouts.
//!
//! The cluster cannot tell senders apart. Everything it shows is a function
//! of the frames it hears and when it hears them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize, Serializer};

use crate::bus::{Node, PortRef, SimContext};
use crate::catalog::{catalog, AliveCounter, PhysicalValue, SignalUpdate};
use crate::frame::CanFrame;
use crate::Micros;

/// Ids whose absence or counter faults the cluster reports.
pub const SUPERVISED_IDS: [u32; 7] = [0x0AA, 0x0C0, 0x0D7, 0x19E, 0x1A6, 0x1D0, 0x349];

/// A supervised id times out after this many nominal periods of silence.
pub const DEADLINE_FACTOR: u64 = 5;

/// Interval between supervision passes.
pub const SUPERVISION_TICK_US: Micros = 10_000;

/// Consecutive correct counters that clear a counter error.
pub const COUNTER_HEAL_FRAMES: u8 = 2;

pub const SPEED_GAUGE_MAX: f64 = 260.0;
pub const RPM_GAUGE_MAX: f64 = 7000.0;
pub const TEMP_GAUGE_MIN: f64 = 40.0;
pub const TEMP_GAUGE_MAX: f64 = 150.0;

/// Battery warning below this voltage.
pub const LOW_BATTERY_V: f64 = 12.0;

/// Above this displayed speed an engaged handbrake is flagged.
pub const HANDBRAKE_SPEED_LIMIT: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lamp {
    Airbag,
    Abs,
    Brake,
    Battery,
    Seatbelt,
}

impl Lamp {
    pub const ALL: [Lamp; 5] = [Lamp::Airbag, Lamp::Abs, Lamp::Brake, Lamp::Battery, Lamp::Seatbelt];

    pub fn name(self) -> &'static str {
        match self {
            Self::Airbag => "airbag",
            Self::Abs => "abs",
            Self::Brake => "brake",
            Self::Battery => "battery",
            Self::Seatbelt => "seatbelt",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Lamps {
    pub airbag: bool,
    pub abs: bool,
    pub brake: bool,
    pub battery: bool,
    pub seatbelt: bool,
}

impl Lamps {
    pub fn get(&self, lamp: Lamp) -> bool {
        match lamp {
            Lamp::Airbag => self.airbag,
            Lamp::Abs => self.abs,
            Lamp::Brake => self.brake,
            Lamp::Battery => self.battery,
            Lamp::Seatbelt => self.seatbelt,
        }
    }

    pub fn any(&self) -> bool {
        Lamp::ALL.into_iter().any(|l| self.get(l))
    }
}

fn hex_ids<S: Serializer>(ids: &[u32], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(ids.iter().map(|id| format!("{id:03X}")))
}

/// What the cluster displays.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterState {
    pub speed: f64,
    pub rpm: f64,
    pub fuel: f64,
    pub engine_temp: f64,
    pub ignition: Option<String>,
    pub handbrake: bool,
    pub side_lights: bool,
    pub low_beam: bool,
    pub main_beam: bool,
    pub unbelted: bool,
    pub battery: Option<f64>,
    pub vin: Option<String>,
    /// Date and time last set over the bus.
    pub clock: Option<String>,
    pub lamps: Lamps,
    #[serde(serialize_with = "hex_ids")]
    pub counter_errors: Vec<u32>,
    #[serde(serialize_with = "hex_ids")]
    pub timeouts: Vec<u32>,
}

impl ClusterState {
    fn cold() -> Self {
        Self {
            speed: 0.0,
            rpm: 0.0,
            fuel: 0.0,
            engine_temp: TEMP_GAUGE_MIN,
            ignition: None,
            handbrake: false,
            side_lights: false,
            low_beam: false,
            main_beam: false,
            unbelted: false,
            battery: None,
            vin: None,
            clock: None,
            lamps: Lamps::default(),
            counter_errors: Vec::new(),
            timeouts: Vec::new(),
        }
    }

    pub fn has_flags(&self) -> bool {
        !self.counter_errors.is_empty() || !self.timeouts.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisionEntry {
    pub id: u32,
    pub period_ms: u32,
    pub deadline: Micros,
    pub last_seen: Micros,
    pub expected: Option<AliveCounter>,
    pub timed_out: bool,
    pub counter_error: bool,
    good_streak: u8,
}

impl SupervisionEntry {
    fn protected(&self) -> bool {
        catalog().get(self.id).is_some_and(|m| m.counter_protected)
    }
}

/// A lamp change, for transition logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LampTransition {
    pub time: Micros,
    pub lamp: Lamp,
    pub on: bool,
}

#[derive(Debug, Clone)]
pub struct ClusterEcu {
    port: Option<PortRef>,
    state: ClusterState,
    supervision: BTreeMap<u32, SupervisionEntry>,
    next_supervision: Micros,
    transitions: Vec<LampTransition>,
    frames_seen: u64,
}

impl ClusterEcu {
    /// A cluster switched on at `start`. `port` may be `None` when frames
    /// are fed directly.
    pub fn new(port: Option<PortRef>, start: Micros) -> Self {
        let supervision = SUPERVISED_IDS
            .iter()
            .map(|&id| {
                let period_ms = catalog()
                    .spec(id)
                    .ok()
                    .and_then(|m| m.period.millis())
                    .expect("supervised ids are periodic catalog ids");
                let entry = SupervisionEntry {
                    id,
                    period_ms,
                    deadline: DEADLINE_FACTOR * Micros::from(period_ms) * 1000,
                    last_seen: start,
                    expected: None,
                    timed_out: false,
                    counter_error: false,
                    good_streak: 0,
                };
                (id, entry)
            })
            .collect();
        Self {
            port,
            state: ClusterState::cold(),
            supervision,
            next_supervision: start,
            transitions: Vec::new(),
            frames_seen: 0,
        }
    }

    pub fn snapshot(&self) -> ClusterState {
        self.state.clone()
    }

    pub fn state(&self) -> &ClusterState {
        &self.state
    }

    pub fn supervision(&self) -> impl Iterator<Item = &SupervisionEntry> {
        self.supervision.values()
    }

    pub fn expected_counter(&self, id: u32) -> Option<AliveCounter> {
        self.supervision.get(&id).and_then(|e| e.expected)
    }

    pub fn transitions(&self) -> &[LampTransition] {
        &self.transitions
    }

    pub fn frames_seen(&self) -> u64 {
        self.frames_seen
    }

    /// Takes in one frame heard at `t`. Unknown ids and malformed frames
    /// are filtered out.
    pub fn on_frame(&mut self, t: Micros, frame: &CanFrame) {
        if frame.is_remote() || frame.is_extended() {
            return;
        }
        let id = frame.id();
        let Ok(updates) = catalog().decode(id, frame.data()) else {
            return;
        };
        self.frames_seen += 1;
        if let Some(entry) = self.supervision.get_mut(&id) {
            let raw = if entry.protected() {
                catalog().counter_of(id, frame.data()).ok().flatten()
            } else {
                None
            };
            check_counter(entry, t, raw);
            entry.last_seen = t;
        }
        self.apply(id, &updates);
        self.refresh(t);
    }

    /// Flags every supervised id silent for longer than its deadline and
    /// drops the gauges it feeds to rest.
    pub fn supervise(&mut self, t: Micros) {
        for entry in self.supervision.values_mut() {
            if !entry.timed_out && t.saturating_sub(entry.last_seen) > entry.deadline {
                entry.timed_out = true;
                entry.good_streak = 0;
                match entry.id {
                    0x1A6 => self.state.speed = 0.0,
                    0x0AA => self.state.rpm = 0.0,
                    0x1D0 => self.state.engine_temp = TEMP_GAUGE_MIN,
                    _ => {}
                }
            }
        }
        self.refresh(t);
    }

    fn apply(&mut self, id: u32, updates: &[SignalUpdate]) {
        let num = |name: &str| {
            updates
                .iter()
                .find(|u| u.name == name)
                .and_then(|u| u.value.as_f64())
        };
        let flag = |name: &str| {
            updates
                .iter()
                .find(|u| u.name == name)
                .and_then(|u| u.value.as_bool())
                .unwrap_or(false)
        };
        let text = |name: &str| {
            updates
                .iter()
                .find(|u| u.name == name)
                .and_then(|u| u.value.as_str().map(str::to_string))
        };
        let s = &mut self.state;
        match id {
            0x1A6 => s.speed = num("speed").unwrap_or(0.0).clamp(0.0, SPEED_GAUGE_MAX),
            0x0AA => s.rpm = num("rpm").unwrap_or(0.0).clamp(0.0, RPM_GAUGE_MAX),
            0x349 => {
                if let (Some(a), Some(b)) = (num("fuel_sensor_1"), num("fuel_sensor_2")) {
                    s.fuel = (a + b) / 2.0;
                }
            }
            0x1D0 => {
                s.engine_temp = num("engine_temp")
                    .unwrap_or(TEMP_GAUGE_MIN)
                    .clamp(TEMP_GAUGE_MIN, TEMP_GAUGE_MAX)
            }
            0x34F => s.handbrake = flag("handbrake"),
            0x21A => {
                s.side_lights = flag("side_lights");
                s.low_beam = flag("low_beam");
                s.main_beam = flag("main_beam");
            }
            0x3B4 => s.battery = num("battery"),
            0x130 => s.ignition = text("ignition"),
            0x380 => s.vin = text("vin"),
            0x581 => s.unbelted = flag("unbelted"),
            0x39E => s.clock = clock_text(updates),
            _ => {}
        }
    }

    /// Recomputes flags and lamps, logging lamp changes at `t`.
    fn refresh(&mut self, t: Micros) {
        let timed_out = |id| self.supervision[&id].timed_out;
        let counter = |id| self.supervision[&id].counter_error;
        let s = &self.state;
        let lamps = Lamps {
            airbag: timed_out(0x0D7) || counter(0x0D7),
            abs: timed_out(0x0C0) || timed_out(0x19E) || counter(0x0C0),
            brake: s.handbrake && s.speed > HANDBRAKE_SPEED_LIMIT,
            battery: s.battery.is_some_and(|v| v < LOW_BATTERY_V),
            seatbelt: s.unbelted,
        };
        for lamp in Lamp::ALL {
            if lamps.get(lamp) != self.state.lamps.get(lamp) {
                self.transitions.push(LampTransition {
                    time: t,
                    lamp,
                    on: lamps.get(lamp),
                });
            }
        }
        self.state.lamps = lamps;
        self.state.timeouts = self.supervision.values().filter(|e| e.timed_out).map(|e| e.id).collect();
        self.state.counter_errors = self
            .supervision
            .values()
            .filter(|e| e.counter_error)
            .map(|e| e.id)
            .collect();
    }
}

/// Counter and resync rules for one supervised frame arriving at `t`.
fn check_counter(entry: &mut SupervisionEntry, t: Micros, raw: Option<u8>) {
    let gap = t.saturating_sub(entry.last_seen) > entry.deadline;
    let resync = entry.timed_out || gap;
    if resync {
        entry.timed_out = false;
        entry.counter_error = false;
        entry.good_streak = 0;
        entry.expected = None;
    }
    if !entry.protected() {
        return;
    }
    let received = raw.and_then(|c| AliveCounter::new(c).ok());
    match (received, entry.expected) {
        (None, _) => {
            entry.counter_error = true;
            entry.good_streak = 0;
        }
        (Some(c), None) => entry.expected = Some(c.next()),
        (Some(c), Some(want)) if c == want => {
            entry.expected = Some(c.next());
            if entry.counter_error {
                entry.good_streak += 1;
                if entry.good_streak >= COUNTER_HEAL_FRAMES {
                    entry.counter_error = false;
                    entry.good_streak = 0;
                }
            }
        }
        (Some(c), Some(_)) => {
            entry.counter_error = true;
            entry.good_streak = 0;
            entry.expected = Some(c.next());
        }
    }
}

fn clock_text(updates: &[SignalUpdate]) -> Option<String> {
    let get = |name: &str| {
        updates
            .iter()
            .find(|u| u.name == name)
            .and_then(|u| u.value.as_f64())
            .map(|v| v as u32)
    };
    Some(format!(
        "{:04}-{:02}-{:02} {:02}:{:02}:{:02}",
        get("year")?,
        get("month")?,
        get("day")?,
        get("hour")?,
        get("minute")?,
        get("second")?
    ))
}

impl Node for ClusterEcu {
    fn owns(&self, port: PortRef) -> bool {
        self.port == Some(port)
    }

    fn on_frame(&mut self, _port: PortRef, frame: &CanFrame, ctx: &mut SimContext<'_>) {
        ClusterEcu::on_frame(self, ctx.now(), frame);
    }

    fn tick(&mut self, ctx: &mut SimContext<'_>) {
        let now = ctx.now();
        if now >= self.next_supervision {
            self.supervise(now);
            self.next_supervision = (now / SUPERVISION_TICK_US + 1) * SUPERVISION_TICK_US;
        }
    }

    fn next_wakeup(&self) -> Option<Micros> {
        Some(self.next_supervision)
    }
}

/// Convenience for tests and tools: a catalog frame from physical values.
pub fn catalog_frame(id: u32, values: &[(&str, PhysicalValue)], counter: Option<u8>) -> CanFrame {
    let counter = counter.map(|c| AliveCounter::new(c).expect("counter in range"));
    let payload = catalog().encode(id, values, counter).expect("encodable values");
    CanFrame::new(id, &payload).expect("catalog frame")
}
