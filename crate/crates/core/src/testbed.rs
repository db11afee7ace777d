//! The assembled bench: vehicle simulator, instrument cluster and, in the
//! man-in-the-middle topology, the rogue device between them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::{BusError, BusId, NetEvent, Network, Node, PortRef, VirtualBus};
use crate::capture::{LogRecord, ReplayError, Replayer};
use crate::catalog::{CatalogError, PhysicalValue};
use crate::cluster::ClusterEcu;
use crate::control::protocol::{Action, BusTelemetry, CommandError, ErrorCode, Telemetry, PROTOCOL_VERSION};
use crate::frame::CanFrame;
use crate::rogue::{AttackRule, AttackSettings, BridgePorts, RogueDevice, RogueError};
use crate::vehicle::{DemoScript, VehicleEcu, VehicleError, VehicleState};
use crate::Micros;

/// Bus history kept for utilization queries.
pub const HISTORY_US: Micros = 60_000_000;

/// Window of the utilization figures in telemetry.
pub const TELEMETRY_WINDOW_US: Micros = 1_000_000;

/// Largest accepted time scale.
pub const MAX_TIME_SCALE: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// Vehicle and cluster on one bus.
    Direct,
    /// Vehicle bus and cluster bus joined by the rogue device.
    #[default]
    Mitm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Upstream,
    Downstream,
}

#[derive(Debug, Error)]
pub enum TestbedError {
    #[error("bitrate must be positive")]
    BadBitrate,
    #[error("attack rules need the mitm topology")]
    RulesWithoutRogue,
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
    #[error(transparent)]
    Rogue(#[from] RogueError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Bus(#[from] BusError),
}

#[derive(Debug, Clone)]
pub struct TestbedConfig {
    pub bitrate: u32,
    pub topology: Topology,
    pub vehicle: VehicleState,
    pub demo: Option<DemoScript>,
    pub rules: Vec<AttackRule>,
    /// When false the vehicle node never runs, leaving the buses to
    /// replayed traffic.
    pub vehicle_active: bool,
}

impl Default for TestbedConfig {
    fn default() -> Self {
        Self {
            bitrate: crate::bus::DEFAULT_BITRATE,
            topology: Topology::Mitm,
            vehicle: VehicleState::default(),
            demo: None,
            rules: Vec::new(),
            vehicle_active: true,
        }
    }
}

pub struct Testbed {
    net: Network,
    topology: Topology,
    upstream: BusId,
    downstream: BusId,
    vehicle: VehicleEcu,
    vehicle_active: bool,
    cluster: ClusterEcu,
    rogue: Option<RogueDevice>,
    replayers: Vec<Replayer>,
    demo: DemoScript,
    paused: bool,
    time_scale: f64,
    recording: bool,
    events: Vec<NetEvent>,
}

impl Testbed {
    pub fn new(config: TestbedConfig) -> Result<Self, TestbedError> {
        if config.bitrate == 0 {
            return Err(TestbedError::BadBitrate);
        }
        let mut net = Network::new();
        let upstream = net.add_bus(VirtualBus::new(config.bitrate));
        let (downstream, rogue) = match config.topology {
            Topology::Direct => {
                if !config.rules.is_empty() {
                    return Err(TestbedError::RulesWithoutRogue);
                }
                (upstream, None)
            }
            Topology::Mitm => {
                let downstream = net.add_bus(VirtualBus::new(config.bitrate));
                let ports = BridgePorts {
                    upstream: net.attach(upstream),
                    downstream: net.attach(downstream),
                    flood: net.attach(downstream),
                };
                let mut rogue = RogueDevice::new(ports);
                rogue.configure(config.rules)?;
                (downstream, Some(rogue))
            }
        };
        let vehicle_port = net.attach(upstream);
        let cluster_port = net.attach(downstream);
        let mut vehicle = VehicleEcu::new(vehicle_port, config.vehicle, 0)?;
        let demo = config.demo.clone().unwrap_or_else(DemoScript::default_drive);
        if let Some(script) = config.demo {
            vehicle.run_demo(script);
        }
        Ok(Self {
            net,
            topology: config.topology,
            upstream,
            downstream,
            vehicle,
            vehicle_active: config.vehicle_active,
            cluster: ClusterEcu::new(Some(cluster_port), 0),
            rogue,
            replayers: Vec::new(),
            demo,
            paused: false,
            time_scale: 1.0,
            recording: false,
            events: Vec::new(),
        })
    }

    pub fn now(&self) -> Micros {
        self.net.clock()
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn bus_id(&self, side: Side) -> BusId {
        match side {
            Side::Upstream => self.upstream,
            Side::Downstream => self.downstream,
        }
    }

    pub fn bus(&self, side: Side) -> &VirtualBus {
        self.net.bus(self.bus_id(side))
    }

    pub fn vehicle(&self) -> &VehicleEcu {
        &self.vehicle
    }

    pub fn cluster(&self) -> &ClusterEcu {
        &self.cluster
    }

    pub fn rogue(&self) -> Option<&RogueDevice> {
        self.rogue.as_ref()
    }

    pub fn paused(&self) -> bool {
        self.paused
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    /// Keeps every network event from now on, for [`Testbed::take_events`].
    pub fn set_recording(&mut self, on: bool) {
        self.recording = on;
    }

    pub fn take_events(&mut self) -> Vec<NetEvent> {
        std::mem::take(&mut self.events)
    }

    /// Adds a node replaying `records` onto one side, starting at `start`.
    pub fn add_replayer(&mut self, side: Side, records: &[LogRecord], start: Micros, speed: f64) -> Result<PortRef, TestbedError> {
        let port = self.net.attach(self.bus_id(side));
        self.replayers.push(Replayer::new(port, records, start, speed)?);
        self.net.touch();
        Ok(port)
    }

    pub fn replayers(&self) -> &[Replayer] {
        &self.replayers
    }

    pub fn run_until(&mut self, t: Micros) -> Result<(), TestbedError> {
        let mut nodes: Vec<&mut dyn Node> = Vec::new();
        if self.vehicle_active {
            nodes.push(&mut self.vehicle);
        }
        nodes.push(&mut self.cluster);
        if let Some(r) = self.rogue.as_mut() {
            nodes.push(r);
        }
        for r in &mut self.replayers {
            nodes.push(r);
        }
        let events = self.net.run_until(t, &mut nodes)?;
        if self.recording {
            self.events.extend(events);
        }
        if let Some(before) = t.checked_sub(HISTORY_US) {
            self.net.bus_mut(self.upstream).prune_history(before);
            self.net.bus_mut(self.downstream).prune_history(before);
        }
        Ok(())
    }

    pub fn advance(&mut self, dt: Micros) -> Result<(), TestbedError> {
        self.run_until(self.now() + dt)
    }

    fn rogue_mut(&mut self, verb: &str) -> Result<&mut RogueDevice, CommandError> {
        self.rogue
            .as_mut()
            .ok_or_else(|| CommandError::new(ErrorCode::Unavailable, format!("{verb} needs the rogue device (mitm topology)")))
    }

    fn update_attack(&mut self, verb: &str, f: impl FnOnce(&mut AttackSettings)) -> Result<(), CommandError> {
        let rogue = self.rogue_mut(verb)?;
        let mut attack = rogue.attack();
        f(&mut attack);
        rogue.set_attack(attack).map_err(CommandError::from)
    }

    /// Applies an action between simulation steps. Effects are visible to
    /// nodes at the current instant.
    pub fn apply(&mut self, action: &Action) -> Result<(), CommandError> {
        let verb = action.verb();
        match action {
            Action::SetSpeedOverride { value } => self.update_attack(verb, |a| a.speed_override = *value)?,
            Action::SetRpmOverride { value } => self.update_attack(verb, |a| a.rpm_override = *value)?,
            Action::SetAirbagDisabled { value } => self.update_attack(verb, |a| a.airbag_disabled = *value)?,
            Action::SetAbsDisabled { value } => self.update_attack(verb, |a| a.abs_disabled = *value)?,
            Action::ClearOverrides => self.update_attack(verb, |a| *a = AttackSettings::default())?,
            Action::SetFlood { active, id, payload } => {
                let frame = Action::flood_frame(*id, payload)?;
                self.rogue_mut(verb)?.set_flood(*active, frame);
            }
            Action::VehicleSet { field, value } if field == "mode" => match value.as_str() {
                Some("manual") => self.vehicle.set_manual(),
                Some("demo") => self.vehicle.run_demo(self.demo.clone()),
                _ => {
                    return Err(CommandError::new(
                        ErrorCode::InvalidArgument,
                        format!("mode must be \"manual\" or \"demo\", got {value}"),
                    ))
                }
            },
            Action::VehicleSet { field, value } => self.vehicle.set_state(field, value)?,
            Action::SimPause => self.paused = true,
            Action::SimResume => self.paused = false,
            Action::SetTimeScale { value } => {
                if !(value.is_finite() && *value > 0.0 && *value <= MAX_TIME_SCALE) {
                    return Err(CommandError::new(
                        ErrorCode::OutOfRange,
                        format!("time scale {value} outside (0, {MAX_TIME_SCALE}]"),
                    ));
                }
                self.time_scale = *value;
            }
            Action::ConfigureRules { rules } => self.rogue_mut(verb)?.configure(rules.clone())?,
            Action::Inject { id, payload, counter_offset } => {
                let frame = CanFrame::new(*id, payload).map_err(|e| CommandError::new(ErrorCode::InvalidArgument, e.to_string()))?;
                self.rogue_mut(verb)?.inject_once(frame, *counter_offset);
            }
        }
        self.net.touch();
        Ok(())
    }

    fn utilization(&self, side: Side, window: Micros) -> f64 {
        let now = self.now();
        if now == 0 {
            return 0.0;
        }
        self.bus(side).utilization(now.saturating_sub(window), now)
    }

    /// Fraction of `window` before now during which `side` was busy.
    pub fn utilization_over(&self, side: Side, window: Micros) -> f64 {
        self.utilization(side, window)
    }

    pub fn telemetry(&self) -> Telemetry {
        Telemetry {
            protocol_version: PROTOCOL_VERSION,
            sim_time_us: self.now(),
            paused: self.paused,
            time_scale: self.time_scale,
            topology: self.topology,
            vehicle_mode: if self.vehicle.is_manual() { "manual" } else { "demo" },
            vehicle: self.vehicle.state().clone(),
            cluster: self.cluster.snapshot(),
            rogue: self.rogue.as_ref().map(RogueDevice::status),
            bus: BusTelemetry {
                bitrate: self.bus(Side::Downstream).bitrate(),
                upstream_utilization: self.utilization(Side::Upstream, TELEMETRY_WINDOW_US),
                downstream_utilization: self.utilization(Side::Downstream, TELEMETRY_WINDOW_US),
            },
        }
    }

    /// Current value of a vehicle field.
    pub fn truth(&self, field: &str) -> Option<PhysicalValue> {
        self.vehicle.state().get(field)
    }
}

impl From<RogueError> for CommandError {
    fn from(e: RogueError) -> Self {
        let code = match &e {
            RogueError::OutOfRange { .. } | RogueError::Catalog(CatalogError::OutOfRange { .. }) => ErrorCode::OutOfRange,
            RogueError::Detached => ErrorCode::Unavailable,
            _ => ErrorCode::InvalidArgument,
        };
        CommandError::new(code, e.to_string())
    }
}

impl From<VehicleError> for CommandError {
    fn from(e: VehicleError) -> Self {
        let code = match &e {
            VehicleError::OutOfRange { .. } | VehicleError::Catalog(CatalogError::OutOfRange { .. }) => ErrorCode::OutOfRange,
            VehicleError::NotInManualMode => ErrorCode::Unavailable,
            _ => ErrorCode::InvalidArgument,
        };
        CommandError::new(code, e.to_string())
    }
}
