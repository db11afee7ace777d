//! The man-in-the-middle bridge between the vehicle-side and cluster-side
//! segments. Frames are stored and forwarded, with per-id rules applied on
//! the way downstream.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::{Node, PortRef, SimContext};
use crate::catalog::{catalog, AliveCounter, CatalogError, PhysicalValue, SignalKind};
use crate::cluster::{RPM_GAUGE_MAX, SPEED_GAUGE_MAX};
use crate::frame::{CanFrame, CodecError, MAX_STANDARD_ID};
use crate::hex;
use crate::Micros;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RogueError {
    #[error("more than one rule for 0x{0:03X}")]
    DuplicateId(u32),
    #[error("0x{0:03X} is not a catalog id")]
    UnknownId(u32),
    #[error("id 0x{0:X} exceeds 11 bits")]
    IdOutOfRange(u32),
    #[error("{what} = {value} outside [{min}, {max}]")]
    OutOfRange { what: String, value: f64, min: f64, max: f64 },
    #[error("the alive counter of 0x{0:03X} is always copied from upstream")]
    CounterNotForgeable(u32),
    #[error("inject period must be positive")]
    ZeroPeriod,
    #[error("no upstream port in this topology")]
    Detached,
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// What happens to frames of one id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackAction {
    Pass,
    /// Re-encode the named signals; every other bit is kept.
    Modify { signals: BTreeMap<String, PhysicalValue> },
    /// Replace the payload, keeping the upstream alive counter.
    Rewrite {
        #[serde(with = "hex::bytes")]
        payload: Vec<u8>,
    },
    Block,
    /// Send extra frames of this id downstream, once or every `period_ms`.
    /// Upstream frames of the id still pass.
    Inject {
        #[serde(with = "hex::bytes")]
        payload: Vec<u8>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        period_ms: Option<u32>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRule {
    #[serde(with = "hex::id")]
    pub id: u32,
    #[serde(flatten)]
    pub action: AttackAction,
}

impl AttackRule {
    fn validate(&self) -> Result<(), RogueError> {
        if self.id > MAX_STANDARD_ID {
            return Err(RogueError::IdOutOfRange(self.id));
        }
        match &self.action {
            AttackAction::Pass | AttackAction::Block => Ok(()),
            AttackAction::Modify { signals } => {
                let spec = catalog().get(self.id).ok_or(RogueError::UnknownId(self.id))?;
                for (name, value) in signals {
                    if spec.signal(name).is_some_and(|s| s.kind == SignalKind::Counter) {
                        return Err(RogueError::CounterNotForgeable(self.id));
                    }
                    catalog().validate(self.id, name, value)?;
                }
                Ok(())
            }
            AttackAction::Rewrite { payload } => {
                let spec = catalog().get(self.id).ok_or(RogueError::UnknownId(self.id))?;
                if payload.len() != usize::from(spec.dlc) {
                    return Err(CatalogError::WrongLength {
                        id: self.id,
                        expected: usize::from(spec.dlc),
                        actual: payload.len(),
                    }
                    .into());
                }
                Ok(())
            }
            AttackAction::Inject { payload, period_ms } => {
                if *period_ms == Some(0) {
                    return Err(RogueError::ZeroPeriod);
                }
                CanFrame::new(self.id, payload)?;
                Ok(())
            }
        }
    }
}

/// The console-level attack: forged gauges and disabled systems.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSettings {
    pub speed_override: Option<f64>,
    pub rpm_override: Option<f64>,
    pub airbag_disabled: bool,
    pub abs_disabled: bool,
}

impl AttackSettings {
    pub fn is_idle(&self) -> bool {
        *self == Self::default()
    }

    pub fn validate(&self) -> Result<(), RogueError> {
        let check = |what: &str, v: Option<f64>, max: f64| match v {
            Some(v) if !(0.0..=max).contains(&v) => Err(RogueError::OutOfRange {
                what: what.into(),
                value: v,
                min: 0.0,
                max,
            }),
            _ => Ok(()),
        };
        check("speed_override", self.speed_override, SPEED_GAUGE_MAX)?;
        check("rpm_override", self.rpm_override, RPM_GAUGE_MAX)
    }

    /// Rules implementing the settings.
    pub fn compile(&self) -> Vec<AttackRule> {
        let mut rules = Vec::new();
        if let Some(v) = self.speed_override {
            let speed = PhysicalValue::Number(v);
            rules.push(AttackRule {
                id: 0x1A6,
                action: AttackAction::Modify {
                    signals: [("speed".to_string(), speed.clone())].into(),
                },
            });
            rules.push(AttackRule {
                id: 0x0CE,
                action: AttackAction::Modify {
                    signals: ["wheel_fl", "wheel_fr", "wheel_rl", "wheel_rr"]
                        .into_iter()
                        .map(|w| (w.to_string(), speed.clone()))
                        .collect(),
                },
            });
        }
        if let Some(v) = self.rpm_override {
            rules.push(AttackRule {
                id: 0x0AA,
                action: AttackAction::Modify {
                    signals: [("rpm".to_string(), PhysicalValue::Number(v))].into(),
                },
            });
        }
        if self.airbag_disabled {
            rules.push(AttackRule {
                id: 0x0D7,
                action: AttackAction::Block,
            });
        }
        if self.abs_disabled {
            for id in [0x0C0, 0x19E] {
                rules.push(AttackRule {
                    id,
                    action: AttackAction::Block,
                });
            }
        }
        rules
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FloodStatus {
    pub active: bool,
    #[serde(serialize_with = "frame_text")]
    pub frame: CanFrame,
}

fn frame_text<S: serde::Serializer>(f: &CanFrame, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(f)
}

/// Default flood frame: id 0x000 with eight dominant bytes.
pub fn default_flood_frame() -> CanFrame {
    CanFrame::new(0x000, &[0; 8]).expect("valid frame")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RogueStats {
    pub forwarded: u64,
    pub modified: u64,
    pub blocked: u64,
    pub injected: u64,
    pub flood_frames: u64,
    pub reverse: u64,
    /// Forwards refused by a full downstream queue.
    pub dropped: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RogueStatus {
    pub attack: AttackSettings,
    pub rules: Vec<AttackRule>,
    pub flood: FloodStatus,
    pub stats: RogueStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BridgePorts {
    pub upstream: PortRef,
    pub downstream: PortRef,
    /// Second controller on the downstream segment used for flooding, so a
    /// backed-up forwarding queue never stalls the flood.
    pub flood: PortRef,
}

#[derive(Debug, Clone)]
pub struct RogueDevice {
    ports: BridgePorts,
    custom: BTreeMap<u32, AttackAction>,
    attack: AttackSettings,
    effective: BTreeMap<u32, AttackAction>,
    /// Next injection time per inject rule; `None` means at the next tick.
    inject_due: BTreeMap<u32, Option<Micros>>,
    one_shots: Vec<(CanFrame, Option<u8>)>,
    /// Last alive counter seen upstream per counter-protected id.
    last_counter: BTreeMap<u32, u8>,
    flood: FloodStatus,
    flood_cancel: bool,
    stats: RogueStats,
}

impl RogueDevice {
    pub fn new(ports: BridgePorts) -> Self {
        assert_ne!(ports.upstream.bus, ports.downstream.bus, "bridge ports must be on distinct buses");
        assert_eq!(ports.downstream.bus, ports.flood.bus, "flood port belongs to the downstream bus");
        Self {
            ports,
            custom: BTreeMap::new(),
            attack: AttackSettings::default(),
            effective: BTreeMap::new(),
            inject_due: BTreeMap::new(),
            one_shots: Vec::new(),
            last_counter: BTreeMap::new(),
            flood: FloodStatus {
                active: false,
                frame: default_flood_frame(),
            },
            flood_cancel: false,
            stats: RogueStats::default(),
        }
    }

    pub fn ports(&self) -> BridgePorts {
        self.ports
    }

    /// Replaces the custom rule set as a whole.
    pub fn configure(&mut self, rules: Vec<AttackRule>) -> Result<(), RogueError> {
        let mut map = BTreeMap::new();
        for rule in rules {
            rule.validate()?;
            if map.insert(rule.id, rule.action).is_some() {
                return Err(RogueError::DuplicateId(rule.id));
            }
        }
        self.custom = map;
        self.rebuild();
        Ok(())
    }

    /// Applies console settings; their rules take precedence over custom
    /// rules for the same ids.
    pub fn set_attack(&mut self, attack: AttackSettings) -> Result<(), RogueError> {
        attack.validate()?;
        self.attack = attack;
        self.rebuild();
        Ok(())
    }

    pub fn attack(&self) -> AttackSettings {
        self.attack
    }

    pub fn set_flood(&mut self, active: bool, frame: Option<CanFrame>) {
        if let Some(f) = frame {
            self.flood.frame = f;
        }
        if self.flood.active && !active {
            self.flood_cancel = true;
        }
        self.flood.active = active;
    }

    pub fn flood(&self) -> FloodStatus {
        self.flood
    }

    /// Sends `frame` downstream once, at the next tick. With
    /// `counter_offset` the alive counter is set to the value the receiver
    /// expects next, advanced by the offset; an attacker computes this from
    /// the last upstream frame of the id.
    pub fn inject_once(&mut self, frame: CanFrame, counter_offset: Option<u8>) {
        self.one_shots.push((frame, counter_offset));
    }

    /// Counter of the last upstream frame of `id`.
    pub fn last_counter(&self, id: u32) -> Option<u8> {
        self.last_counter.get(&id).copied()
    }

    fn with_counter(&self, frame: CanFrame, offset: u8) -> CanFrame {
        let (Some(last), Some(spec)) = (self.last_counter(frame.id()), catalog().get(frame.id())) else {
            return frame;
        };
        let Some(sig) = spec.signals.iter().find(|s| s.kind == SignalKind::Counter) else {
            return frame;
        };
        let Ok(last) = AliveCounter::new(last) else {
            return frame;
        };
        let counter = last.next().advance(u32::from(offset));
        let update = [(sig.name.clone(), PhysicalValue::Number(f64::from(counter.value())))];
        match catalog().patch(frame.id(), frame.data(), &update) {
            Ok(data) => frame.with_data(&data).expect("same length"),
            Err(_) => frame,
        }
    }

    pub fn rule(&self, id: u32) -> Option<&AttackAction> {
        self.effective.get(&id)
    }

    pub fn rules(&self) -> Vec<AttackRule> {
        self.effective
            .iter()
            .map(|(&id, action)| AttackRule {
                id,
                action: action.clone(),
            })
            .collect()
    }

    pub fn stats(&self) -> RogueStats {
        self.stats
    }

    pub fn status(&self) -> RogueStatus {
        RogueStatus {
            attack: self.attack,
            rules: self.rules(),
            flood: self.flood,
            stats: self.stats,
        }
    }

    fn rebuild(&mut self) {
        let mut effective = self.custom.clone();
        for rule in self.attack.compile() {
            effective.insert(rule.id, rule.action);
        }
        self.inject_due = effective
            .iter()
            .filter(|(_, a)| matches!(a, AttackAction::Inject { .. }))
            .map(|(&id, _)| (id, None))
            .collect();
        self.effective = effective;
    }

    /// The downstream image of an upstream frame, or `None` if blocked.
    pub fn transform(&self, frame: &CanFrame) -> Option<CanFrame> {
        match self.effective.get(&frame.id()) {
            _ if frame.is_extended() || frame.is_remote() => Some(*frame),
            None | Some(AttackAction::Pass) | Some(AttackAction::Inject { .. }) => Some(*frame),
            Some(AttackAction::Block) => None,
            Some(AttackAction::Modify { signals }) => {
                let updates: Vec<_> = signals.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
                match catalog().patch(frame.id(), frame.data(), &updates) {
                    Ok(data) => Some(frame.with_data(&data).expect("same length")),
                    // a payload the catalog cannot read goes through untouched
                    Err(_) => Some(*frame),
                }
            }
            Some(AttackAction::Rewrite { payload }) => {
                let mut data = payload.clone();
                match catalog().carry_counter(frame.id(), frame.data(), &mut data) {
                    Ok(()) => Some(frame.with_data(&data).expect("valid length")),
                    Err(_) => Some(*frame),
                }
            }
        }
    }

    fn send_down(&mut self, ctx: &mut SimContext<'_>, frame: CanFrame) -> bool {
        match ctx.submit(self.ports.downstream, frame) {
            Ok(()) => true,
            Err(_) => {
                self.stats.dropped += 1;
                false
            }
        }
    }
}

impl Node for RogueDevice {
    fn owns(&self, port: PortRef) -> bool {
        port == self.ports.upstream || port == self.ports.downstream || port == self.ports.flood
    }

    fn on_frame(&mut self, port: PortRef, frame: &CanFrame, ctx: &mut SimContext<'_>) {
        if port == self.ports.upstream {
            if let Ok(Some(c)) = catalog().counter_of(frame.id(), frame.data()) {
                self.last_counter.insert(frame.id(), c);
            }
            match self.transform(frame) {
                None => self.stats.blocked += 1,
                Some(out) => {
                    if self.send_down(ctx, out) {
                        self.stats.forwarded += 1;
                        if out != *frame {
                            self.stats.modified += 1;
                        }
                    }
                }
            }
        } else if port == self.ports.downstream {
            if ctx.submit(self.ports.upstream, *frame).is_ok() {
                self.stats.reverse += 1;
            }
        }
    }

    fn tick(&mut self, ctx: &mut SimContext<'_>) {
        let now = ctx.now();
        for (frame, offset) in std::mem::take(&mut self.one_shots) {
            let frame = offset.map_or(frame, |k| self.with_counter(frame, k));
            if self.send_down(ctx, frame) {
                self.stats.injected += 1;
            }
        }
        let due: Vec<u32> = self
            .inject_due
            .iter()
            .filter(|(_, d)| d.is_none_or(|d| d <= now))
            .map(|(&id, _)| id)
            .collect();
        for id in due {
            let Some(AttackAction::Inject { payload, period_ms }) = self.effective.get(&id).cloned() else {
                continue;
            };
            let frame = CanFrame::new(id, &payload).expect("validated at configure");
            if self.send_down(ctx, frame) {
                self.stats.injected += 1;
            }
            match period_ms {
                Some(p) => {
                    let next = self.inject_due[&id].unwrap_or(now) + Micros::from(p) * 1000;
                    self.inject_due.insert(id, Some(next));
                }
                None => {
                    self.inject_due.insert(id, Some(Micros::MAX));
                }
            }
        }
        if self.flood_cancel {
            self.flood_cancel = false;
            ctx.cancel_pending(self.ports.flood);
        }
        if self.flood.active && ctx.pending(self.ports.flood) == 0 && ctx.submit(self.ports.flood, self.flood.frame).is_ok() {
            self.stats.flood_frames += 1;
        }
    }

    fn next_wakeup(&self) -> Option<Micros> {
        self.inject_due.values().flatten().copied().filter(|&t| t != Micros::MAX).min()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::{BusEventKind, Network, VirtualBus};
    use crate::catalog::decode;
    use crate::cluster::catalog_frame;

    fn bridge() -> (Network, RogueDevice, PortRef, PortRef) {
        let mut net = Network::new();
        let up = net.add_bus(VirtualBus::default());
        let down = net.add_bus(VirtualBus::default());
        let ports = BridgePorts {
            upstream: net.attach(up),
            downstream: net.attach(down),
            flood: net.attach(down),
        };
        let src = net.attach(up);
        let sink = net.attach(down);
        (net, RogueDevice::new(ports), src, sink)
    }

    /// Feeds frames on the source port and collects what the sink hears.
    struct Ends {
        src: PortRef,
        sink: PortRef,
        to_send: Vec<CanFrame>,
        heard: Vec<CanFrame>,
    }

    impl Node for Ends {
        fn owns(&self, p: PortRef) -> bool {
            p == self.src || p == self.sink
        }
        fn on_frame(&mut self, p: PortRef, f: &CanFrame, _: &mut SimContext<'_>) {
            if p == self.sink {
                self.heard.push(*f);
            }
        }
        fn tick(&mut self, ctx: &mut SimContext<'_>) {
            for f in self.to_send.drain(..) {
                ctx.submit(self.src, f).unwrap();
            }
        }
    }

    fn through(rogue: &mut RogueDevice, net: &mut Network, src: PortRef, sink: PortRef, frames: Vec<CanFrame>) -> Vec<CanFrame> {
        let mut ends = Ends {
            src,
            sink,
            to_send: frames,
            heard: Vec::new(),
        };
        let t = net.clock() + 200_000;
        net.touch();
        net.run_until(t, &mut [rogue, &mut ends]).unwrap();
        ends.heard
    }

    fn speed(v: f64) -> CanFrame {
        catalog_frame(0x1A6, &[("speed", v.into())], None)
    }

    #[test]
    fn empty_rules_pass_everything() {
        let (mut net, mut rogue, src, sink) = bridge();
        rogue.configure(vec![]).unwrap();
        let frames = vec![speed(60.0), catalog_frame(0x0C0, &[], Some(4)), CanFrame::new(0x7FF, &[1]).unwrap()];
        let mut heard = through(&mut rogue, &mut net, src, sink, frames.clone());
        heard.sort_by_key(|f| f.id());
        let mut want = frames;
        want.sort_by_key(|f| f.id());
        assert_eq!(heard, want);
    }

    #[test]
    fn speed_override_rewrites_only_the_speed_field() {
        let (mut net, mut rogue, src, sink) = bridge();
        rogue
            .set_attack(AttackSettings {
                speed_override: Some(260.0),
                ..AttackSettings::default()
            })
            .unwrap();
        let mut original = speed(60.0);
        original = original.with_data(&[0x00, 0x0F, 0xAA, 0xBB, 0xCC, 0xDD, 0xEE, 0x11]).unwrap();
        let heard = through(&mut rogue, &mut net, src, sink, vec![original]);
        assert_eq!(decode(0x1A6, heard[0].data()).unwrap()[0].value, PhysicalValue::Number(260.0));
        assert_eq!(&heard[0].data()[2..], &original.data()[2..]);
        assert_eq!(rogue.stats().modified, 1);
    }

    #[test]
    fn blocking_drops_the_id() {
        let (mut net, mut rogue, src, sink) = bridge();
        rogue
            .set_attack(AttackSettings {
                airbag_disabled: true,
                abs_disabled: true,
                ..AttackSettings::default()
            })
            .unwrap();
        let frames = vec![
            catalog_frame(0x0D7, &[], Some(1)),
            catalog_frame(0x0C0, &[], Some(1)),
            CanFrame::new(0x19E, &[0; 8]).unwrap(),
            speed(10.0),
        ];
        let heard = through(&mut rogue, &mut net, src, sink, frames);
        assert_eq!(heard.iter().map(|f| f.id()).collect::<Vec<_>>(), [0x1A6]);
        assert_eq!(rogue.stats().blocked, 3);
    }

    #[test]
    fn rewrite_keeps_the_upstream_counter() {
        let (mut net, mut rogue, src, sink) = bridge();
        rogue
            .configure(vec![AttackRule {
                id: 0x0C0,
                action: AttackAction::Rewrite {
                    payload: vec![0xF9, 0x12],
                },
            }])
            .unwrap();
        let heard = through(&mut rogue, &mut net, src, sink, vec![catalog_frame(0x0C0, &[], Some(4))]);
        assert_eq!(heard[0].data(), &[0xF4, 0x12]);
    }

    #[test]
    fn configure_rejects_bad_rules() {
        let (_, mut rogue, _, _) = bridge();
        let block = |id| AttackRule {
            id,
            action: AttackAction::Block,
        };
        assert_eq!(rogue.configure(vec![block(0x1A6), block(0x1A6)]), Err(RogueError::DuplicateId(0x1A6)));
        let modify = |id, name: &str, v: f64| AttackRule {
            id,
            action: AttackAction::Modify {
                signals: [(name.to_string(), PhysicalValue::Number(v))].into(),
            },
        };
        assert!(matches!(rogue.configure(vec![modify(0x1A6, "fuel", 1.0)]), Err(RogueError::Catalog(_))));
        assert!(matches!(rogue.configure(vec![modify(0x1A6, "speed", 5000.0)]), Err(RogueError::Catalog(_))));
        assert_eq!(
            rogue.configure(vec![modify(0x0C0, "alive_counter", 3.0)]),
            Err(RogueError::CounterNotForgeable(0x0C0))
        );
        assert!(rogue.configure(vec![block(0x800)]).is_err());
        assert!(rogue.rules().is_empty());
    }

    #[test]
    fn attack_ranges() {
        let (_, mut rogue, _, _) = bridge();
        let rpm = |v| AttackSettings {
            rpm_override: Some(v),
            ..AttackSettings::default()
        };
        assert!(matches!(rogue.set_attack(rpm(9999.0)), Err(RogueError::OutOfRange { .. })));
        rogue.set_attack(rpm(7000.0)).unwrap();
        assert_eq!(rogue.rules().len(), 1);
        rogue.set_attack(AttackSettings::default()).unwrap();
        assert!(rogue.rules().is_empty());
    }

    #[test]
    fn attack_overrides_custom_rule_for_same_id() {
        let (_, mut rogue, _, _) = bridge();
        rogue
            .configure(vec![AttackRule {
                id: 0x0D7,
                action: AttackAction::Pass,
            }])
            .unwrap();
        rogue
            .set_attack(AttackSettings {
                airbag_disabled: true,
                ..AttackSettings::default()
            })
            .unwrap();
        assert_eq!(rogue.rule(0x0D7), Some(&AttackAction::Block));
        rogue.set_attack(AttackSettings::default()).unwrap();
        assert_eq!(rogue.rule(0x0D7), Some(&AttackAction::Pass));
    }

    #[test]
    fn periodic_injection() {
        let (mut net, mut rogue, src, sink) = bridge();
        rogue
            .configure(vec![AttackRule {
                id: 0x3B4,
                action: AttackAction::Inject {
                    payload: vec![0x64, 0, 0, 0, 0, 0, 0, 0],
                    period_ms: Some(50),
                },
            }])
            .unwrap();
        let heard = through(&mut rogue, &mut net, src, sink, vec![]);
        assert_eq!(heard.len(), 4);
        assert!(heard.iter().all(|f| f.id() == 0x3B4));
    }

    #[test]
    fn flood_owns_the_downstream_bus() {
        let (mut net, mut rogue, src, sink) = bridge();
        rogue.set_flood(true, None);
        let heard = through(&mut rogue, &mut net, src, sink, vec![speed(1.0)]);
        assert!(heard.iter().all(|f| f.id() == 0x000));
        let down = rogue.ports().downstream.bus;
        assert!(net.bus(down).utilization(1_000, 200_000) >= 0.99);
        rogue.set_flood(false, None);
        let heard = through(&mut rogue, &mut net, src, sink, vec![]);
        assert_eq!(heard.iter().filter(|f| f.id() == 0x1A6).count(), 1);
        assert!(heard.iter().filter(|f| f.id() == 0x000).count() <= 1);
        // the flood is never relayed back upstream
        assert_eq!(rogue.stats().reverse, 0);
    }

    #[test]
    fn rules_serialize_as_tagged_objects() {
        let rule: AttackRule =
            serde_json::from_str(r#"{"id":"1A6","action":"modify","signals":{"speed":260}}"#).unwrap();
        assert_eq!(rule.id, 0x1A6);
        let text = serde_json::to_string(&AttackRule {
            id: 0x0C0,
            action: AttackAction::Inject {
                payload: vec![0xF5, 0xFF],
                period_ms: None,
            },
        })
        .unwrap();
        assert_eq!(text, r#"{"id":"0C0","action":"inject","payload":"F5FF"}"#);
        assert!(serde_json::from_str::<AttackRule>(r#"{"id":"1A6","action":"explode"}"#).is_err());
    }

    #[test]
    fn forward_latency_is_one_frame_on_each_side() {
        let (mut net, mut rogue, src, sink) = bridge();
        let mut ends = Ends {
            src,
            sink,
            to_send: vec![speed(60.0)],
            heard: Vec::new(),
        };
        let events = net.run_until(100_000, &mut [&mut rogue, &mut ends]).unwrap();
        let times: Vec<Micros> = events
            .iter()
            .filter_map(|e| match e.event.kind {
                BusEventKind::FrameDelivered { .. } => Some(e.event.time),
                _ => None,
            })
            .collect();
        let ft = crate::frame::frame_time(&speed(60.0), 100_000);
        assert_eq!(times, [ft, 2 * ft]);
    }

    #[test]
    fn relative_counter_injection() {
        let (mut net, mut rogue, src, sink) = bridge();
        through(&mut rogue, &mut net, src, sink, vec![catalog_frame(0x0C0, &[], Some(4))]);
        assert_eq!(rogue.last_counter(0x0C0), Some(4));
        rogue.inject_once(catalog_frame(0x0C0, &[], Some(0)), Some(2));
        let heard = through(&mut rogue, &mut net, src, sink, vec![]);
        assert_eq!(heard[0].data()[0] & 0x0F, 7);
    }
}
