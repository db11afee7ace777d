//! Several bus segments stepped in lockstep with the nodes attached to them.

use super::{BusError, BusEvent, BusEventKind, PortId, VirtualBus};
use crate::frame::CanFrame;
use crate::Micros;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BusId(pub usize);

/// A port on one segment of a [`Network`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortRef {
    pub bus: BusId,
    pub port: PortId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetEvent {
    pub bus: BusId,
    pub event: BusEvent,
}

/// What a node may do while it is being called back.
pub struct SimContext<'a> {
    buses: &'a mut [VirtualBus],
    now: Micros,
}

impl SimContext<'_> {
    pub fn now(&self) -> Micros {
        self.now
    }

    pub fn submit(&mut self, port: PortRef, frame: CanFrame) -> Result<(), BusError> {
        self.buses[port.bus.0].submit(port.port, frame)
    }

    pub fn pending(&self, port: PortRef) -> usize {
        self.buses[port.bus.0].pending(port.port)
    }

    /// Drops every frame still queued on `port`.
    pub fn cancel_pending(&mut self, port: PortRef) -> usize {
        self.buses[port.bus.0].cancel_pending(port.port)
    }
}

/// A bus participant. Callbacks run synchronously inside
/// [`Network::run_until`]; `tick` may be called more than once for the
/// same instant and must be idempotent. A node owning several ports on one
/// segment does not hear frames sent from any of them.
pub trait Node {
    /// Whether `port` belongs to this node.
    fn owns(&self, port: PortRef) -> bool;

    fn on_frame(&mut self, _port: PortRef, _frame: &CanFrame, _ctx: &mut SimContext<'_>) {}

    fn tick(&mut self, _ctx: &mut SimContext<'_>) {}

    /// Next instant at which the node needs a `tick`.
    fn next_wakeup(&self) -> Option<Micros> {
        None
    }
}

/// Buses plus the shared virtual clock. Nodes are owned by the caller and
/// lent for each run, which keeps their concrete types accessible.
#[derive(Debug, Default)]
pub struct Network {
    buses: Vec<VirtualBus>,
    clock: Micros,
    instant_done: bool,
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_bus(&mut self, bus: VirtualBus) -> BusId {
        self.buses.push(bus);
        BusId(self.buses.len() - 1)
    }

    pub fn attach(&mut self, bus: BusId) -> PortRef {
        PortRef {
            bus,
            port: self.buses[bus.0].attach(),
        }
    }

    pub fn detach(&mut self, port: PortRef) -> Result<(), BusError> {
        self.buses[port.bus.0].detach(port.port)
    }

    pub fn bus(&self, id: BusId) -> &VirtualBus {
        &self.buses[id.0]
    }

    pub fn bus_mut(&mut self, id: BusId) -> &mut VirtualBus {
        &mut self.buses[id.0]
    }

    pub fn clock(&self) -> Micros {
        self.clock
    }

    /// Marks the current instant for reprocessing, so that state changed
    /// between runs is acted on at the current clock.
    pub fn touch(&mut self) {
        self.instant_done = false;
    }

    /// Advances to `t`, delivering frames, ticking nodes and arbitrating
    /// at every event instant. Identical inputs yield identical events.
    pub fn run_until(&mut self, t: Micros, nodes: &mut [&mut dyn Node]) -> Result<Vec<NetEvent>, BusError> {
        if t < self.clock {
            return Err(BusError::TimeRegression {
                clock: self.clock,
                target: t,
            });
        }
        let mut out = Vec::new();
        loop {
            if !self.instant_done {
                self.process_instant(nodes, &mut out);
                self.instant_done = true;
            }
            let next = self.next_event_time(nodes);
            match next {
                Some(n) if n <= t => {
                    for bus in &mut self.buses {
                        bus.advance_to(n)?;
                    }
                    self.clock = n;
                    self.instant_done = false;
                    self.dispatch(nodes, &mut out);
                }
                _ => break,
            }
        }
        if t > self.clock {
            for bus in &mut self.buses {
                bus.advance_to(t)?;
            }
            self.clock = t;
            self.instant_done = false;
        }
        Ok(out)
    }

    fn next_event_time(&self, nodes: &[&mut dyn Node]) -> Option<Micros> {
        let clock = self.clock;
        self.buses
            .iter()
            .filter_map(VirtualBus::next_completion)
            .chain(nodes.iter().filter_map(|n| n.next_wakeup()).filter(|&w| w > clock))
            .min()
    }

    fn process_instant(&mut self, nodes: &mut [&mut dyn Node], out: &mut Vec<NetEvent>) {
        let mut ctx = SimContext {
            buses: &mut self.buses,
            now: self.clock,
        };
        for node in nodes.iter_mut() {
            node.tick(&mut ctx);
        }
        for bus in &mut self.buses {
            bus.arbitrate();
        }
        self.collect(out);
    }

    fn dispatch(&mut self, nodes: &mut [&mut dyn Node], out: &mut Vec<NetEvent>) {
        let mut deliveries = Vec::new();
        for (i, bus) in self.buses.iter_mut().enumerate() {
            for event in bus.drain_events() {
                if let BusEventKind::FrameDelivered {
                    sender,
                    frame,
                    receivers,
                    ..
                } = &event.kind
                {
                    let port = |p: PortId| PortRef { bus: BusId(i), port: p };
                    let from = nodes.iter().position(|n| n.owns(port(*sender)));
                    for &r in receivers {
                        let owner = nodes.iter().position(|n| n.owns(port(r)));
                        // a node never hears itself, whichever of its ports sent
                        if owner.is_some() && owner != from {
                            deliveries.push((owner.unwrap_or_default(), port(r), *frame));
                        }
                    }
                }
                out.push(NetEvent { bus: BusId(i), event });
            }
        }
        let mut ctx = SimContext {
            buses: &mut self.buses,
            now: self.clock,
        };
        for (owner, port, frame) in deliveries {
            nodes[owner].on_frame(port, &frame, &mut ctx);
        }
        self.collect(out);
    }

    fn collect(&mut self, out: &mut Vec<NetEvent>) {
        for (i, bus) in self.buses.iter_mut().enumerate() {
            out.extend(bus.drain_events().into_iter().map(|event| NetEvent { bus: BusId(i), event }));
        }
    }
}
