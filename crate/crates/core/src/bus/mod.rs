//! Discrete-event model of one CAN segment.
//!
//! Time is integer microseconds. A transmission is atomic once started:
//! arbitration happens only at idle instants, among the best pending frame
//! of every attached port, and the frame occupies the bus for
//! [`frame_time`](crate::frame::frame_time) (interframe space included).
//! Delivery to every other attached port happens at the end of that
//! interval. Losers simply stay queued.

mod network;

use std::collections::VecDeque;

use thiserror::Error;

use crate::frame::{arbitration_key, frame_time, CanFrame};
use crate::Micros;

pub use network::{BusId, NetEvent, Network, Node, PortRef, SimContext};

/// Default bitrate of the simulated body bus.
pub const DEFAULT_BITRATE: u32 = 100_000;
/// Default per-port transmit queue depth.
pub const DEFAULT_QUEUE_DEPTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortId(pub usize);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BusError {
    #[error("transmit queue of port {port} is full ({depth} frames)")]
    QueueOverflow { port: usize, depth: usize },
    #[error("port {0} is not attached")]
    NotAttached(usize),
    #[error("cannot run backwards from {clock} to {target}")]
    TimeRegression { clock: Micros, target: Micros },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusEvent {
    pub time: Micros,
    pub kind: BusEventKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BusEventKind {
    /// A transmission started; `contenders` ports had frames pending.
    ArbitrationResolved {
        winner: PortId,
        frame: CanFrame,
        contenders: usize,
    },
    FrameDelivered {
        sender: PortId,
        frame: CanFrame,
        started: Micros,
        receivers: Vec<PortId>,
    },
    /// The bus went idle with nothing pending.
    BusIdle,
    QueueOverflow { port: PortId, frame: CanFrame },
    /// Two ports contended with identical arbitration fields. Both frames
    /// are discarded.
    ProtocolViolation { ports: Vec<PortId>, frame: CanFrame },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PortStats {
    pub submitted: u64,
    pub delivered: u64,
    pub overflowed: u64,
    pub violated: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone)]
struct Queued {
    key: u32,
    seq: u64,
    frame: CanFrame,
}

#[derive(Debug)]
struct Port {
    attached: bool,
    queue: Vec<Queued>,
    stats: PortStats,
}

impl Port {
    /// Index of the frame this port's controller would send next: lowest
    /// arbitration key, oldest first among equals.
    fn head(&self) -> Option<usize> {
        self.queue
            .iter()
            .enumerate()
            .min_by_key(|(_, q)| (q.key, q.seq))
            .map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, Copy)]
struct Transmission {
    port: PortId,
    frame: CanFrame,
    start: Micros,
    end: Micros,
}

#[derive(Debug)]
pub struct VirtualBus {
    bitrate: u32,
    queue_depth: usize,
    clock: Micros,
    ports: Vec<Port>,
    in_flight: Option<Transmission>,
    busy: VecDeque<(Micros, Micros)>,
    events: Vec<BusEvent>,
    idle_reported: bool,
    seq: u64,
}

impl Default for VirtualBus {
    fn default() -> Self {
        Self::new(DEFAULT_BITRATE)
    }
}

impl VirtualBus {
    pub fn new(bitrate: u32) -> Self {
        Self::with_queue_depth(bitrate, DEFAULT_QUEUE_DEPTH)
    }

    pub fn with_queue_depth(bitrate: u32, queue_depth: usize) -> Self {
        assert!(bitrate > 0, "bitrate must be positive");
        Self {
            bitrate,
            queue_depth,
            clock: 0,
            ports: Vec::new(),
            in_flight: None,
            busy: VecDeque::new(),
            events: Vec::new(),
            idle_reported: true,
            seq: 0,
        }
    }

    pub fn bitrate(&self) -> u32 {
        self.bitrate
    }

    pub fn clock(&self) -> Micros {
        self.clock
    }

    pub fn attach(&mut self) -> PortId {
        self.ports.push(Port {
            attached: true,
            queue: Vec::new(),
            stats: PortStats::default(),
        });
        PortId(self.ports.len() - 1)
    }

    /// Detaches a port. Its queued frames are dropped; a frame already on
    /// the wire still completes.
    pub fn detach(&mut self, port: PortId) -> Result<(), BusError> {
        let p = self.port_mut(port)?;
        p.attached = false;
        p.stats.dropped += p.queue.len() as u64;
        p.queue.clear();
        Ok(())
    }

    pub fn is_attached(&self, port: PortId) -> bool {
        self.ports.get(port.0).is_some_and(|p| p.attached)
    }

    fn port_mut(&mut self, port: PortId) -> Result<&mut Port, BusError> {
        match self.ports.get_mut(port.0) {
            Some(p) if p.attached => Ok(p),
            _ => Err(BusError::NotAttached(port.0)),
        }
    }

    /// Queues `frame` for transmission at the current clock.
    pub fn submit(&mut self, port: PortId, frame: CanFrame) -> Result<(), BusError> {
        let depth = self.queue_depth;
        let clock = self.clock;
        let seq = self.seq;
        let p = self.port_mut(port)?;
        p.stats.submitted += 1;
        if p.queue.len() >= depth {
            p.stats.overflowed += 1;
            self.events.push(BusEvent {
                time: clock,
                kind: BusEventKind::QueueOverflow { port, frame },
            });
            return Err(BusError::QueueOverflow {
                port: port.0,
                depth,
            });
        }
        p.queue.push(Queued {
            key: arbitration_key(&frame),
            seq,
            frame,
        });
        self.seq += 1;
        Ok(())
    }

    pub fn pending(&self, port: PortId) -> usize {
        self.ports.get(port.0).map_or(0, |p| p.queue.len())
    }

    /// Drops every frame queued on `port`, returning how many.
    pub fn cancel_pending(&mut self, port: PortId) -> usize {
        let Some(p) = self.ports.get_mut(port.0) else {
            return 0;
        };
        let n = p.queue.len();
        p.queue.clear();
        p.stats.dropped += n as u64;
        n
    }

    pub fn queued(&self, port: PortId) -> impl Iterator<Item = &CanFrame> {
        self.ports
            .get(port.0)
            .into_iter()
            .flat_map(|p| p.queue.iter().map(|q| &q.frame))
    }

    pub fn stats(&self, port: PortId) -> PortStats {
        self.ports.get(port.0).map(|p| p.stats).unwrap_or_default()
    }

    /// Frame currently on the wire, with its sender.
    pub fn in_flight(&self) -> Option<(PortId, &CanFrame)> {
        self.in_flight.as_ref().map(|t| (t.port, &t.frame))
    }

    /// End time of the transmission in progress.
    pub fn next_completion(&self) -> Option<Micros> {
        self.in_flight.map(|t| t.end)
    }

    /// Starts the winning pending frame if the bus is idle.
    pub fn arbitrate(&mut self) {
        if self.in_flight.is_some() {
            return;
        }
        loop {
            let heads: Vec<(u32, u64, usize, usize)> = self
                .ports
                .iter()
                .enumerate()
                .filter(|(_, p)| p.attached)
                .filter_map(|(pi, p)| p.head().map(|qi| (p.queue[qi].key, p.queue[qi].seq, pi, qi)))
                .collect();
            let Some(&(best_key, _, _, _)) = heads.iter().min_by_key(|h| h.0) else {
                if !self.idle_reported {
                    self.idle_reported = true;
                    self.events.push(BusEvent {
                        time: self.clock,
                        kind: BusEventKind::BusIdle,
                    });
                }
                return;
            };
            let tied: Vec<&(u32, u64, usize, usize)> = heads.iter().filter(|h| h.0 == best_key).collect();
            if tied.len() > 1 {
                let ports: Vec<PortId> = tied.iter().map(|h| PortId(h.2)).collect();
                let frame = self.ports[tied[0].2].queue[tied[0].3].frame;
                for &&(_, _, pi, qi) in &tied {
                    let p = &mut self.ports[pi];
                    p.queue.remove(qi);
                    p.stats.violated += 1;
                }
                self.events.push(BusEvent {
                    time: self.clock,
                    kind: BusEventKind::ProtocolViolation { ports, frame },
                });
                continue;
            }
            let (_, _, pi, qi) = *tied[0];
            let queued = self.ports[pi].queue.remove(qi);
            let start = self.clock;
            let end = start + frame_time(&queued.frame, self.bitrate);
            self.in_flight = Some(Transmission {
                port: PortId(pi),
                frame: queued.frame,
                start,
                end,
            });
            self.idle_reported = false;
            self.events.push(BusEvent {
                time: start,
                kind: BusEventKind::ArbitrationResolved {
                    winner: PortId(pi),
                    frame: queued.frame,
                    contenders: heads.len(),
                },
            });
            return;
        }
    }

    /// Moves the clock to `t` without starting new transmissions,
    /// completing the frame in flight if it ends exactly at or before `t`.
    /// Callers must not skip past a completion followed by pending frames;
    /// [`run_until`](Self::run_until) handles that case.
    pub fn advance_to(&mut self, t: Micros) -> Result<(), BusError> {
        if t < self.clock {
            return Err(BusError::TimeRegression {
                clock: self.clock,
                target: t,
            });
        }
        if let Some(tx) = self.in_flight {
            if tx.end <= t {
                self.clock = tx.end;
                self.complete(tx);
            }
        }
        self.clock = t;
        Ok(())
    }

    fn complete(&mut self, tx: Transmission) {
        self.in_flight = None;
        self.busy.push_back((tx.start, tx.end));
        let receivers = self
            .ports
            .iter()
            .enumerate()
            .filter(|(i, p)| p.attached && *i != tx.port.0)
            .map(|(i, _)| PortId(i))
            .collect();
        if let Some(p) = self.ports.get_mut(tx.port.0) {
            p.stats.delivered += 1;
        }
        self.events.push(BusEvent {
            time: tx.end,
            kind: BusEventKind::FrameDelivered {
                sender: tx.port,
                frame: tx.frame,
                started: tx.start,
                receivers,
            },
        });
    }

    /// Runs the segment on its own (no node callbacks) until `t`, returning
    /// every event with time ≤ `t` in order.
    pub fn run_until(&mut self, t: Micros) -> Result<Vec<BusEvent>, BusError> {
        if t < self.clock {
            return Err(BusError::TimeRegression {
                clock: self.clock,
                target: t,
            });
        }
        loop {
            self.arbitrate();
            match self.in_flight {
                Some(tx) if tx.end <= t => {
                    self.clock = tx.end;
                    self.complete(tx);
                }
                _ => break,
            }
        }
        self.clock = t;
        Ok(self.drain_events())
    }

    pub fn drain_events(&mut self) -> Vec<BusEvent> {
        std::mem::take(&mut self.events)
    }

    /// Fraction of `[from, to)` during which a frame occupied the bus.
    pub fn utilization(&self, from: Micros, to: Micros) -> f64 {
        if to <= from {
            return 0.0;
        }
        let current = self.in_flight.map(|t| (t.start, t.end.min(self.clock)));
        let busy: Micros = self
            .busy
            .iter()
            .copied()
            .chain(current)
            .map(|(s, e)| e.min(to).saturating_sub(s.max(from)))
            .sum();
        busy as f64 / (to - from) as f64
    }

    /// Forgets busy intervals that ended before `before`.
    pub fn prune_history(&mut self, before: Micros) {
        while self.busy.front().is_some_and(|&(_, e)| e < before) {
            self.busy.pop_front();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(id: u32, len: usize) -> CanFrame {
        CanFrame::new(id, &vec![0xA5; len]).unwrap()
    }

    fn delivered(events: &[BusEvent]) -> Vec<(Micros, u32)> {
        events
            .iter()
            .filter_map(|e| match &e.kind {
                BusEventKind::FrameDelivered { frame, .. } => Some((e.time, frame.id())),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn broadcast_reaches_every_other_node_once() {
        let mut bus = VirtualBus::default();
        let a = bus.attach();
        let b = bus.attach();
        let c = bus.attach();
        bus.submit(a, frame(0x130, 5)).unwrap();
        let events = bus.run_until(10_000).unwrap();
        let receivers: Vec<_> = events
            .iter()
            .filter_map(|e| match &e.kind {
                BusEventKind::FrameDelivered { receivers, .. } => Some(receivers.clone()),
                _ => None,
            })
            .collect();
        assert_eq!(receivers, vec![vec![b, c]]);
    }

    #[test]
    fn lone_node_has_no_receivers() {
        let mut bus = VirtualBus::default();
        let a = bus.attach();
        bus.submit(a, frame(0x130, 5)).unwrap();
        let events = bus.run_until(10_000).unwrap();
        assert!(events.iter().any(|e| matches!(
            &e.kind,
            BusEventKind::FrameDelivered { receivers, .. } if receivers.is_empty()
        )));
    }

    #[test]
    fn detached_node_misses_later_frames() {
        let mut bus = VirtualBus::default();
        let a = bus.attach();
        let b = bus.attach();
        bus.submit(a, frame(0x100, 8)).unwrap();
        let first = bus.run_until(5_000).unwrap();
        bus.detach(b).unwrap();
        bus.submit(a, frame(0x101, 8)).unwrap();
        let second = bus.run_until(10_000).unwrap();
        let count_b = |ev: &[BusEvent]| {
            ev.iter()
                .filter(|e| matches!(&e.kind, BusEventKind::FrameDelivered { receivers, .. } if receivers.contains(&b)))
                .count()
        };
        assert_eq!(count_b(&first), 1);
        assert_eq!(count_b(&second), 0);
        assert_eq!(bus.submit(b, frame(1, 1)), Err(BusError::NotAttached(b.0)));
    }

    #[test]
    fn idle_bus_delivers_after_one_frame_time() {
        let mut bus = VirtualBus::default();
        let a = bus.attach();
        bus.attach();
        let f = frame(0x130, 5);
        bus.submit(a, f).unwrap();
        let events = bus.run_until(1_000_000).unwrap();
        assert_eq!(delivered(&events), vec![(frame_time(&f, 100_000), 0x130)]);
    }

    #[test]
    fn simultaneous_submissions_go_out_in_priority_order() {
        let mut bus = VirtualBus::default();
        let a = bus.attach();
        let b = bus.attach();
        bus.submit(b, frame(0x1A6, 8)).unwrap();
        bus.submit(a, frame(0x0A8, 8)).unwrap();
        let ids: Vec<u32> = delivered(&bus.run_until(100_000).unwrap()).into_iter().map(|d| d.1).collect();
        assert_eq!(ids, vec![0x0A8, 0x1A6]);
    }

    #[test]
    fn flood_of_zero_ids_starves_other_ports() {
        let mut bus = VirtualBus::default();
        let attacker = bus.attach();
        let victim = bus.attach();
        bus.submit(victim, frame(0x1A6, 8)).unwrap();
        let mut victim_sent = false;
        let mut t = 0;
        while t < 500_000 {
            while bus.pending(attacker) < 2 {
                bus.submit(attacker, frame(0x000, 8)).unwrap();
            }
            t = bus.next_completion().unwrap_or(t + 1);
            bus.advance_to(t).unwrap();
            bus.arbitrate();
            victim_sent |= bus
                .drain_events()
                .iter()
                .any(|e| matches!(&e.kind, BusEventKind::FrameDelivered { sender, .. } if *sender == victim));
        }
        assert!(!victim_sent);
        assert!(bus.utilization(1_000, 500_000) >= 0.99);
        assert_eq!(bus.pending(victim), 1);
    }

    #[test]
    fn overflow_is_reported_and_counted() {
        let mut bus = VirtualBus::with_queue_depth(100_000, 2);
        let a = bus.attach();
        bus.submit(a, frame(1, 1)).unwrap();
        bus.submit(a, frame(2, 1)).unwrap();
        assert_eq!(
            bus.submit(a, frame(3, 1)),
            Err(BusError::QueueOverflow { port: 0, depth: 2 })
        );
        let events = bus.drain_events();
        assert!(matches!(events[0].kind, BusEventKind::QueueOverflow { .. }));
        let s = bus.stats(a);
        assert_eq!((s.submitted, s.overflowed), (3, 1));
    }

    #[test]
    fn identical_ids_from_two_ports_violate_protocol() {
        let mut bus = VirtualBus::default();
        let a = bus.attach();
        let b = bus.attach();
        bus.submit(a, frame(0x0C0, 2)).unwrap();
        bus.submit(b, frame(0x0C0, 2)).unwrap();
        bus.submit(b, frame(0x0D7, 2)).unwrap();
        let events = bus.run_until(100_000).unwrap();
        assert!(matches!(
            &events[0].kind,
            BusEventKind::ProtocolViolation { ports, .. } if ports == &vec![a, b]
        ));
        assert_eq!(delivered(&events).iter().map(|d| d.1).collect::<Vec<_>>(), vec![0x0D7]);
    }

    #[test]
    fn empty_bus_only_advances_clock() {
        let mut bus = VirtualBus::default();
        bus.attach();
        assert!(bus.run_until(1_000_000).unwrap().is_empty());
        assert_eq!(bus.clock(), 1_000_000);
        assert_eq!(bus.utilization(0, 1_000_000), 0.0);
        assert!(bus.run_until(10).is_err());
    }

    #[test]
    fn split_run_equals_single_run() {
        let script = |bus: &mut VirtualBus| {
            let a = bus.attach();
            let b = bus.attach();
            for i in 0..10 {
                bus.submit(if i % 2 == 0 { a } else { b }, frame(0x100 + i, (i % 9) as usize)).unwrap();
            }
        };
        let mut one = VirtualBus::default();
        script(&mut one);
        let all = one.run_until(20_000).unwrap();
        let mut two = VirtualBus::default();
        script(&mut two);
        let mut split = two.run_until(7_321).unwrap();
        split.extend(two.run_until(20_000).unwrap());
        assert_eq!(all, split);
    }

    #[test]
    fn single_frame_utilization_is_frame_time_over_window() {
        let mut bus = VirtualBus::default();
        let a = bus.attach();
        let f = CanFrame::new(0x130, &[0x45, 0, 0, 0, 0]).unwrap();
        bus.submit(a, f).unwrap();
        bus.run_until(100_000).unwrap();
        let expected = frame_time(&f, 100_000) as f64 / 100_000.0;
        assert!((bus.utilization(0, 100_000) - expected).abs() < 1e-12);
    }
}
