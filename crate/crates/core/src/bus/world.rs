use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::event::{BusEvent, EventKind, NodeId};
use super::node::Node;
use crate::codec::{Bit, CanFrame};
use crate::periph::{BitReceiver, BitSender};

/// Anything attached to the bus outside the controller rules.
pub trait BusActor: BitSender + BitReceiver + Send {}

impl<T: BitSender + BitReceiver + Send> BusActor for T {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusConfig {
    /// Duration of one tick in microseconds.
    pub bit_time_us: f64,
    pub seed: u64,
}

impl Default for BusConfig {
    fn default() -> Self {
        Self { bit_time_us: 1.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("bit time must be positive, got {0}")]
    BitTime(f64),
}

impl BusConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.bit_time_us > 0.0 && self.bit_time_us.is_finite() {
            Ok(())
        } else {
            Err(ConfigError::BitTime(self.bit_time_us))
        }
    }

    pub fn baudrate(&self) -> f64 {
        1e6 / self.bit_time_us
    }
}

/// Wired-AND resolution: dominant if any output is dominant.
pub fn resolve_bus(outputs: &[Bit]) -> Bit {
    outputs.iter().fold(Bit::Recessive, |acc, &b| acc & b)
}

struct Injector {
    name: String,
    actor: Box<dyn BusActor>,
    last: Bit,
}

/// Bit-synchronous bus with controller nodes and rule-exempt injectors.
pub struct World {
    config: BusConfig,
    tick: u64,
    nodes: Vec<Node>,
    injectors: Vec<Injector>,
    bus_log: Option<Vec<Bit>>,
}

impl World {
    pub fn new(config: BusConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self { config, tick: 0, nodes: Vec::new(), injectors: Vec::new(), bus_log: None })
    }

    pub fn config(&self) -> &BusConfig {
        &self.config
    }

    pub fn add_node(&mut self, node: Node) -> NodeId {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    pub fn attach_injector(&mut self, name: impl Into<String>, actor: Box<dyn BusActor>) -> usize {
        self.injectors.push(Injector { name: name.into(), actor, last: Bit::Recessive });
        self.injectors.len() - 1
    }

    /// Keep every resolved bus bit from now on.
    pub fn record_bus(&mut self) {
        self.bus_log.get_or_insert_with(Vec::new);
    }

    pub fn bus_log(&self) -> Option<&[Bit]> {
        self.bus_log.as_deref()
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut Node {
        &mut self.nodes[id]
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name() == name)
    }

    /// Advances one bit time and returns the resolved bus level.
    pub fn step_into(&mut self, events: &mut Vec<BusEvent>) -> Bit {
        let tick = self.tick;
        let start = events.len();
        let mut bus = Bit::Recessive;
        for (i, node) in self.nodes.iter_mut().enumerate() {
            bus = bus & node.drive(i, tick, events);
        }
        for inj in &mut self.injectors {
            let out = inj.actor.drive(tick);
            if out.is_dominant() && inj.last.is_recessive() {
                events.push(BusEvent { tick, kind: EventKind::Injection { actor: inj.name.clone() } });
            }
            inj.last = out;
            bus = bus & out;
        }
        for (i, node) in self.nodes.iter_mut().enumerate() {
            node.observe(i, tick, bus, events);
        }
        for inj in &mut self.injectors {
            inj.actor.observe(tick, bus);
        }
        self.report_injected_frames(tick, start, events);
        if let Some(log) = &mut self.bus_log {
            log.push(bus);
        }
        self.tick += 1;
        bus
    }

    /// Without a controller transmitter, receivers completing a frame report it once.
    fn report_injected_frames(&self, tick: u64, start: usize, events: &mut Vec<BusEvent>) {
        let has_tx_complete =
            events[start..].iter().any(|e| matches!(e.kind, EventKind::FrameComplete { transmitter: Some(_), .. }));
        if has_tx_complete {
            return;
        }
        let mut frame: Option<CanFrame> = None;
        for node in &self.nodes {
            if node.last_rx_tick() == Some(tick) {
                frame = node.received().last().cloned();
                break;
            }
        }
        if let Some(frame) = frame {
            events.push(BusEvent { tick, kind: EventKind::FrameComplete { frame, transmitter: None } });
        }
    }

    pub fn step(&mut self) -> Vec<BusEvent> {
        let mut events = Vec::new();
        self.step_into(&mut events);
        events
    }

    /// Runs `ticks` bit times, collecting events.
    pub fn run(&mut self, ticks: u64) -> Vec<BusEvent> {
        let mut events = Vec::new();
        for _ in 0..ticks {
            self.step_into(&mut events);
        }
        events
    }

    /// Runs until `stop` returns true or `max_ticks` elapse; returns whether `stop` fired.
    pub fn run_until(
        &mut self,
        max_ticks: u64,
        events: &mut Vec<BusEvent>,
        mut stop: impl FnMut(&World, &[BusEvent]) -> bool,
    ) -> bool {
        for _ in 0..max_ticks {
            let start = events.len();
            self.step_into(events);
            if stop(self, &events[start..]) {
                return true;
            }
        }
        false
    }
}
