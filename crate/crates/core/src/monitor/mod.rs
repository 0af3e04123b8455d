//! Defender-side view of the bus: shadow transmit error counters rebuilt from
//! bus events, and a detector for short dominant injections in raw traces.

mod inject;

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::{BusEvent, ErrorRole, ErrorState, EventKind, BUS_OFF_TEC, PASSIVE_THRESHOLD};

pub use inject::{detect_short_injection, Finding, FINDING_LABEL, MIN_BURST_BITS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MonitorError {
    #[error("event at tick {got} arrived after tick {last}")]
    OutOfOrderEvent { last: u64, got: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AlertKind {
    ErrorPassive,
    BusOff,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alert {
    pub tick: u64,
    pub alert: AlertKind,
    pub node: String,
    /// Identifier whose transmission error crossed the threshold, as hex.
    pub id: String,
    pub shadow_tec: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShadowNode {
    pub shadow_tec: u32,
    pub error_flags: u64,
    pub state: Option<ErrorState>,
}

impl ShadowNode {
    fn state(&self) -> ErrorState {
        self.state.unwrap_or(ErrorState::ErrorActive)
    }
}

/// Shadow counters per transmitter. Transmitters are identified through the
/// frame identifiers they send, via the ID to node map; the node index in
/// events is used only to match bus-off recovery to a name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowState {
    owners: BTreeMap<u16, String>,
    node_names: Vec<String>,
    pub nodes: BTreeMap<String, ShadowNode>,
    last_tick: Option<u64>,
}

impl ShadowState {
    pub fn new(owners: BTreeMap<u16, String>, node_names: Vec<String>) -> Self {
        let mut nodes = BTreeMap::new();
        for name in owners.values() {
            nodes.entry(name.clone()).or_insert_with(ShadowNode::default);
        }
        Self { owners, node_names, nodes, last_tick: None }
    }

    /// Owner of an identifier; unknown identifiers get a synthetic name.
    fn owner(&self, id: u16) -> String {
        self.owners.get(&id).cloned().unwrap_or_else(|| format!("id-{id:03X}"))
    }

    pub fn tec(&self, node: &str) -> u32 {
        self.nodes.get(node).map_or(0, |n| n.shadow_tec)
    }

    pub fn state(&self, node: &str) -> ErrorState {
        self.nodes.get(node).map_or(ErrorState::ErrorActive, ShadowNode::state)
    }
}

/// Applies one event to the shadow counters and returns any alerts it raises.
pub fn observe(event: &BusEvent, state: &mut ShadowState) -> Result<Vec<Alert>, MonitorError> {
    if let Some(last) = state.last_tick {
        if event.tick < last {
            return Err(MonitorError::OutOfOrderEvent { last, got: event.tick });
        }
    }
    state.last_tick = Some(event.tick);
    let mut alerts = Vec::new();
    match &event.kind {
        EventKind::ErrorFlag { role: ErrorRole::Transmitter, frame_id: Some(id), .. } => {
            let name = state.owner(*id);
            let n = state.nodes.entry(name.clone()).or_default();
            n.error_flags += 1;
            if n.state() == ErrorState::BusOff {
                return Ok(alerts);
            }
            let before = n.shadow_tec;
            n.shadow_tec = (n.shadow_tec + 8).min(BUS_OFF_TEC);
            if before <= PASSIVE_THRESHOLD && n.shadow_tec > PASSIVE_THRESHOLD && n.shadow_tec < BUS_OFF_TEC {
                n.state = Some(ErrorState::ErrorPassive);
                alerts.push(Alert {
                    tick: event.tick,
                    alert: AlertKind::ErrorPassive,
                    node: name.clone(),
                    id: format!("{id:03X}"),
                    shadow_tec: n.shadow_tec,
                });
            }
            if n.shadow_tec >= BUS_OFF_TEC {
                n.state = Some(ErrorState::BusOff);
                alerts.push(Alert {
                    tick: event.tick,
                    alert: AlertKind::BusOff,
                    node: name,
                    id: format!("{id:03X}"),
                    shadow_tec: n.shadow_tec,
                });
            }
        }
        EventKind::FrameComplete { frame, transmitter: Some(_) } => {
            let name = state.owner(frame.id());
            let n = state.nodes.entry(name).or_default();
            if n.state() != ErrorState::BusOff {
                n.shadow_tec = n.shadow_tec.saturating_sub(1);
                if n.shadow_tec <= PASSIVE_THRESHOLD {
                    n.state = Some(ErrorState::ErrorActive);
                }
            }
        }
        EventKind::StateChange { node, from: ErrorState::BusOff, .. } => {
            if let Some(name) = state.node_names.get(*node).cloned() {
                let n = state.nodes.entry(name).or_default();
                n.shadow_tec = 0;
                n.state = Some(ErrorState::ErrorActive);
            }
        }
        _ => {}
    }
    Ok(alerts)
}

/// Runs a whole trace through a fresh shadow state.
pub fn monitor_trace(
    events: &[BusEvent],
    owners: BTreeMap<u16, String>,
    node_names: Vec<String>,
) -> Result<(ShadowState, Vec<Alert>), MonitorError> {
    let mut state = ShadowState::new(owners, node_names);
    let mut alerts = Vec::new();
    for e in events {
        alerts.extend(observe(e, &mut state)?);
    }
    Ok((state, alerts))
}

pub fn write_alerts_jsonl<W: Write>(mut out: W, alerts: &[Alert]) -> io::Result<()> {
    for a in alerts {
        serde_json::to_writer(&mut out, a)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Node names in world order, for mapping recovery events.
pub fn node_names(world: &crate::bus::World) -> Vec<String> {
    world.nodes().iter().map(|n| n.name().to_string()).collect()
}
