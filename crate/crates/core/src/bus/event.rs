use std::fmt;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::counters::ErrorState;
use crate::codec::{CanErrorKind, CanFrame};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlagKind {
    /// Six dominant bits.
    Active,
    /// Six recessive bits.
    Passive,
    /// The error pushed the node into bus-off, so no flag was sent.
    Suppressed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorRole {
    Transmitter,
    Receiver,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EventKind {
    FrameStart { node: NodeId, id: u16 },
    ArbitrationLoss { node: NodeId, id: u16 },
    Ack { node: NodeId, id: u16 },
    ErrorFlag { node: NodeId, flag: FlagKind, role: ErrorRole, error: CanErrorKind, frame_id: Option<u16> },
    FrameComplete { frame: CanFrame, transmitter: Option<NodeId> },
    StateChange { node: NodeId, from: ErrorState, to: ErrorState },
    Injection { actor: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusEvent {
    pub tick: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl fmt::Display for BusEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>10} ", self.tick)?;
        match &self.kind {
            EventKind::FrameStart { node, id } => write!(f, "node {node} starts {id:03X}"),
            EventKind::ArbitrationLoss { node, id } => write!(f, "node {node} loses arbitration with {id:03X}"),
            EventKind::Ack { node, id } => write!(f, "node {node} acknowledged on {id:03X}"),
            EventKind::ErrorFlag { node, flag, role, error, frame_id } => {
                write!(f, "node {node} {flag:?} error flag as {role:?}: {error}")?;
                if let Some(id) = frame_id {
                    write!(f, " on {id:03X}")?;
                }
                Ok(())
            }
            EventKind::FrameComplete { frame, transmitter: Some(node) } => {
                write!(f, "frame {frame} complete from node {node}")
            }
            EventKind::FrameComplete { frame, transmitter: None } => {
                write!(f, "frame {frame} complete (no controller transmitter)")
            }
            EventKind::StateChange { node, from, to } => write!(f, "node {node} {from} -> {to}"),
            EventKind::Injection { actor } => write!(f, "injection by {actor}"),
        }
    }
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: Write>(mut out: W, events: &[BusEvent]) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a JSON-lines trace; blank lines are skipped.
pub fn read_jsonl<R: BufRead>(input: R) -> io::Result<Vec<BusEvent>> {
    let mut events = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1)))?;
        events.push(event);
    }
    Ok(events)
}
