//! Link-layer attacks driven through conflicting peripherals: targeted DoS,
//! complete DoS and selective arbitration denial. Legitimate nodes run the
//! unmodified controller; the attacker is an injector on the bus.

mod injector;
mod technique;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::{parse_hex_id, BusEvent, ErrorRole, ErrorState, EventKind, NodeId, Scenario, ScenarioError, World};
use crate::codec::{encode_frame, CanFrame, Field};
use crate::periph::{DominantHold, I2cTimings};
use crate::synth::Protocol;

pub use injector::{ArbitrationDenialActor, InjectionCounter, TargetedDosActor};
pub use technique::{burst_emission, check_free_writer, check_reader, victim_prefix};

pub const DEFAULT_FLAG_BITS: usize = 6;

/// Ticks simulated after the last hit: superposed flags (12) plus the delimiter (8).
const SETTLE_TICKS: u64 = 20;

/// An 11-bit identifier written as hex text (`1A2` or `0x1A2`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct HexId(pub u16);

impl fmt::Display for HexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:03X}", self.0)
    }
}

impl std::str::FromStr for HexId {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_hex_id(s).map(HexId).ok_or_else(|| AttackError::BadId(s.to_string()))
    }
}

impl TryFrom<String> for HexId {
    type Error = AttackError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<HexId> for String {
    fn from(id: HexId) -> String {
        id.to_string()
    }
}

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("{reader} reader cannot match the victim: {reason}")]
    ReaderIncapable { reader: Protocol, reason: String },
    #[error("{writer} writer cannot inject: {reason}")]
    WriterIncapable { writer: Protocol, reason: String },
    #[error("flag_bits must be at least 1")]
    FlagBits,
    #[error("victim identifier {0} has no recessive ID bit to overwrite")]
    NoRecessiveIdBit(HexId),
    #[error("no node transmits identifier {0}")]
    VictimNotFound(HexId),
    #[error("bad identifier {0:?}")]
    BadId(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

fn default_flag_bits() -> usize {
    DEFAULT_FLAG_BITS
}

fn default_repetitions() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AttackKind {
    TargetedDos {
        victim: HexId,
        #[serde(default = "default_flag_bits")]
        flag_bits: usize,
        #[serde(default = "default_repetitions")]
        repetitions: usize,
    },
    CompleteDos {
        #[serde(default)]
        start: u64,
        duration: u64,
    },
    ArbitrationDenial {
        victim: HexId,
        #[serde(default = "default_repetitions")]
        repetitions: usize,
    },
}

impl AttackKind {
    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::TargetedDos { .. } => "targeted-dos",
            AttackKind::CompleteDos { .. } => "complete-dos",
            AttackKind::ArbitrationDenial { .. } => "arbitration-denial",
        }
    }
}

fn spi() -> Protocol {
    Protocol::Spi
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    #[serde(flatten)]
    pub kind: AttackKind,
    /// Peripheral on the RX-conflicting pin.
    #[serde(default = "spi")]
    pub reader: Protocol,
    /// Peripheral on the TX-conflicting pin.
    #[serde(default = "spi")]
    pub writer: Protocol,
    /// I2C writer timings; the LPC11C24 measurements when absent.
    pub timings: Option<I2cTimings>,
}

/// Background traffic plus an `[attack]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackScenario {
    #[serde(flatten)]
    pub traffic: Scenario,
    pub attack: AttackSpec,
}

impl AttackScenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(Box::new(e)))
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.into(), source })?;
        let mut s: AttackScenario =
            toml::from_str(&text).map_err(|e| ScenarioError::Toml { path: path.into(), source: Box::new(e) })?;
        s.traffic.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub kind: String,
    pub seed: u64,
    pub victim_id: Option<HexId>,
    pub victim_final_state: Option<ErrorState>,
    pub victim_tec: Option<u32>,
    pub injections_performed: usize,
    /// Error flags raised on frames with any identifier other than the victim's.
    pub collateral_errors: usize,
    pub ticks_elapsed: u64,
    pub frames_completed: usize,
    /// Complete DoS only: frames finished while the bus was held.
    pub frames_completed_during_attack: Option<usize>,
    pub victim_arbitration_losses: usize,
}

/// Outcome plus everything needed to replay or audit the run.
pub struct AttackRun {
    pub outcome: AttackOutcome,
    pub events: Vec<BusEvent>,
    pub id_owners: BTreeMap<u16, String>,
    pub world: World,
}

pub fn run_attack(scenario: &AttackScenario) -> Result<AttackRun, AttackError> {
    match scenario.attack.kind {
        AttackKind::TargetedDos { .. } => run_targeted_dos(scenario),
        AttackKind::CompleteDos { .. } => run_complete_dos(scenario),
        AttackKind::ArbitrationDenial { .. } => run_arbitration_denial(scenario),
    }
}

fn victim_node(world: &World, owners: &BTreeMap<u16, String>, victim: HexId) -> Result<NodeId, AttackError> {
    owners.get(&victim.0).and_then(|name| world.node_by_name(name)).ok_or(AttackError::VictimNotFound(victim))
}

fn collateral(events: &[BusEvent], victim: Option<u16>) -> usize {
    events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::ErrorFlag { frame_id, .. } if victim.is_none() || frame_id != victim))
        .count()
}

fn completed(events: &[BusEvent], window: Option<(u64, u64)>) -> usize {
    events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::FrameComplete { .. }))
        .filter(|e| window.is_none_or(|(a, b)| e.tick >= a && e.tick < b))
        .count()
}

fn arbitration_losses(events: &[BusEvent], node: NodeId) -> usize {
    events.iter().filter(|e| matches!(e.kind, EventKind::ArbitrationLoss { node: n, .. } if n == node)).count()
}

struct Prepared {
    world: World,
    owners: BTreeMap<u16, String>,
}

fn prepare(scenario: &AttackScenario) -> Result<Prepared, AttackError> {
    let mut world = scenario.traffic.build()?;
    world.record_bus();
    let owners = scenario.traffic.id_owners()?;
    Ok(Prepared { world, owners })
}

/// Hits every transmission of the victim until `repetitions` injections have
/// each drawn the victim's error flag, or the victim reaches bus-off.
pub fn run_targeted_dos(scenario: &AttackScenario) -> Result<AttackRun, AttackError> {
    let AttackKind::TargetedDos { victim, flag_bits, repetitions } = scenario.attack.kind else {
        panic!("run_targeted_dos needs a targeted-dos scenario");
    };
    let spec = &scenario.attack;
    let prefix = victim_prefix(victim.0);
    check_reader(spec.reader, &prefix)?;
    let timings = spec.timings.unwrap_or(I2cTimings::LPC11C24);
    let burst = burst_emission(spec.writer, flag_bits, &timings, scenario.traffic.bit_time_us)?;

    let Prepared { mut world, owners } = prepare(scenario)?;
    let target = victim_node(&world, &owners, victim)?;
    let done: InjectionCounter = Arc::new(AtomicUsize::new(0));
    world.attach_injector(
        format!("{}>{}", spec.reader, spec.writer),
        Box::new(TargetedDosActor::new(prefix, burst, repetitions, done.clone())),
    );

    let mut events = Vec::new();
    let mut hits = 0usize;
    if repetitions > 0 {
        world.run_until(scenario.traffic.duration, &mut events, |w, new| {
            hits += new
                .iter()
                .filter(|e| {
                    matches!(e.kind, EventKind::ErrorFlag { node, role: ErrorRole::Transmitter, .. } if node == target)
                })
                .count();
            w.node(target).error_state() == ErrorState::BusOff || hits >= repetitions
        });
        // Let the error flags and delimiter finish; too short for any frame to complete.
        world.run_until(SETTLE_TICKS, &mut events, |_, _| false);
    }

    let node = world.node(target);
    let outcome = AttackOutcome {
        kind: scenario.attack.kind.name().into(),
        seed: scenario.traffic.seed,
        victim_id: Some(victim),
        victim_final_state: Some(node.error_state()),
        victim_tec: Some(node.tec()),
        injections_performed: done.load(Ordering::SeqCst),
        collateral_errors: collateral(&events, Some(victim.0)),
        ticks_elapsed: world.tick(),
        frames_completed: completed(&events, None),
        frames_completed_during_attack: None,
        victim_arbitration_losses: arbitration_losses(&events, target),
    };
    Ok(AttackRun { outcome, events, id_owners: owners, world })
}

/// Holds the bus dominant for `duration` ticks from `start`, then lets the
/// traffic run to the end of the scenario.
pub fn run_complete_dos(scenario: &AttackScenario) -> Result<AttackRun, AttackError> {
    let AttackKind::CompleteDos { start, duration } = scenario.attack.kind else {
        panic!("run_complete_dos needs a complete-dos scenario");
    };
    if duration > 0 {
        check_free_writer(scenario.attack.writer, "hold the bus dominant")?;
    }
    let Prepared { mut world, owners } = prepare(scenario)?;
    if duration > 0 {
        world.attach_injector(format!("{}-hold", scenario.attack.writer), Box::new(DominantHold { start, duration }));
    }
    let events = world.run(scenario.traffic.duration);
    let outcome = AttackOutcome {
        kind: scenario.attack.kind.name().into(),
        seed: scenario.traffic.seed,
        victim_id: None,
        victim_final_state: None,
        victim_tec: None,
        injections_performed: usize::from(duration > 0),
        collateral_errors: collateral(&events, None),
        ticks_elapsed: world.tick(),
        frames_completed: completed(&events, None),
        frames_completed_during_attack: Some(completed(&events, Some((start, start + duration)))),
        victim_arbitration_losses: 0,
    };
    Ok(AttackRun { outcome, events, id_owners: owners, world })
}

/// The victim frame with its last recessive identifier bit made dominant,
/// plus the physical index of that bit.
pub fn takeover_frame(victim: HexId) -> Result<(CanFrame, usize), AttackError> {
    let frame = CanFrame::data_frame(victim.0, &[]).map_err(|_| AttackError::BadId(victim.to_string()))?;
    let (stream, layout) = encode_frame(&frame).expect("valid frame");
    let id_range = layout.range(Field::Id);
    let bit = id_range
        .clone()
        .rev()
        .find(|&u| stream.bits()[layout.to_physical(u)].is_recessive())
        .ok_or(AttackError::NoRecessiveIdBit(victim))?;
    let shift = id_range.end - 1 - bit;
    let takeover = CanFrame::data_frame(victim.0 & !(1 << shift), &[]).expect("smaller identifier");
    Ok((takeover, layout.to_physical(bit)))
}

/// Steals arbitration from the victim `repetitions` times by overwriting one
/// recessive ID bit and finishing a forged frame.
pub fn run_arbitration_denial(scenario: &AttackScenario) -> Result<AttackRun, AttackError> {
    let AttackKind::ArbitrationDenial { victim, repetitions } = scenario.attack.kind else {
        panic!("run_arbitration_denial needs an arbitration-denial scenario");
    };
    let spec = &scenario.attack;
    let (takeover, at) = takeover_frame(victim)?;
    let (stream, layout) = encode_frame(&takeover).expect("valid frame");
    check_reader(spec.reader, &victim_prefix(victim.0)[..at])?;
    check_free_writer(spec.writer, "forge a complete frame")?;

    let Prepared { mut world, owners } = prepare(scenario)?;
    let target = victim_node(&world, &owners, victim)?;
    let done: InjectionCounter = Arc::new(AtomicUsize::new(0));
    let ack = layout.physical_range(Field::AckSlot).start;
    world.attach_injector(
        format!("{}>{}", spec.reader, spec.writer),
        Box::new(ArbitrationDenialActor::new(stream.into_bits(), at, ack, repetitions, done.clone())),
    );
    let events = world.run(scenario.traffic.duration);

    let node = world.node(target);
    let outcome = AttackOutcome {
        kind: scenario.attack.kind.name().into(),
        seed: scenario.traffic.seed,
        victim_id: Some(victim),
        victim_final_state: Some(node.error_state()),
        victim_tec: Some(node.tec()),
        injections_performed: done.load(Ordering::SeqCst),
        collateral_errors: collateral(&events, Some(victim.0)),
        ticks_elapsed: world.tick(),
        frames_completed: completed(&events, None),
        frames_completed_during_attack: None,
        victim_arbitration_losses: arbitration_losses(&events, target),
    };
    Ok(AttackRun { outcome, events, id_owners: owners, world })
}
