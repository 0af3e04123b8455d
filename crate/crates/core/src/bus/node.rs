use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::counters::{Counters, CountingRole, ErrorState, Outcome};
use super::event::{BusEvent, ErrorRole, EventKind, FlagKind, NodeId};
use crate::codec::{encode_frame, Bit, Bitstream, CanErrorKind, CanFrame, DecodeStatus, Field, FrameDecoder};

pub const ERROR_FLAG_BITS: u8 = 6;
pub const ERROR_DELIMITER_BITS: u8 = 8;
pub const INTERMISSION_BITS: u8 = 3;
pub const SUSPEND_BITS: u8 = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
struct Pending {
    release: u64,
    seq: u64,
    frame: CanFrame,
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.release, self.seq).cmp(&(other.release, other.seq))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
struct Transmission {
    seq: u64,
    frame: CanFrame,
    bits: Bitstream,
    arbitration_end: usize,
    ack_slot: usize,
    pos: usize,
    decoder: FrameDecoder,
}

/// Controller micro-state.
#[derive(Debug, Clone)]
enum Phase {
    Idle,
    Transmitting(Box<Transmission>),
    Receiving(Box<FrameDecoder>),
    ErrorFlag { remaining: u8, passive: bool, pending_rec: bool, was_tx: bool },
    ErrorDelimiter { recessive: u8, pending_rec: bool, was_tx: bool },
    Intermission { remaining: u8, was_tx: bool },
    Suspend { remaining: u8 },
    BusOff,
}

/// Coarse phase name, for inspection and logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhaseKind {
    Idle,
    Transmitting,
    Receiving,
    ErrorFlag,
    ErrorDelimiter,
    Intermission,
    Suspend,
    BusOff,
}

/// A standard CAN controller: arbitration, stuffing checks, ACK, error
/// signalling and fault confinement.
#[derive(Debug, Clone)]
pub struct Node {
    name: String,
    counters: Counters,
    phase: Phase,
    future: BinaryHeap<Reverse<Pending>>,
    ready: Vec<Pending>,
    next_seq: u64,
    received: Vec<CanFrame>,
    last_rx: Option<u64>,
    sent: Vec<CanFrame>,
}

impl Node {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            counters: Counters::new(),
            phase: Phase::Idle,
            future: BinaryHeap::new(),
            ready: Vec::new(),
            next_seq: 0,
            received: Vec::new(),
            last_rx: None,
            sent: Vec::new(),
        }
    }

    pub fn with_counters(mut self, counters: Counters) -> Self {
        self.counters = counters;
        if counters.state() == ErrorState::BusOff {
            self.phase = Phase::BusOff;
        }
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn tec(&self) -> u32 {
        self.counters.tec()
    }

    pub fn rec(&self) -> u32 {
        self.counters.rec()
    }

    pub fn error_state(&self) -> ErrorState {
        self.counters.state()
    }

    /// Frames this node decoded successfully as a receiver.
    pub fn received(&self) -> &[CanFrame] {
        &self.received
    }

    /// Tick of the most recent successful reception.
    pub fn last_rx_tick(&self) -> Option<u64> {
        self.last_rx
    }

    /// Frames this node transmitted successfully.
    pub fn sent(&self) -> &[CanFrame] {
        &self.sent
    }

    /// Frames released or scheduled but not yet sent.
    pub fn pending(&self) -> usize {
        self.future.len() + self.ready.len()
    }

    pub fn phase(&self) -> PhaseKind {
        match self.phase {
            Phase::Idle => PhaseKind::Idle,
            Phase::Transmitting(_) => PhaseKind::Transmitting,
            Phase::Receiving(_) => PhaseKind::Receiving,
            Phase::ErrorFlag { .. } => PhaseKind::ErrorFlag,
            Phase::ErrorDelimiter { .. } => PhaseKind::ErrorDelimiter,
            Phase::Intermission { .. } => PhaseKind::Intermission,
            Phase::Suspend { .. } => PhaseKind::Suspend,
            Phase::BusOff => PhaseKind::BusOff,
        }
    }

    /// Queues a frame for transmission no earlier than `release`.
    pub fn enqueue(&mut self, release: u64, frame: CanFrame) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.future.push(Reverse(Pending { release, seq, frame }));
    }

    fn release_due(&mut self, tick: u64) {
        while let Some(Reverse(p)) = self.future.peek() {
            if p.release > tick {
                break;
            }
            let Reverse(p) = self.future.pop().expect("peeked");
            self.ready.push(p);
        }
    }

    /// Highest-priority released frame: lowest ID, then oldest.
    fn next_ready(&self) -> Option<&Pending> {
        self.ready.iter().min_by_key(|p| (p.frame.id(), p.seq))
    }

    /// The bit this controller drives during `tick`.
    pub fn drive(&mut self, id: NodeId, tick: u64, events: &mut Vec<BusEvent>) -> Bit {
        if matches!(self.phase, Phase::Idle) {
            self.release_due(tick);
            if let Some(p) = self.next_ready() {
                let frame = p.frame.clone();
                let seq = p.seq;
                let (bits, layout) = encode_frame(&frame).expect("queued frames are valid");
                let arbitration_end = layout.physical_range(Field::Rtr).end;
                let ack_slot = layout.physical_range(Field::AckSlot).start;
                events.push(BusEvent { tick, kind: EventKind::FrameStart { node: id, id: frame.id() } });
                self.phase = Phase::Transmitting(Box::new(Transmission {
                    seq,
                    frame,
                    bits,
                    arbitration_end,
                    ack_slot,
                    pos: 0,
                    decoder: FrameDecoder::new(),
                }));
            }
        }
        match &self.phase {
            Phase::Transmitting(tx) => tx.bits[tx.pos],
            Phase::Receiving(dec) => {
                let ack = dec.next_field() == Some(Field::AckSlot) && dec.crc_ok() == Some(true);
                Bit::from_level(!ack)
            }
            Phase::ErrorFlag { passive, .. } => Bit::from_level(*passive),
            _ => Bit::Recessive,
        }
    }

    /// Processes the resolved bus level for `tick`.
    pub fn observe(&mut self, id: NodeId, tick: u64, bus: Bit, events: &mut Vec<BusEvent>) {
        let phase = std::mem::replace(&mut self.phase, Phase::Idle);
        self.phase = match phase {
            Phase::Idle => self.idle_or_sof(bus),
            Phase::Transmitting(tx) => self.observe_tx(id, tick, bus, tx, events),
            Phase::Receiving(mut dec) => {
                let status = dec.push(bus);
                self.after_rx_status(id, tick, status, dec, events)
            }
            Phase::ErrorFlag { remaining, passive, pending_rec, was_tx } => {
                if remaining > 1 {
                    Phase::ErrorFlag { remaining: remaining - 1, passive, pending_rec, was_tx }
                } else {
                    Phase::ErrorDelimiter { recessive: 0, pending_rec, was_tx }
                }
            }
            Phase::ErrorDelimiter { recessive, pending_rec, was_tx } => {
                if pending_rec {
                    // A dominant bit right after our own flag means we were first to detect.
                    let role =
                        if bus.is_dominant() { CountingRole::ErrorCausingReceiver } else { CountingRole::Receiver };
                    self.count(id, tick, role, Outcome::Error, events);
                }
                let recessive = if bus.is_recessive() { recessive + 1 } else { 0 };
                if recessive >= ERROR_DELIMITER_BITS {
                    Phase::Intermission { remaining: INTERMISSION_BITS, was_tx }
                } else {
                    Phase::ErrorDelimiter { recessive, pending_rec: false, was_tx }
                }
            }
            Phase::Intermission { remaining, was_tx } => {
                if bus.is_dominant() {
                    self.start_receiving(bus)
                } else if remaining > 1 {
                    Phase::Intermission { remaining: remaining - 1, was_tx }
                } else if was_tx && self.counters.state() == ErrorState::ErrorPassive {
                    Phase::Suspend { remaining: SUSPEND_BITS }
                } else {
                    Phase::Idle
                }
            }
            Phase::Suspend { remaining } => {
                if bus.is_dominant() {
                    self.start_receiving(bus)
                } else if remaining > 1 {
                    Phase::Suspend { remaining: remaining - 1 }
                } else {
                    Phase::Idle
                }
            }
            Phase::BusOff => match self.counters.observe_recovery(bus) {
                Some((from, to)) => {
                    events.push(BusEvent { tick, kind: EventKind::StateChange { node: id, from, to } });
                    Phase::Idle
                }
                None => Phase::BusOff,
            },
        };
    }

    fn idle_or_sof(&mut self, bus: Bit) -> Phase {
        if bus.is_dominant() {
            self.start_receiving(bus)
        } else {
            Phase::Idle
        }
    }

    fn start_receiving(&mut self, sof: Bit) -> Phase {
        let mut dec = FrameDecoder::new();
        dec.push(sof);
        Phase::Receiving(Box::new(dec))
    }

    fn observe_tx(
        &mut self,
        id: NodeId,
        tick: u64,
        bus: Bit,
        mut tx: Box<Transmission>,
        events: &mut Vec<BusEvent>,
    ) -> Phase {
        let pos = tx.pos;
        let written = tx.bits[pos];
        let status = tx.decoder.push(bus);
        let frame_id = tx.frame.id();

        if pos == tx.ack_slot {
            if bus.is_recessive() {
                return self.enter_error(
                    id,
                    tick,
                    CanErrorKind::AckError,
                    ErrorRole::Transmitter,
                    Some(frame_id),
                    events,
                );
            }
            events.push(BusEvent { tick, kind: EventKind::Ack { node: id, id: frame_id } });
        } else if written != bus {
            if pos > 0 && pos < tx.arbitration_end && written.is_recessive() {
                events.push(BusEvent { tick, kind: EventKind::ArbitrationLoss { node: id, id: frame_id } });
                let decoder = Box::new(tx.decoder);
                return self.after_rx_status(id, tick, status, decoder, events);
            }
            return self.enter_error(id, tick, CanErrorKind::BitError, ErrorRole::Transmitter, Some(frame_id), events);
        }

        tx.pos += 1;
        if tx.pos < tx.bits.len() {
            return Phase::Transmitting(tx);
        }
        self.count(id, tick, CountingRole::Transmitter, Outcome::Success, events);
        self.ready.retain(|p| p.seq != tx.seq);
        self.sent.push(tx.frame.clone());
        events.push(BusEvent { tick, kind: EventKind::FrameComplete { frame: tx.frame, transmitter: Some(id) } });
        Phase::Intermission { remaining: INTERMISSION_BITS, was_tx: true }
    }

    fn after_rx_status(
        &mut self,
        id: NodeId,
        tick: u64,
        status: DecodeStatus,
        dec: Box<FrameDecoder>,
        events: &mut Vec<BusEvent>,
    ) -> Phase {
        match status {
            DecodeStatus::InProgress => Phase::Receiving(dec),
            DecodeStatus::Complete(frame) => {
                self.count(id, tick, CountingRole::Receiver, Outcome::Success, events);
                self.received.push(frame);
                self.last_rx = Some(tick);
                Phase::Intermission { remaining: INTERMISSION_BITS, was_tx: false }
            }
            DecodeStatus::Error(e) => self.enter_error(id, tick, e.kind, ErrorRole::Receiver, dec.id(), events),
        }
    }

    fn count(&mut self, id: NodeId, tick: u64, role: CountingRole, outcome: Outcome, events: &mut Vec<BusEvent>) {
        if let Some((from, to)) = self.counters.apply(role, outcome) {
            events.push(BusEvent { tick, kind: EventKind::StateChange { node: id, from, to } });
        }
    }

    fn enter_error(
        &mut self,
        id: NodeId,
        tick: u64,
        error: CanErrorKind,
        role: ErrorRole,
        frame_id: Option<u16>,
        events: &mut Vec<BusEvent>,
    ) -> Phase {
        let was_tx = role == ErrorRole::Transmitter;
        let mut state_events = Vec::new();
        if was_tx {
            self.count(id, tick, CountingRole::Transmitter, Outcome::Error, &mut state_events);
        }
        let flag = match self.counters.state() {
            ErrorState::BusOff => FlagKind::Suppressed,
            ErrorState::ErrorPassive => FlagKind::Passive,
            ErrorState::ErrorActive => FlagKind::Active,
        };
        events.push(BusEvent { tick, kind: EventKind::ErrorFlag { node: id, flag, role, error, frame_id } });
        events.append(&mut state_events);
        match flag {
            FlagKind::Suppressed => Phase::BusOff,
            _ => Phase::ErrorFlag {
                remaining: ERROR_FLAG_BITS,
                passive: flag == FlagKind::Passive,
                pending_rec: !was_tx,
                was_tx,
            },
        }
    }
}
