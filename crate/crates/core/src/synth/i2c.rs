use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::plan::{PlanPacket, PolyglotPlan, Protocol};
use super::SynthError;
use crate::codec::{crc15, encode_frame, push_uint, read_uint, Bit, CanFrame, Field, MAX_DLC, MAX_ID};
use crate::periph::{i2c_template, Cell, I2cLayout, I2cTimings, PacketTemplate, I2C_PAYLOAD_BITS};

pub const DEFAULT_MAX_ATTEMPTS: u32 = 1 << 15;
pub const DEFAULT_MAX_PACKETS: usize = 16;

/// CAN field constraints. `None` leaves the field to the synthesizer.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSpec {
    pub id: Option<u16>,
    pub rtr: Option<bool>,
    pub dlc: Option<u8>,
    pub data: Option<Vec<u8>>,
}

impl FrameSpec {
    /// Every field pinned to `frame`.
    pub fn exact(frame: &CanFrame) -> Self {
        Self {
            id: Some(frame.id()),
            rtr: Some(frame.is_remote()),
            dlc: Some(frame.dlc()),
            data: (!frame.is_remote()).then(|| frame.data().to_vec()),
        }
    }

    fn normalized(&self) -> Result<Self, String> {
        let mut s = self.clone();
        if s.id.is_some_and(|id| id > MAX_ID) {
            return Err(format!("id {:#x} exceeds 11 bits", s.id.unwrap()));
        }
        if s.dlc.is_some_and(|d| d > MAX_DLC) {
            return Err(format!("dlc {} exceeds 8", s.dlc.unwrap()));
        }
        if let Some(data) = &s.data {
            if s.rtr == Some(true) {
                return Err("remote frames carry no data".into());
            }
            if data.len() > MAX_DLC as usize || s.dlc.is_some_and(|d| d as usize != data.len()) {
                return Err("data length does not match dlc".into());
            }
            s.rtr = Some(false);
            s.dlc = Some(data.len() as u8);
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct I2cSynthOptions {
    pub seed: u64,
    /// Random restarts per packet count.
    pub max_attempts: u32,
    pub max_packets: usize,
}

impl Default for I2cSynthOptions {
    fn default() -> Self {
        Self { seed: 0, max_attempts: DEFAULT_MAX_ATTEMPTS, max_packets: DEFAULT_MAX_PACKETS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum I2cInfeasibleReason {
    /// The peripheral's fixed portions do not land on the bit grid.
    Timing,
    /// A fixed packet cell collides with a CAN bit that no free choice can change.
    Structure,
    /// Chains reached the CRC but no sampled free bits made it fit.
    CrcBudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct I2cSynthesis {
    pub plan: PolyglotPlan,
    pub frame: CanFrame,
    pub layout: I2cLayout,
    /// Peripheral packets in the chain.
    pub packets: usize,
    /// Attempts spent across all packet counts.
    pub attempts: u32,
}

enum Attempt {
    Done { bits: Vec<Bit>, frame: CanFrame },
    Failed { in_crc: bool, deterministic: bool },
}

enum Need {
    Fixed(Bit),
    Free,
    Wildcard,
}

/// Builds a frame bit by bit in physical order, choosing free CAN bits to
/// satisfy the chain's fixed cells and sampling the rest.
struct Walker<'a> {
    spec: &'a FrameSpec,
    template: &'a PacketTemplate,
    chain_len: usize,
}

impl Walker<'_> {
    fn cell(&self, p: usize) -> Cell {
        if p < self.chain_len {
            self.template.cells()[p % self.template.len()]
        } else {
            Cell::Fixed(Bit::Recessive)
        }
    }

    fn attempt(&self, rng: &mut ChaCha8Rng) -> Attempt {
        let spec = self.spec;
        let mut unstuffed: Vec<Bit> = Vec::with_capacity(128);
        let mut physical: Vec<Bit> = Vec::with_capacity(160);
        let mut last: Option<Bit> = None;
        let mut run = 0u8;
        let mut crc: Vec<Bit> = Vec::new();
        let mut data_bits = None::<usize>;
        let mut random_used = false;

        let mut id_bits = Vec::new();
        if let Some(id) = spec.id {
            push_uint(&mut id_bits, id as u32, 11);
        }
        let mut dlc_bits = Vec::new();
        if let Some(d) = spec.dlc {
            push_uint(&mut dlc_bits, d as u32, 4);
        }
        let mut payload_bits = Vec::new();
        if let Some(data) = &spec.data {
            for &byte in data {
                push_uint(&mut payload_bits, byte as u32, 8);
            }
        }

        loop {
            let p = physical.len();
            let u = unstuffed.len();
            let region_end = data_bits.map(|n| 19 + n + 15);
            let in_region = region_end.is_none_or(|e| u < e);
            let in_crc = region_end.is_some_and(|e| u >= e - 15 && u < e);
            let fail = |deterministic: bool| Attempt::Failed { in_crc, deterministic };

            // A run of five forces a stuff bit, including one right after the CRC.
            let stuff_due = run == 5 && (in_region || region_end.is_some_and(|e| u == e));
            if stuff_due {
                let bit = last.unwrap().complement();
                if !self.cell(p).admits(bit) {
                    return fail(!random_used);
                }
                physical.push(bit);
                last = Some(bit);
                run = 1;
                continue;
            }

            let need = match u {
                0 => Need::Fixed(Bit::Dominant),
                1..=11 => id_bits.get(u - 1).map_or(Need::Free, |&b| Need::Fixed(b)),
                12 => spec.rtr.map_or(Need::Free, |r| Need::Fixed(Bit::from_value(r as u32))),
                13 | 14 => Need::Fixed(Bit::Dominant),
                15..=18 => {
                    let k = u - 15;
                    match dlc_bits.get(k) {
                        Some(&b) if spec.dlc.is_some() => Need::Fixed(b),
                        // Once the MSB is set the value must be exactly 8.
                        _ if k > 0 && unstuffed[15].is_recessive() => Need::Fixed(Bit::Dominant),
                        _ => Need::Free,
                    }
                }
                _ => {
                    let n = data_bits.expect("fixed after the DLC");
                    let e = 19 + n + 15;
                    if u < 19 + n {
                        payload_bits.get(u - 19).map_or(Need::Free, |&b| Need::Fixed(b))
                    } else if u < e {
                        Need::Fixed(crc[u - 19 - n])
                    } else {
                        match u - e {
                            1 => Need::Wildcard,
                            0 | 2..=9 => Need::Fixed(Bit::Recessive),
                            _ => break,
                        }
                    }
                }
            };

            let cell = self.cell(p);
            let bit = match need {
                Need::Fixed(b) => {
                    if !cell.admits(b) {
                        return fail(!random_used);
                    }
                    b
                }
                Need::Free | Need::Wildcard => match cell {
                    Cell::Fixed(c) => c,
                    Cell::Free if matches!(need, Need::Wildcard) => Bit::Recessive,
                    Cell::Free => {
                        random_used = true;
                        Bit::from_level(rng.gen())
                    }
                },
            };
            physical.push(bit);
            unstuffed.push(bit);
            if in_region {
                if Some(bit) == last {
                    run += 1;
                } else {
                    last = Some(bit);
                    run = 1;
                }
            }

            if unstuffed.len() == 19 {
                let rtr = unstuffed[12].is_recessive();
                let dlc = read_uint(&unstuffed[15..19]) as usize;
                if dlc > MAX_DLC as usize {
                    return fail(!random_used);
                }
                data_bits = Some(if rtr { 0 } else { dlc * 8 });
            }
            if let Some(n) = data_bits {
                if unstuffed.len() == 19 + n && crc.is_empty() {
                    let value = crc15(&unstuffed);
                    push_uint(&mut crc, value as u32, 15);
                }
            }
        }

        // The chain may overrun the frame only with recessive cells.
        for p in physical.len()..self.chain_len {
            if !self.cell(p).admits(Bit::Recessive) {
                return Attempt::Failed { in_crc: false, deterministic: !random_used };
            }
        }

        let id = read_uint(&unstuffed[1..12]) as u16;
        let rtr = unstuffed[12].is_recessive();
        let dlc = read_uint(&unstuffed[15..19]) as u8;
        let n = data_bits.unwrap_or(0);
        let data: Vec<u8> = unstuffed[19..19 + n].chunks(8).map(|c| read_uint(c) as u8).collect();
        let frame = CanFrame::new(id, rtr, dlc, data).expect("walker respects frame limits");
        Attempt::Done { bits: physical, frame }
    }
}

/// Finds an I2C packet chain, starting at SOF, whose emission is a valid CAN
/// frame meeting `spec`. Packet counts are tried in increasing order; each
/// gets up to `max_attempts` seeded restarts.
pub fn synth_i2c(
    spec: &FrameSpec,
    timings: &I2cTimings,
    bit_time_us: f64,
    opts: &I2cSynthOptions,
) -> Result<I2cSynthesis, SynthError> {
    let layout = i2c_template(timings, bit_time_us)
        .map_err(|e| SynthError::I2cInfeasible { reason: I2cInfeasibleReason::Timing, detail: e.to_string() })?;
    let spec = spec.normalized().map_err(SynthError::Spec)?;
    let template = layout.template();
    let mut total_attempts = 0u32;
    let mut reached_crc = false;

    for n in 1..=opts.max_packets {
        let walker = Walker { spec: &spec, template: &template, chain_len: n * template.len() };
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (n as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        for _ in 0..opts.max_attempts {
            total_attempts += 1;
            match walker.attempt(&mut rng) {
                Attempt::Done { bits, frame } => {
                    return Ok(finish(bits, frame, layout, &template, n, total_attempts));
                }
                Attempt::Failed { in_crc, deterministic } => {
                    reached_crc |= in_crc;
                    if deterministic {
                        break;
                    }
                }
            }
        }
    }
    let reason = if reached_crc { I2cInfeasibleReason::CrcBudgetExhausted } else { I2cInfeasibleReason::Structure };
    Err(SynthError::I2cInfeasible {
        reason,
        detail: format!("no chain of 1..={} packets fits ({} attempts)", opts.max_packets, total_attempts),
    })
}

fn finish(
    bits: Vec<Bit>,
    frame: CanFrame,
    layout: I2cLayout,
    template: &PacketTemplate,
    n: usize,
    attempts: u32,
) -> I2cSynthesis {
    let len = template.len();
    let mut packets = Vec::with_capacity(n + 1);
    for k in 0..n {
        let payload: Vec<Bit> = (0..I2C_PAYLOAD_BITS)
            .map(|i| bits.get(k * len + layout.start + i).copied().unwrap_or(Bit::Recessive))
            .collect();
        packets.push(PlanPacket { template: template.clone(), payload });
    }
    if bits.len() > n * len {
        packets.push(PlanPacket::idle(bits.len() - n * len));
    }
    let plan = PolyglotPlan::new(Protocol::I2c, packets).expect("payload width matches the template");

    // Independent check: the emission must be the encoder's output, except at
    // the ACK slot where the chain may drive dominant.
    let (stream, frame_layout) = encode_frame(&frame).expect("walker builds valid frames");
    let ack = frame_layout.physical_range(Field::AckSlot).start;
    let emitted = plan.emitted();
    debug_assert!(emitted.len() >= stream.len());
    for (i, (&e, &s)) in emitted.iter().zip(stream.bits()).enumerate() {
        debug_assert!(i == ack || e == s, "emission diverges at {i}");
    }
    debug_assert!(emitted[stream.len()..].iter().all(|b| b.is_recessive()));

    I2cSynthesis { plan, frame, layout, packets: n, attempts }
}
