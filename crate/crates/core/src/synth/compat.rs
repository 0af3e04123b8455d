use serde::{Deserialize, Serialize};

use crate::codec::{encode_frame, Bit, CanFrame, Field, FrameLayout};
use crate::periph::{uart_template, Cell, I2cLayout, PacketTemplate, UartConfig};

/// Packet shapes a reader (or writer) may use when chaining over a bitstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "lowercase")]
pub enum CompatSpace {
    Spi,
    Adc,
    /// `max_idle: None` lets the line idle for any number of recessive bits
    /// between packets.
    Uart {
        configs: Vec<UartConfig>,
        max_idle: Option<usize>,
    },
    I2c {
        layout: I2cLayout,
        max_idle: usize,
    },
}

impl CompatSpace {
    pub fn uart_all() -> Self {
        CompatSpace::Uart { configs: UartConfig::all(), max_idle: None }
    }

    pub fn i2c(layout: I2cLayout) -> Self {
        CompatSpace::I2c { layout, max_idle: 0 }
    }

    fn templates(&self) -> Vec<PacketTemplate> {
        match self {
            CompatSpace::Uart { configs, .. } => configs.iter().map(|&c| uart_template(c)).collect(),
            CompatSpace::I2c { layout, .. } => vec![layout.template()],
            CompatSpace::Spi | CompatSpace::Adc => Vec::new(),
        }
    }

    fn max_idle(&self) -> Option<usize> {
        match self {
            CompatSpace::Uart { max_idle, .. } => *max_idle,
            CompatSpace::I2c { max_idle, .. } => Some(*max_idle),
            CompatSpace::Spi | CompatSpace::Adc => Some(0),
        }
    }
}

/// Where a packet chain that reached the longest prefix stopped matching.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blocker {
    pub packet_start: usize,
    pub template: String,
    /// Cell inside the packet.
    pub cell: usize,
    /// Bitstream index of the mismatch.
    pub index: usize,
    pub expected: Bit,
    pub found: Bit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompatResult {
    /// Bits matched from the start by the best chain.
    pub prefix: usize,
    pub len: usize,
    /// Positions where some packet could start.
    pub packet_starts: Vec<usize>,
    /// Every chain ending at `prefix`, when it is short of `len`.
    pub blockers: Vec<Blocker>,
}

impl CompatResult {
    pub fn is_full(&self) -> bool {
        self.prefix == self.len
    }
}

/// Longest prefix of `bits` a chain of packets from `space` matches, starting
/// with a packet at bit 0. The last packet may be partial, so bits matched
/// inside it count. Adding shapes or idle to `space` never shortens the result.
pub fn compat_prefix(bits: &[Bit], space: &CompatSpace) -> CompatResult {
    let len = bits.len();
    if matches!(space, CompatSpace::Spi | CompatSpace::Adc) {
        return CompatResult { prefix: len, len, packet_starts: vec![0], blockers: Vec::new() };
    }
    let templates = space.templates();
    let max_idle = space.max_idle();
    let mut reachable = vec![false; len + 1];
    reachable[0] = true;
    let mut prefix = 0;
    let mut ends: Vec<(usize, usize, usize)> = Vec::new(); // (start, template, stop index)

    for p in 0..=len {
        if !reachable[p] {
            continue;
        }
        prefix = prefix.max(p);
        if p == len {
            break;
        }
        for (t, template) in templates.iter().enumerate() {
            let a = template.admitted_prefix(&bits[p..]);
            let reach = p + a;
            prefix = prefix.max(reach);
            if reach < len && a < template.len() {
                ends.push((p, t, reach));
                continue;
            }
            let q = p + template.len();
            if q > len {
                continue;
            }
            reachable[q] = true;
            let mut g = 0;
            while q + g < len && bits[q + g].is_recessive() && max_idle.is_none_or(|m| g < m) {
                g += 1;
                reachable[q + g] = true;
            }
        }
    }

    let packet_starts = (0..len).filter(|&p| reachable[p]).collect();
    let blockers = if prefix < len {
        ends.iter()
            .filter(|&&(_, _, at)| at == prefix)
            .map(|&(start, t, at)| {
                let template = &templates[t];
                let cell = at - start;
                let expected = match template.cells()[cell] {
                    Cell::Fixed(b) => b,
                    Cell::Free => unreachable!("free cells admit every bit"),
                };
                Blocker {
                    packet_start: start,
                    template: template.label().to_string(),
                    cell,
                    index: at,
                    expected,
                    found: bits[at],
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    CompatResult { prefix, len, packet_starts, blockers }
}

/// A frame as it appears on the bus once acknowledged: the encoder's bits with
/// the ACK slot dominant.
pub fn bus_view(frame: &CanFrame) -> (Vec<Bit>, FrameLayout) {
    let (stream, layout) = encode_frame(frame).expect("CanFrame values are valid");
    let mut bits = stream.into_bits();
    bits[layout.physical_range(Field::AckSlot).start] = Bit::Dominant;
    (bits, layout)
}

/// Physical index one past the last identifier bit.
pub fn id_end(layout: &FrameLayout) -> usize {
    layout.physical_range(Field::Id).end
}
