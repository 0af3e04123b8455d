use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{bits_to_string, Bit};
use crate::periph::{spi_template, Cell, PacketTemplate, TemplateError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Spi,
    Uart,
    I2c,
    Adc,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Protocol::Spi => "spi",
            Protocol::Uart => "uart",
            Protocol::I2c => "i2c",
            Protocol::Adc => "adc",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown protocol {0:?} (expected spi, uart, i2c or adc)")]
pub struct UnknownProtocol(pub String);

impl std::str::FromStr for Protocol {
    type Err = UnknownProtocol;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "spi" => Ok(Protocol::Spi),
            "uart" => Ok(Protocol::Uart),
            "i2c" => Ok(Protocol::I2c),
            "adc" => Ok(Protocol::Adc),
            _ => Err(UnknownProtocol(s.to_string())),
        }
    }
}

/// One packet of a chain: its template and the bits placed in its free cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanPacket {
    pub template: PacketTemplate,
    pub payload: Vec<Bit>,
}

impl PlanPacket {
    /// A gap where the peripheral leaves the line idle (recessive).
    pub fn idle(len: usize) -> Self {
        let template = PacketTemplate::new(vec![Cell::Fixed(Bit::Recessive); len], format!("idle-{len}"))
            .expect("idle gaps are non-empty");
        Self { template, payload: Vec::new() }
    }

    pub fn is_idle(&self) -> bool {
        self.template.label().starts_with("idle")
    }
}

/// A packet chain whose back-to-back emission is a CAN bitstream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolyglotPlan {
    protocol: Protocol,
    packets: Vec<PlanPacket>,
    emitted: Vec<Bit>,
}

impl PolyglotPlan {
    pub fn new(protocol: Protocol, packets: Vec<PlanPacket>) -> Result<Self, TemplateError> {
        let mut emitted = Vec::new();
        for p in &packets {
            emitted.extend(p.template.instantiate(&p.payload)?);
        }
        Ok(Self { protocol, packets, emitted })
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn packets(&self) -> &[PlanPacket] {
        &self.packets
    }

    /// Peripheral packets, excluding idle gaps.
    pub fn packet_count(&self) -> usize {
        self.packets.iter().filter(|p| !p.is_idle()).count()
    }

    pub fn emitted(&self) -> &[Bit] {
        &self.emitted
    }

    /// Re-instantiates every packet and compares with the stored emission.
    pub fn is_consistent(&self) -> bool {
        let mut again = Vec::with_capacity(self.emitted.len());
        for p in &self.packets {
            match p.template.instantiate(&p.payload) {
                Ok(bits) => again.extend(bits),
                Err(_) => return false,
            }
        }
        again == self.emitted
    }
}

/// One line per packet: template text, then the payload bits.
impl fmt::Display for PolyglotPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# {} plan, {} packets, {} bits", self.protocol, self.packet_count(), self.emitted.len())?;
        for p in &self.packets {
            if p.is_idle() {
                writeln!(f, "{} idle", p.template)?;
            } else {
                writeln!(f, "{} {}", p.template, bits_to_string(&p.payload))?;
            }
        }
        Ok(())
    }
}

/// SPI transmits any bitstream verbatim: one packet carrying the whole target.
pub fn synth_spi(target: &[Bit]) -> PolyglotPlan {
    let packets = match spi_template(target.len()) {
        Ok(template) => vec![PlanPacket { template, payload: target.to_vec() }],
        Err(_) => Vec::new(),
    };
    PolyglotPlan::new(Protocol::Spi, packets).expect("SPI payload fills every cell")
}
