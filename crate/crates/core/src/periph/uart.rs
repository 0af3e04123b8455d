use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::template::{Cell, PacketTemplate};
use crate::codec::Bit;

pub const MIN_DATA_BITS: u8 = 5;
pub const MAX_DATA_BITS: u8 = 9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UartError {
    #[error("UART data length must be 5 to 9 bits, got {0}")]
    DataBits(u8),
    #[error("UART needs 1 or 2 stop bits, got {0}")]
    StopBits(u8),
    #[error("cannot parse UART config {0:?} (expected e.g. 8N1)")]
    Parse(String),
    #[error("framing error at bit {index}")]
    Framing { index: usize },
    #[error("trace ends after {len} bits inside a UART packet")]
    Truncated { len: usize },
}

/// Data length and stop bits; parity is not modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct UartConfig {
    data_bits: u8,
    stop_bits: u8,
}

impl UartConfig {
    pub fn new(data_bits: u8, stop_bits: u8) -> Result<Self, UartError> {
        if !(MIN_DATA_BITS..=MAX_DATA_BITS).contains(&data_bits) {
            return Err(UartError::DataBits(data_bits));
        }
        if !(1..=2).contains(&stop_bits) {
            return Err(UartError::StopBits(stop_bits));
        }
        Ok(Self { data_bits, stop_bits })
    }

    pub fn data_bits(&self) -> u8 {
        self.data_bits
    }

    pub fn stop_bits(&self) -> u8 {
        self.stop_bits
    }

    /// Packet length in bit times.
    pub fn len(&self) -> usize {
        1 + self.data_bits as usize + self.stop_bits as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// All ten legal configurations.
    pub fn all() -> Vec<UartConfig> {
        let mut v = Vec::with_capacity(10);
        for d in MIN_DATA_BITS..=MAX_DATA_BITS {
            for s in 1..=2 {
                v.push(UartConfig { data_bits: d, stop_bits: s });
            }
        }
        v
    }
}

impl fmt::Display for UartConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}N{}", self.data_bits, self.stop_bits)
    }
}

impl FromStr for UartConfig {
    type Err = UartError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_uppercase();
        let (d, st) = t.split_once('N').ok_or_else(|| UartError::Parse(s.to_string()))?;
        let d = d.parse().map_err(|_| UartError::Parse(s.to_string()))?;
        let st = st.parse().map_err(|_| UartError::Parse(s.to_string()))?;
        Self::new(d, st)
    }
}

impl TryFrom<String> for UartConfig {
    type Error = UartError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<UartConfig> for String {
    fn from(c: UartConfig) -> String {
        c.to_string()
    }
}

/// Start bit 0, free data cells, stop bits 1.
pub fn uart_template(cfg: UartConfig) -> PacketTemplate {
    let mut cells = Vec::with_capacity(cfg.len());
    cells.push(Cell::Fixed(Bit::Dominant));
    cells.extend(std::iter::repeat_n(Cell::Free, cfg.data_bits as usize));
    cells.extend(std::iter::repeat_n(Cell::Fixed(Bit::Recessive), cfg.stop_bits as usize));
    PacketTemplate::new(cells, format!("uart-{cfg}")).expect("UART templates are non-empty")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UartCapture {
    pub data: Vec<Bit>,
    pub consumed: usize,
}

/// Receives one packet from the start of `bits`: start bit, data, stop bits.
pub fn uart_receive(bits: &[Bit], cfg: UartConfig) -> Result<UartCapture, UartError> {
    let t = uart_template(cfg);
    for (index, cell) in t.cells().iter().enumerate() {
        let Some(&b) = bits.get(index) else {
            return Err(UartError::Truncated { len: bits.len() });
        };
        if !cell.admits(b) {
            return Err(UartError::Framing { index });
        }
    }
    let d = cfg.data_bits as usize;
    Ok(UartCapture { data: bits[1..1 + d].to_vec(), consumed: cfg.len() })
}
