use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::Bit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Fixed(Bit),
    Free,
}

impl Cell {
    pub fn admits(self, bit: Bit) -> bool {
        match self {
            Cell::Fixed(b) => b == bit,
            Cell::Free => true,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Cell::Fixed(b) => b.as_char(),
            Cell::Free => '.',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("a packet template needs at least one cell")]
    Empty,
    #[error("unexpected character {found:?} at position {position} in template text")]
    InvalidChar { position: usize, found: char },
    #[error("template has {free} free cells but {given} payload bits were given")]
    PayloadLength { free: usize, given: usize },
    #[error("fixed cell {index} expects {expected} but the trace has {found}")]
    FixedMismatch { index: usize, expected: Bit, found: Bit },
    #[error("trace ends after {len} bits, the template needs {needed}")]
    Truncated { len: usize, needed: usize },
}

/// A peripheral packet as fixed and free bit cells, one cell per CAN bit time.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PacketTemplate {
    cells: Vec<Cell>,
    label: String,
}

impl PacketTemplate {
    pub fn new(cells: Vec<Cell>, label: impl Into<String>) -> Result<Self, TemplateError> {
        if cells.is_empty() {
            return Err(TemplateError::Empty);
        }
        Ok(Self { cells, label: label.into() })
    }

    pub fn parse(text: &str, label: impl Into<String>) -> Result<Self, TemplateError> {
        let cells = text
            .chars()
            .enumerate()
            .filter(|(_, c)| !c.is_whitespace())
            .map(|(position, c)| match c {
                '.' => Ok(Cell::Free),
                _ => Bit::from_char(c).map(Cell::Fixed).ok_or(TemplateError::InvalidChar { position, found: c }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(cells, label)
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn free_count(&self) -> usize {
        self.cells.iter().filter(|c| **c == Cell::Free).count()
    }

    /// Emission with the free cells filled from `payload`, in order.
    pub fn instantiate(&self, payload: &[Bit]) -> Result<Vec<Bit>, TemplateError> {
        let free = self.free_count();
        if payload.len() != free {
            return Err(TemplateError::PayloadLength { free, given: payload.len() });
        }
        let mut fill = payload.iter();
        Ok(self
            .cells
            .iter()
            .map(|c| match c {
                Cell::Fixed(b) => *b,
                Cell::Free => *fill.next().expect("length checked"),
            })
            .collect())
    }

    /// Reading semantics: checks fixed cells against `trace` and captures the free ones.
    pub fn capture(&self, trace: &[Bit]) -> Result<Vec<Bit>, TemplateError> {
        let mut out = Vec::with_capacity(self.free_count());
        for (index, cell) in self.cells.iter().enumerate() {
            let Some(&found) = trace.get(index) else {
                return Err(TemplateError::Truncated { len: trace.len(), needed: self.cells.len() });
            };
            match *cell {
                Cell::Free => out.push(found),
                Cell::Fixed(expected) if expected != found => {
                    return Err(TemplateError::FixedMismatch { index, expected, found })
                }
                Cell::Fixed(_) => {}
            }
        }
        Ok(out)
    }

    /// Number of leading trace bits the template admits.
    pub fn admitted_prefix(&self, trace: &[Bit]) -> usize {
        self.cells.iter().zip(trace).take_while(|(c, b)| c.admits(**b)).count()
    }
}

/// `0`/`1` for fixed cells and `.` for free ones, e.g. `0........1` for 8N1 UART.
impl fmt::Display for PacketTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.cells.iter().try_for_each(|c| write!(f, "{}", c.as_char()))
    }
}

impl FromStr for PacketTemplate {
    type Err = TemplateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s, "custom")
    }
}

/// SPI shifts any bitstream out as-is: every cell is free.
pub fn spi_template(n_bits: usize) -> Result<PacketTemplate, TemplateError> {
    PacketTemplate::new(vec![Cell::Free; n_bits], format!("spi-{n_bits}"))
}
