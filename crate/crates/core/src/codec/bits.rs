use std::fmt;
use std::ops::{BitAnd, Deref};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A single bus level. `Dominant` is logical 0 and overwrites `Recessive` (logical 1).
///
/// The derived ordering puts `Dominant` first, which is also the arbitration
/// priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bit {
    Dominant,
    Recessive,
}

impl Bit {
    pub fn from_level(level: bool) -> Self {
        if level {
            Bit::Recessive
        } else {
            Bit::Dominant
        }
    }

    pub fn from_value(value: u32) -> Self {
        Self::from_level(value & 1 == 1)
    }

    pub fn is_dominant(self) -> bool {
        self == Bit::Dominant
    }

    pub fn is_recessive(self) -> bool {
        self == Bit::Recessive
    }

    pub fn complement(self) -> Self {
        match self {
            Bit::Dominant => Bit::Recessive,
            Bit::Recessive => Bit::Dominant,
        }
    }

    pub fn value(self) -> u32 {
        match self {
            Bit::Dominant => 0,
            Bit::Recessive => 1,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Bit::Dominant => '0',
            Bit::Recessive => '1',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            '0' => Some(Bit::Dominant),
            '1' => Some(Bit::Recessive),
            _ => None,
        }
    }
}

/// Wired-AND: the result is dominant if either side is dominant.
impl BitAnd for Bit {
    type Output = Bit;

    fn bitand(self, rhs: Bit) -> Bit {
        if self.is_dominant() || rhs.is_dominant() {
            Bit::Dominant
        } else {
            Bit::Recessive
        }
    }
}

impl fmt::Display for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseBitsError {
    #[error("unexpected character {found:?} at position {position}")]
    InvalidChar { position: usize, found: char },
    #[error("stuff marker at position {position} is not followed by a bit")]
    DanglingMarker { position: usize },
}

/// Appends the `width` least significant bits of `value`, MSB first.
pub fn push_uint(out: &mut Vec<Bit>, value: u32, width: usize) {
    for shift in (0..width).rev() {
        out.push(Bit::from_value(value >> shift));
    }
}

/// Reads `bits` as an unsigned integer, MSB first.
pub fn read_uint(bits: &[Bit]) -> u32 {
    bits.iter().fold(0, |acc, b| (acc << 1) | b.value())
}

pub fn bits_to_string(bits: &[Bit]) -> String {
    bits.iter().map(|b| b.as_char()).collect()
}

/// Parses a plain `0`/`1` string. Whitespace is ignored.
pub fn parse_bits(text: &str) -> Result<Vec<Bit>, ParseBitsError> {
    text.chars()
        .enumerate()
        .filter(|(_, c)| !c.is_whitespace())
        .map(|(position, c)| Bit::from_char(c).ok_or(ParseBitsError::InvalidChar { position, found: c }))
        .collect()
}

/// Physical bus bits plus a mask flagging the bits inserted by the stuffing rule.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Bitstream {
    bits: Vec<Bit>,
    stuff_mask: Vec<bool>,
}

impl Bitstream {
    /// A bitstream with no stuff bits marked.
    pub fn raw(bits: Vec<Bit>) -> Self {
        let stuff_mask = vec![false; bits.len()];
        Self { bits, stuff_mask }
    }

    pub(crate) fn from_parts(bits: Vec<Bit>, stuff_mask: Vec<bool>) -> Self {
        debug_assert_eq!(bits.len(), stuff_mask.len());
        Self { bits, stuff_mask }
    }

    pub fn bits(&self) -> &[Bit] {
        &self.bits
    }

    pub fn stuff_mask(&self) -> &[bool] {
        &self.stuff_mask
    }

    pub fn into_bits(self) -> Vec<Bit> {
        self.bits
    }

    /// Indices of the inserted stuff bits.
    pub fn stuff_positions(&self) -> Vec<usize> {
        self.stuff_mask.iter().enumerate().filter_map(|(i, &s)| s.then_some(i)).collect()
    }

    /// The sequence with every stuff bit removed.
    pub fn destuffed(&self) -> Vec<Bit> {
        self.bits.iter().zip(&self.stuff_mask).filter_map(|(&b, &s)| (!s).then_some(b)).collect()
    }

    pub fn extend_raw(&mut self, bits: &[Bit]) {
        self.bits.extend_from_slice(bits);
        self.stuff_mask.extend(std::iter::repeat_n(false, bits.len()));
    }
}

impl Deref for Bitstream {
    type Target = [Bit];

    fn deref(&self) -> &[Bit] {
        &self.bits
    }
}

/// `0`/`1` characters, with a `|` written in front of every stuff bit.
impl fmt::Display for Bitstream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (bit, stuffed) in self.bits.iter().zip(&self.stuff_mask) {
            if *stuffed {
                f.write_str("|")?;
            }
            write!(f, "{bit}")?;
        }
        Ok(())
    }
}

impl FromStr for Bitstream {
    type Err = ParseBitsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut bits = Vec::new();
        let mut mask = Vec::new();
        let mut marker: Option<usize> = None;
        for (position, c) in s.chars().enumerate() {
            if c.is_whitespace() {
                continue;
            }
            if c == '|' {
                if marker.is_some() {
                    return Err(ParseBitsError::DanglingMarker { position });
                }
                marker = Some(position);
                continue;
            }
            let bit = Bit::from_char(c).ok_or(ParseBitsError::InvalidChar { position, found: c })?;
            bits.push(bit);
            mask.push(marker.take().is_some());
        }
        if let Some(position) = marker {
            return Err(ParseBitsError::DanglingMarker { position });
        }
        Ok(Self::from_parts(bits, mask))
    }
}

/// Inserts a complementary bit after every run of five equal bits.
///
/// Inserted bits count towards the following run, and a run completed by the
/// final input bit still gets its stuff bit.
pub fn stuff(bits: &[Bit]) -> Bitstream {
    let mut out = Vec::with_capacity(bits.len() + bits.len() / 4 + 1);
    let mut mask = Vec::with_capacity(out.capacity());
    let mut last: Option<Bit> = None;
    let mut run = 0u8;
    for &bit in bits {
        out.push(bit);
        mask.push(false);
        if Some(bit) == last {
            run += 1;
        } else {
            last = Some(bit);
            run = 1;
        }
        if run == 5 {
            let inserted = bit.complement();
            out.push(inserted);
            mask.push(true);
            last = Some(inserted);
            run = 1;
        }
    }
    Bitstream::from_parts(out, mask)
}
