use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::bits::{push_uint, stuff, Bit, Bitstream};
use super::crc::{crc15, crc_bits};

pub const MAX_ID: u16 = 0x7ff;
pub const MAX_DLC: u8 = 8;

/// Unstuffed length of SOF..DLC.
pub const HEADER_BITS: usize = 19;
/// CRC delimiter, ACK slot, ACK delimiter and EOF.
pub const TRAILER_BITS: usize = 10;
pub const EOF_BITS: usize = 7;
pub const IFS_BITS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("identifier {0:#x} does not fit in 11 bits")]
    IdOutOfRange(u32),
    #[error("data length code {0} exceeds 8")]
    DlcOutOfRange(u8),
    #[error("payload has {payload} bytes but the data length code is {dlc}")]
    PayloadMismatch { dlc: u8, payload: usize },
    #[error("remote frames carry no payload")]
    RemoteWithPayload,
    #[error("cannot parse frame text {text:?} at column {column}: {reason}")]
    Parse { text: String, column: usize, reason: &'static str },
}

/// A classic base-format CAN frame before physical encoding.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CanFrame {
    id: u16,
    rtr: bool,
    dlc: u8,
    data: Vec<u8>,
}

impl CanFrame {
    pub fn new(id: u16, rtr: bool, dlc: u8, data: Vec<u8>) -> Result<Self, FrameError> {
        let frame = Self { id, rtr, dlc, data };
        frame.validate()?;
        Ok(frame)
    }

    pub fn data_frame(id: u16, data: &[u8]) -> Result<Self, FrameError> {
        let dlc = u8::try_from(data.len()).map_err(|_| FrameError::DlcOutOfRange(u8::MAX))?;
        Self::new(id, false, dlc, data.to_vec())
    }

    pub fn remote_frame(id: u16, dlc: u8) -> Result<Self, FrameError> {
        Self::new(id, true, dlc, Vec::new())
    }

    pub fn validate(&self) -> Result<(), FrameError> {
        if self.id > MAX_ID {
            return Err(FrameError::IdOutOfRange(self.id as u32));
        }
        if self.dlc > MAX_DLC {
            return Err(FrameError::DlcOutOfRange(self.dlc));
        }
        if self.rtr {
            if !self.data.is_empty() {
                return Err(FrameError::RemoteWithPayload);
            }
        } else if self.data.len() != self.dlc as usize {
            return Err(FrameError::PayloadMismatch { dlc: self.dlc, payload: self.data.len() });
        }
        Ok(())
    }

    pub fn id(&self) -> u16 {
        self.id
    }

    pub fn is_remote(&self) -> bool {
        self.rtr
    }

    pub fn dlc(&self) -> u8 {
        self.dlc
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Unstuffed SOF..DATA, the CRC input.
    pub fn header_and_data_bits(&self) -> Vec<Bit> {
        let mut bits = Vec::with_capacity(HEADER_BITS + 64);
        bits.push(Bit::Dominant);
        push_uint(&mut bits, self.id as u32, 11);
        bits.push(Bit::from_level(self.rtr));
        bits.push(Bit::Dominant); // IDE
        bits.push(Bit::Dominant); // r0
        push_uint(&mut bits, self.dlc as u32, 4);
        for &byte in &self.data {
            push_uint(&mut bits, byte as u32, 8);
        }
        bits
    }

    pub fn crc(&self) -> u16 {
        crc15(&self.header_and_data_bits())
    }
}

/// Candump text: `1A2#DEADBEEF`, `38D#R`, or `38D#R4` for a remote frame with DLC 4.
impl fmt::Display for CanFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:03X}#", self.id)?;
        if self.rtr {
            f.write_str("R")?;
            if self.dlc > 0 {
                write!(f, "{}", self.dlc)?;
            }
            return Ok(());
        }
        for byte in &self.data {
            write!(f, "{byte:02X}")?;
        }
        Ok(())
    }
}

impl FromStr for CanFrame {
    type Err = FrameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let text = s.trim();
        let err = |column: usize, reason: &'static str| FrameError::Parse { text: text.to_string(), column, reason };
        let hash = text.find('#').ok_or_else(|| err(0, "missing '#'"))?;
        let (id_text, rest) = (&text[..hash], &text[hash + 1..]);
        if id_text.is_empty() || id_text.len() > 3 {
            return Err(err(0, "identifier must be 1 to 3 hex digits"));
        }
        let id = u32::from_str_radix(id_text, 16).map_err(|_| err(0, "identifier is not hex"))?;
        if id > MAX_ID as u32 {
            return Err(FrameError::IdOutOfRange(id));
        }
        let id = id as u16;
        let body_col = hash + 1;
        if let Some(dlc_text) = rest.strip_prefix('R').or_else(|| rest.strip_prefix('r')) {
            let dlc = if dlc_text.is_empty() {
                0
            } else {
                dlc_text.parse::<u8>().map_err(|_| err(body_col + 1, "remote length is not a digit"))?
            };
            return Self::remote_frame(id, dlc);
        }
        if rest.len() % 2 != 0 {
            return Err(err(body_col + rest.len(), "payload has an odd number of hex digits"));
        }
        if rest.len() > 16 {
            return Err(err(body_col + 16, "payload longer than 8 bytes"));
        }
        let data = (0..rest.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&rest[i..i + 2], 16).map_err(|_| err(body_col + i, "payload is not hex")))
            .collect::<Result<Vec<u8>, _>>()?;
        Self::data_frame(id, &data)
    }
}

impl TryFrom<String> for CanFrame {
    type Error = FrameError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<CanFrame> for String {
    fn from(frame: CanFrame) -> String {
        frame.to_string()
    }
}

/// Frame fields in transmission order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Field {
    Sof,
    Id,
    Rtr,
    Ide,
    R0,
    Dlc,
    Data,
    Crc,
    CrcDelim,
    AckSlot,
    AckDelim,
    Eof,
    Ifs,
}

impl Field {
    pub fn name(self) -> &'static str {
        match self {
            Field::Sof => "SOF",
            Field::Id => "ID",
            Field::Rtr => "RTR",
            Field::Ide => "IDE",
            Field::R0 => "r0",
            Field::Dlc => "DLC",
            Field::Data => "DATA",
            Field::Crc => "CRC",
            Field::CrcDelim => "CRC-delim",
            Field::AckSlot => "ACK-slot",
            Field::AckDelim => "ACK-delim",
            Field::Eof => "EOF",
            Field::Ifs => "IFS",
        }
    }

    pub fn is_stuffed(self) -> bool {
        matches!(
            self,
            Field::Sof | Field::Id | Field::Rtr | Field::Ide | Field::R0 | Field::Dlc | Field::Data | Field::Crc
        )
    }
}

/// Field boundaries of an encoded frame.
///
/// Ranges index the unstuffed sequence SOF..IFS; `physical` maps each of those
/// positions (except IFS, which the encoder does not emit) to its index in the
/// stuffed bitstream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLayout {
    fields: Vec<(Field, Range<usize>)>,
    physical: Vec<usize>,
    physical_len: usize,
}

impl FrameLayout {
    pub fn fields(&self) -> &[(Field, Range<usize>)] {
        &self.fields
    }

    /// Unstuffed range of a field; empty for an absent data field.
    pub fn range(&self, field: Field) -> Range<usize> {
        self.fields.iter().find(|(f, _)| *f == field).map(|(_, r)| r.clone()).unwrap_or(0..0)
    }

    /// Physical index of an unstuffed position (SOF..EOF).
    pub fn to_physical(&self, unstuffed: usize) -> usize {
        self.physical[unstuffed]
    }

    /// Physical span of a field, including stuff bits inside it. IFS maps to the
    /// three bit times following the emitted bitstream.
    pub fn physical_range(&self, field: Field) -> Range<usize> {
        let r = self.range(field);
        if field == Field::Ifs {
            return self.physical_len..self.physical_len + IFS_BITS;
        }
        if r.is_empty() {
            let at = self.physical.get(r.start).copied().unwrap_or(self.physical_len);
            return at..at;
        }
        self.physical[r.start]..self.physical[r.end - 1] + 1
    }

    /// Length of the emitted bitstream (SOF..EOF).
    pub fn physical_len(&self) -> usize {
        self.physical_len
    }

    /// Physical index one past the last stuffed-region bit (including a trailing stuff bit).
    pub fn stuffed_region_end(&self) -> usize {
        self.physical[self.range(Field::CrcDelim).start]
    }

    /// Field at a physical index, `None` for stuff bits.
    pub fn field_at(&self, physical: usize) -> Option<Field> {
        let pos = self.physical.binary_search(&physical).ok()?;
        self.fields.iter().find(|(_, r)| r.contains(&pos)).map(|(f, _)| *f)
    }
}

fn layout_for(frame: &CanFrame) -> Vec<(Field, Range<usize>)> {
    let data_bits = frame.data.len() * 8;
    let widths = [
        (Field::Sof, 1),
        (Field::Id, 11),
        (Field::Rtr, 1),
        (Field::Ide, 1),
        (Field::R0, 1),
        (Field::Dlc, 4),
        (Field::Data, data_bits),
        (Field::Crc, 15),
        (Field::CrcDelim, 1),
        (Field::AckSlot, 1),
        (Field::AckDelim, 1),
        (Field::Eof, EOF_BITS),
        (Field::Ifs, IFS_BITS),
    ];
    let mut start = 0;
    widths
        .iter()
        .map(|&(field, width)| {
            let r = start..start + width;
            start += width;
            (field, r)
        })
        .collect()
}

/// Encodes a frame to its physical bitstream, SOF through EOF.
///
/// The ACK slot is emitted recessive, as a transmitter drives it.
pub fn encode_frame(frame: &CanFrame) -> Result<(Bitstream, FrameLayout), FrameError> {
    frame.validate()?;
    let mut region = frame.header_and_data_bits();
    region.extend(crc_bits(crc15(&region)));
    let unstuffed_region = region.len();

    let mut stream = stuff(&region);
    let mut physical = Vec::with_capacity(unstuffed_region + TRAILER_BITS);
    for (i, &stuffed) in stream.stuff_mask().iter().enumerate() {
        if !stuffed {
            physical.push(i);
        }
    }
    let tail_start = stream.len();
    stream.extend_raw(&[Bit::Recessive; TRAILER_BITS]);
    physical.extend(tail_start..tail_start + TRAILER_BITS);
    let physical_len = stream.len();

    Ok((stream, FrameLayout { fields: layout_for(frame), physical, physical_len }))
}

/// Shortest and longest possible physical length (SOF..EOF) for a payload size,
/// found by enumerating the stuffing of the variable bits.
pub fn stuffed_length_bounds(payload_bytes: usize) -> (usize, usize) {
    let unstuffed = HEADER_BITS + payload_bytes * 8 + 15 + TRAILER_BITS;
    let region = HEADER_BITS + payload_bytes * 8 + 15;
    // Worst case: runs of exactly five with every stuff bit starting the next
    // run, i.e. one stuff bit per four bits after the first five.
    let max_stuff = if region >= 5 { 1 + (region - 5) / 4 } else { 0 };
    (unstuffed, unstuffed + max_stuff)
}
