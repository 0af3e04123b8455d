use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::bits::{read_uint, Bit};
use super::crc::Crc15;
use super::frame::{CanFrame, Field, EOF_BITS, HEADER_BITS, MAX_DLC};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CanErrorKind {
    BitError,
    StuffError,
    FormError,
    AckError,
    CrcError,
}

impl fmt::Display for CanErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CanErrorKind::BitError => "bit error",
            CanErrorKind::StuffError => "stuff error",
            CanErrorKind::FormError => "form error",
            CanErrorKind::AckError => "ack error",
            CanErrorKind::CrcError => "crc error",
        };
        f.write_str(s)
    }
}

/// A detected link-layer error and the physical bit index where it was detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Error)]
#[error("{kind} at bit {bit_index}")]
pub struct CanError {
    pub kind: CanErrorKind,
    pub bit_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error(transparent)]
    Bus(#[from] CanError),
    #[error("bitstream ended after {0} bits, before the end of frame")]
    Truncated(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeStatus {
    InProgress,
    Complete(CanFrame),
    Error(CanError),
}

/// Receiver-side streaming decoder, fed one physical bit at a time starting at SOF.
///
/// The ACK slot is not checked: acknowledging is the transmitter's concern.
/// A CRC mismatch is reported at the ACK delimiter, where a receiver would
/// start its error flag.
#[derive(Debug, Clone)]
pub struct FrameDecoder {
    position: usize,
    unstuffed: Vec<Bit>,
    crc: Crc15,
    run_bit: Bit,
    run_len: u8,
    expect_stuff: bool,
    in_stuffed_region: bool,
    region_len: Option<usize>,
    crc_ok: Option<bool>,
    trailer: usize,
    status: DecodeStatus,
}

impl Default for FrameDecoder {
    fn default() -> Self {
        Self::new()
    }
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self {
            position: 0,
            unstuffed: Vec::with_capacity(HEADER_BITS + 64 + 15),
            crc: Crc15::new(),
            run_bit: Bit::Recessive,
            run_len: 0,
            expect_stuff: false,
            in_stuffed_region: true,
            region_len: None,
            crc_ok: None,
            trailer: 0,
            status: DecodeStatus::InProgress,
        }
    }

    /// Physical bits consumed so far.
    pub fn position(&self) -> usize {
        self.position
    }

    pub fn status(&self) -> &DecodeStatus {
        &self.status
    }

    pub fn is_finished(&self) -> bool {
        self.status != DecodeStatus::InProgress
    }

    /// The stuff bit the stuffing rule requires next, if any.
    pub fn forced_stuff_bit(&self) -> Option<Bit> {
        (self.in_stuffed_region && self.expect_stuff).then(|| self.run_bit.complement())
    }

    /// Field of the next expected bit, `None` when a stuff bit is due or decoding ended.
    pub fn next_field(&self) -> Option<Field> {
        if self.is_finished() || self.forced_stuff_bit().is_some() {
            return None;
        }
        if self.in_stuffed_region {
            let u = self.unstuffed.len();
            return Some(match u {
                0 => Field::Sof,
                1..=11 => Field::Id,
                12 => Field::Rtr,
                13 => Field::Ide,
                14 => Field::R0,
                15..=18 => Field::Dlc,
                _ => {
                    let region = self.region_len.unwrap_or(usize::MAX);
                    if u + 15 < region {
                        Field::Data
                    } else {
                        Field::Crc
                    }
                }
            });
        }
        Some(match self.trailer {
            0 => Field::CrcDelim,
            1 => Field::AckSlot,
            2 => Field::AckDelim,
            _ => Field::Eof,
        })
    }

    pub fn id(&self) -> Option<u16> {
        (self.unstuffed.len() >= 12).then(|| read_uint(&self.unstuffed[1..12]) as u16)
    }

    pub fn rtr(&self) -> Option<bool> {
        self.unstuffed.get(12).map(|b| b.is_recessive())
    }

    pub fn dlc(&self) -> Option<u8> {
        (self.unstuffed.len() >= HEADER_BITS).then(|| read_uint(&self.unstuffed[15..19]) as u8)
    }

    /// Whether the received CRC matched, once the CRC field is complete.
    pub fn crc_ok(&self) -> Option<bool> {
        self.crc_ok
    }

    /// Unstuffed bits received so far (SOF onwards, stuffed region only).
    pub fn unstuffed(&self) -> &[Bit] {
        &self.unstuffed
    }

    fn fail(&mut self, kind: CanErrorKind, bit_index: usize) -> DecodeStatus {
        self.status = DecodeStatus::Error(CanError { kind, bit_index });
        self.status.clone()
    }

    pub fn push(&mut self, bit: Bit) -> DecodeStatus {
        if self.is_finished() {
            return self.status.clone();
        }
        let idx = self.position;
        self.position += 1;

        if !self.in_stuffed_region {
            return self.push_trailer(bit, idx);
        }

        if self.expect_stuff {
            if bit == self.run_bit {
                return self.fail(CanErrorKind::StuffError, idx);
            }
            self.expect_stuff = false;
            self.run_bit = bit;
            self.run_len = 1;
            self.maybe_leave_region();
            return DecodeStatus::InProgress;
        }

        if bit == self.run_bit && self.run_len > 0 {
            self.run_len += 1;
        } else {
            self.run_bit = bit;
            self.run_len = 1;
        }
        if self.run_len == 5 {
            self.expect_stuff = true;
        }

        let u = self.unstuffed.len();
        self.unstuffed.push(bit);
        let region = self.region_len.unwrap_or(usize::MAX);
        if u + 15 < region {
            self.crc.push(bit);
        }
        match u {
            0 if bit.is_recessive() => return self.fail(CanErrorKind::FormError, idx),
            13 | 14 if bit.is_recessive() => return self.fail(CanErrorKind::FormError, idx),
            18 => {
                let dlc = self.dlc().unwrap_or(0);
                if dlc > MAX_DLC {
                    return self.fail(CanErrorKind::FormError, idx);
                }
                let data_bits = if self.rtr() == Some(true) { 0 } else { dlc as usize * 8 };
                self.region_len = Some(HEADER_BITS + data_bits + 15);
            }
            _ => {}
        }
        if Some(self.unstuffed.len()) == self.region_len {
            let received = read_uint(&self.unstuffed[self.unstuffed.len() - 15..]) as u16;
            self.crc_ok = Some(received == self.crc.value());
            self.maybe_leave_region();
        }
        DecodeStatus::InProgress
    }

    fn maybe_leave_region(&mut self) {
        if Some(self.unstuffed.len()) == self.region_len && !self.expect_stuff {
            self.in_stuffed_region = false;
        }
    }

    fn push_trailer(&mut self, bit: Bit, idx: usize) -> DecodeStatus {
        let t = self.trailer;
        self.trailer += 1;
        match t {
            0 if bit.is_dominant() => self.fail(CanErrorKind::FormError, idx),
            1 => DecodeStatus::InProgress,
            2 if self.crc_ok == Some(false) => self.fail(CanErrorKind::CrcError, idx),
            2 if bit.is_dominant() => self.fail(CanErrorKind::FormError, idx),
            _ if t >= 3 && bit.is_dominant() => self.fail(CanErrorKind::FormError, idx),
            _ if t == 2 + EOF_BITS => {
                self.status = DecodeStatus::Complete(self.build_frame());
                self.status.clone()
            }
            _ => DecodeStatus::InProgress,
        }
    }

    fn build_frame(&self) -> CanFrame {
        let id = self.id().unwrap_or(0);
        let dlc = self.dlc().unwrap_or(0);
        if self.rtr() == Some(true) {
            return CanFrame::remote_frame(id, dlc).expect("decoded remote frame is valid");
        }
        let data: Vec<u8> =
            self.unstuffed[HEADER_BITS..HEADER_BITS + dlc as usize * 8].chunks(8).map(|c| read_uint(c) as u8).collect();
        CanFrame::data_frame(id, &data).expect("decoded data frame is valid")
    }
}

/// Decodes a physical bitstream starting at SOF and ending at or after the last EOF bit.
pub fn decode_frame(bits: &[Bit]) -> Result<CanFrame, DecodeError> {
    let mut decoder = FrameDecoder::new();
    for &bit in bits {
        match decoder.push(bit) {
            DecodeStatus::InProgress => {}
            DecodeStatus::Complete(frame) => return Ok(frame),
            DecodeStatus::Error(e) => return Err(e.into()),
        }
    }
    Err(DecodeError::Truncated(bits.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::frame::encode_frame;

    fn errors_with(bits: &[Bit]) -> CanError {
        match decode_frame(bits) {
            Err(DecodeError::Bus(e)) => e,
            other => panic!("expected a bus error, got {other:?}"),
        }
    }

    #[test]
    fn roundtrip_examples() {
        for text in ["38D#R", "000#", "1A2#0011223344556677", "7FF#FFFFFFFF", "123#R8"] {
            let frame: CanFrame = text.parse().unwrap();
            let (bits, _) = encode_frame(&frame).unwrap();
            assert_eq!(decode_frame(&bits).unwrap(), frame, "{text}");
        }
    }

    #[test]
    fn flipped_payload_bit_is_a_crc_error() {
        let frame = CanFrame::data_frame(0x1a2, &[0x55, 0x55]).unwrap();
        let (bits, layout) = encode_frame(&frame).unwrap();
        let data = layout.physical_range(Field::Data);
        let mut flipped = bits.bits().to_vec();
        // 0x55 alternates, so a flip in the middle creates no run of five.
        flipped[data.start + 3] = flipped[data.start + 3].complement();
        let err = errors_with(&flipped);
        assert_eq!(err.kind, CanErrorKind::CrcError);
        assert_eq!(err.bit_index, layout.to_physical(layout.range(Field::AckDelim).start));
    }

    #[test]
    fn sixth_equal_bit_is_a_stuff_error() {
        let frame = CanFrame::data_frame(0, &[]).unwrap();
        let (bits, _) = encode_frame(&frame).unwrap();
        let mut spliced = bits.bits().to_vec();
        spliced.insert(5, Bit::Dominant);
        assert_eq!(errors_with(&spliced), CanError { kind: CanErrorKind::StuffError, bit_index: 5 });
    }

    #[test]
    fn form_errors() {
        let frame = CanFrame::data_frame(0x100, &[1]).unwrap();
        let (bits, layout) = encode_frame(&frame).unwrap();
        let mut broken = bits.bits().to_vec();
        let delim = layout.physical_range(Field::CrcDelim).start;
        broken[delim] = Bit::Dominant;
        assert_eq!(errors_with(&broken).kind, CanErrorKind::FormError);

        let mut eof = bits.bits().to_vec();
        let last = eof.len() - 1;
        eof[last] = Bit::Dominant;
        assert_eq!(errors_with(&eof), CanError { kind: CanErrorKind::FormError, bit_index: last });
    }

    #[test]
    fn truncated_stream() {
        let frame = CanFrame::data_frame(0x100, &[1]).unwrap();
        let (bits, _) = encode_frame(&frame).unwrap();
        assert_eq!(decode_frame(&bits[..20]), Err(DecodeError::Truncated(20)));
    }

    #[test]
    fn next_field_tracks_layout() {
        let frame = CanFrame::data_frame(0x0f0, &[0xf0]).unwrap();
        let (bits, layout) = encode_frame(&frame).unwrap();
        let mut dec = FrameDecoder::new();
        for (i, &b) in bits.iter().enumerate() {
            assert_eq!(dec.next_field(), layout.field_at(i), "bit {i}");
            dec.push(b);
        }
        assert!(matches!(dec.status(), DecodeStatus::Complete(_)));
    }
}
