//! Classic base-format CAN frames: CRC-15, bit stuffing, physical layout and decoding.

mod bits;
mod crc;
mod decode;
mod frame;

pub use bits::{bits_to_string, parse_bits, push_uint, read_uint, stuff, Bit, Bitstream, ParseBitsError};
pub use crc::{crc15, crc_bits, Crc15, CRC15_POLY};
pub use decode::{decode_frame, CanError, CanErrorKind, DecodeError, DecodeStatus, FrameDecoder};
pub use frame::{
    encode_frame, stuffed_length_bounds, CanFrame, Field, FrameError, FrameLayout, EOF_BITS, HEADER_BITS, IFS_BITS,
    MAX_DLC, MAX_ID, TRAILER_BITS,
};
