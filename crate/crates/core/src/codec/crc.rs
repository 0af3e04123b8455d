use super::bits::{push_uint, Bit};

/// x^15 + x^14 + x^10 + x^8 + x^7 + x^4 + x^3 + 1, without the x^15 term.
pub const CRC15_POLY: u16 = 0x4599;
const CRC15_MASK: u16 = 0x7fff;

/// Incremental CRC-15 register, zero seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Crc15 {
    value: u16,
}

impl Crc15 {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bit: Bit) {
        let feedback = (bit.value() as u16) ^ ((self.value >> 14) & 1);
        self.value = (self.value << 1) & CRC15_MASK;
        if feedback == 1 {
            self.value ^= CRC15_POLY;
        }
    }

    pub fn value(&self) -> u16 {
        self.value
    }
}

/// CRC-15 of the unstuffed bits from SOF through the end of the data field.
pub fn crc15(bits: &[Bit]) -> u16 {
    let mut reg = Crc15::new();
    bits.iter().for_each(|&b| reg.push(b));
    reg.value()
}

/// The 15 CRC bits, MSB first.
pub fn crc_bits(crc: u16) -> Vec<Bit> {
    let mut out = Vec::with_capacity(15);
    push_uint(&mut out, crc as u32, 15);
    out
}
