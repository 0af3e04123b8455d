use crate::codec::Bit;

/// Something that can put a bit on a conflicting TX pin each bit time.
pub trait BitSender {
    fn drive(&mut self, tick: u64) -> Bit;
}

/// Something that samples the bus level each bit time.
pub trait BitReceiver {
    fn observe(&mut self, tick: u64, bus: Bit);
}

/// A sender that never drives the bus.
#[derive(Debug, Clone, Copy, Default)]
pub struct Silent;

impl BitSender for Silent {
    fn drive(&mut self, _tick: u64) -> Bit {
        Bit::Recessive
    }
}

impl BitReceiver for Silent {
    fn observe(&mut self, _tick: u64, _bus: Bit) {}
}

/// Replays a fixed bit sequence starting at `start`, recessive elsewhere.
#[derive(Debug, Clone)]
pub struct Replay {
    start: u64,
    bits: Vec<Bit>,
}

impl Replay {
    pub fn new(start: u64, bits: Vec<Bit>) -> Self {
        Self { start, bits }
    }
}

impl BitSender for Replay {
    fn drive(&mut self, tick: u64) -> Bit {
        tick.checked_sub(self.start).and_then(|i| self.bits.get(i as usize).copied()).unwrap_or(Bit::Recessive)
    }
}

impl BitReceiver for Replay {
    fn observe(&mut self, _tick: u64, _bus: Bit) {}
}

/// Holds the bus dominant during `[start, start + duration)`.
#[derive(Debug, Clone, Copy)]
pub struct DominantHold {
    pub start: u64,
    pub duration: u64,
}

impl BitSender for DominantHold {
    fn drive(&mut self, tick: u64) -> Bit {
        Bit::from_level(!(tick >= self.start && tick - self.start < self.duration))
    }
}

impl BitReceiver for DominantHold {
    fn observe(&mut self, _tick: u64, _bus: Bit) {}
}
