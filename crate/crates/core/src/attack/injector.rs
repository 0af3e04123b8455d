use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::bus::RECOVERY_RUN;
use crate::codec::Bit;
use crate::periph::{BitReceiver, BitSender};

/// Shared count of completed injections, readable while the actor sits in the world.
pub type InjectionCounter = Arc<AtomicUsize>;

/// Follows the bus bit by bit: a dominant bit after at least 11 recessive
/// bits opens a frame, which is then compared with `pattern`.
#[derive(Debug, Clone)]
struct PrefixMatcher {
    pattern: Vec<Bit>,
    recessive_run: u32,
    pos: Option<usize>,
}

impl PrefixMatcher {
    fn new(pattern: Vec<Bit>) -> Self {
        Self { pattern, recessive_run: RECOVERY_RUN, pos: None }
    }

    /// Returns true on the bit that completes the pattern.
    fn observe(&mut self, bus: Bit) -> bool {
        let mut matched = false;
        self.pos = match self.pos {
            None if bus.is_dominant() && self.recessive_run >= RECOVERY_RUN => Some(1),
            Some(i) if self.pattern[i] == bus => Some(i + 1),
            _ => None,
        };
        if self.pos == Some(self.pattern.len()) {
            matched = true;
            self.pos = None;
        }
        self.recessive_run = if bus.is_recessive() { self.recessive_run.saturating_add(1) } else { 0 };
        matched
    }

    /// Keeps the idle count current while the actor itself is driving.
    fn track(&mut self, bus: Bit) {
        self.pos = None;
        self.recessive_run = if bus.is_recessive() { self.recessive_run.saturating_add(1) } else { 0 };
    }
}

/// Reader matches the victim's SOF..r0; the writer then emits its burst
/// from the next bit, i.e. the first bit of the DLC region.
pub struct TargetedDosActor {
    matcher: PrefixMatcher,
    burst: Vec<Bit>,
    active: Option<(u64, usize)>,
    limit: usize,
    done: InjectionCounter,
}

impl TargetedDosActor {
    pub fn new(prefix: Vec<Bit>, burst: Vec<Bit>, limit: usize, done: InjectionCounter) -> Self {
        Self { matcher: PrefixMatcher::new(prefix), burst, active: None, limit, done }
    }
}

impl BitSender for TargetedDosActor {
    fn drive(&mut self, tick: u64) -> Bit {
        match self.active {
            Some((start, len)) if tick >= start && tick < start + len as u64 => self.burst[(tick - start) as usize],
            _ => Bit::Recessive,
        }
    }
}

impl BitReceiver for TargetedDosActor {
    fn observe(&mut self, tick: u64, bus: Bit) {
        if let Some((start, len)) = self.active {
            self.matcher.track(bus);
            if tick + 1 >= start + len as u64 {
                self.active = None;
            }
            return;
        }
        if self.matcher.observe(bus) && self.done.load(Ordering::SeqCst) < self.limit {
            self.active = Some((tick + 1, self.burst.len()));
            self.done.fetch_add(1, Ordering::SeqCst);
        }
    }
}

/// Reader matches the victim up to one of its recessive ID bits; the writer
/// overwrites that bit and completes `takeover` so the bus sees a valid frame.
pub struct ArbitrationDenialActor {
    matcher: PrefixMatcher,
    takeover: Vec<Bit>,
    /// Index in `takeover` where driving starts.
    from: usize,
    /// Index of the ACK slot, where others legitimately override us.
    ack_slot: usize,
    writing: Option<(u64, usize)>,
    limit: usize,
    done: InjectionCounter,
}

impl ArbitrationDenialActor {
    pub fn new(takeover: Vec<Bit>, from: usize, ack_slot: usize, limit: usize, done: InjectionCounter) -> Self {
        let matcher = PrefixMatcher::new(takeover[..from].to_vec());
        Self { matcher, takeover, from, ack_slot, writing: None, limit, done }
    }
}

impl BitSender for ArbitrationDenialActor {
    fn drive(&mut self, tick: u64) -> Bit {
        match self.writing {
            Some((start, from)) if tick >= start => {
                let i = from + (tick - start) as usize;
                self.takeover.get(i).copied().unwrap_or(Bit::Recessive)
            }
            _ => Bit::Recessive,
        }
    }
}

impl BitReceiver for ArbitrationDenialActor {
    fn observe(&mut self, tick: u64, bus: Bit) {
        if let Some((start, from)) = self.writing {
            let i = from + (tick - start) as usize;
            let wrote = self.takeover[i];
            self.matcher.track(bus);
            // Someone else won a later bit: stop writing at once.
            if wrote.is_recessive() && bus.is_dominant() && i != self.ack_slot {
                self.writing = None;
                return;
            }
            if i + 1 == self.takeover.len() {
                self.writing = None;
                self.done.fetch_add(1, Ordering::SeqCst);
            }
            return;
        }
        if self.matcher.observe(bus) && self.done.load(Ordering::SeqCst) < self.limit {
            self.writing = Some((tick + 1, self.from));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::parse_bits;

    #[test]
    fn matcher_needs_idle_before_sof() {
        let mut m = PrefixMatcher::new(parse_bits("010").unwrap());
        let hits: Vec<bool> = parse_bits("0101010").unwrap().into_iter().map(|b| m.observe(b)).collect();
        assert_eq!(hits, [false, false, true, false, false, false, false]);
    }
}
