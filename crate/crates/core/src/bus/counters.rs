use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::Bit;

pub const PASSIVE_THRESHOLD: u32 = 127;
pub const BUS_OFF_TEC: u32 = 256;
pub const RECOVERY_RUN: u32 = 11;
pub const RECOVERY_RUNS: u32 = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorState {
    ErrorActive,
    ErrorPassive,
    BusOff,
}

impl fmt::Display for ErrorState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ErrorState::ErrorActive => "ErrorActive",
            ErrorState::ErrorPassive => "ErrorPassive",
            ErrorState::BusOff => "BusOff",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CountingRole {
    Transmitter,
    Receiver,
    /// The receiver whose own detection started the error signalling.
    ErrorCausingReceiver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    Error,
}

/// Bus-off recovery progress: completed runs of 11 consecutive recessive bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Recovery {
    pub run: u32,
    pub completed: u32,
}

impl Recovery {
    /// Feeds one observed bit; true once the 128th run completes.
    pub fn observe(&mut self, bit: Bit) -> bool {
        if bit.is_dominant() {
            self.run = 0;
            return false;
        }
        self.run += 1;
        if self.run == RECOVERY_RUN {
            self.run = 0;
            self.completed += 1;
        }
        self.completed >= RECOVERY_RUNS
    }
}

/// Transmit and receive error counters with the derived fault-confinement state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    tec: u32,
    rec: u32,
    state: ErrorState,
    recovery: Recovery,
}

impl Default for Counters {
    fn default() -> Self {
        Self::new()
    }
}

impl Counters {
    pub fn new() -> Self {
        Self { tec: 0, rec: 0, state: ErrorState::ErrorActive, recovery: Recovery::default() }
    }

    /// Counters at given values; TEC at or above 256 means bus-off (clamped).
    pub fn with_values(tec: u32, rec: u32) -> Self {
        let mut c =
            Self { tec: tec.min(BUS_OFF_TEC), rec, state: ErrorState::ErrorActive, recovery: Recovery::default() };
        c.state = c.derived_state();
        c
    }

    pub fn tec(&self) -> u32 {
        self.tec
    }

    pub fn rec(&self) -> u32 {
        self.rec
    }

    pub fn state(&self) -> ErrorState {
        self.state
    }

    pub fn recovery(&self) -> Recovery {
        self.recovery
    }

    fn derived_state(&self) -> ErrorState {
        if self.tec >= BUS_OFF_TEC {
            ErrorState::BusOff
        } else if self.tec > PASSIVE_THRESHOLD || self.rec > PASSIVE_THRESHOLD {
            ErrorState::ErrorPassive
        } else {
            ErrorState::ErrorActive
        }
    }

    /// Applies one counting event. Returns the state transition, if any.
    /// Bus-off counters are left untouched; only recovery leaves bus-off.
    pub fn apply(&mut self, role: CountingRole, outcome: Outcome) -> Option<(ErrorState, ErrorState)> {
        if self.state == ErrorState::BusOff {
            return None;
        }
        match (role, outcome) {
            (CountingRole::Transmitter, Outcome::Error) => self.tec = (self.tec + 8).min(BUS_OFF_TEC),
            (CountingRole::Receiver, Outcome::Error) => self.rec += 1,
            (CountingRole::ErrorCausingReceiver, Outcome::Error) => self.rec += 8,
            (CountingRole::Transmitter, Outcome::Success) => self.tec = self.tec.saturating_sub(1),
            (_, Outcome::Success) => self.rec = self.rec.saturating_sub(1),
        }
        let before = self.state;
        self.state = self.derived_state();
        if self.state == ErrorState::BusOff {
            self.recovery = Recovery::default();
        }
        (before != self.state).then_some((before, self.state))
    }

    /// Feeds one bus bit to the bus-off recovery counter. Returns the transition
    /// back to error-active when recovery completes.
    pub fn observe_recovery(&mut self, bit: Bit) -> Option<(ErrorState, ErrorState)> {
        if self.state != ErrorState::BusOff {
            return None;
        }
        if self.recovery.observe(bit) {
            *self = Self::new();
            return Some((ErrorState::BusOff, ErrorState::ErrorActive));
        }
        None
    }
}

/// Value-style wrapper around [`Counters::apply`].
pub fn apply_error_counting(mut counters: Counters, role: CountingRole, outcome: Outcome) -> Counters {
    counters.apply(role, outcome);
    counters
}

/// Value-style wrapper around [`Counters::observe_recovery`].
pub fn recover_bus_off(mut counters: Counters, observed: &[Bit]) -> Counters {
    for &bit in observed {
        counters.observe_recovery(bit);
    }
    counters
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transmitter_error_adds_eight() {
        let c = apply_error_counting(Counters::new(), CountingRole::Transmitter, Outcome::Error);
        assert_eq!(c.tec(), 8);
        assert_eq!(c.state(), ErrorState::ErrorActive);
    }

    #[test]
    fn receiver_success_decrements() {
        let c = apply_error_counting(Counters::with_values(0, 5), CountingRole::Receiver, Outcome::Success);
        assert_eq!(c.rec(), 4);
        let c = apply_error_counting(Counters::new(), CountingRole::Transmitter, Outcome::Success);
        assert_eq!(c.tec(), 0);
    }

    #[test]
    fn thirty_two_errors_reach_bus_off() {
        let mut c = Counters::new();
        for n in 1..=32 {
            let t = c.apply(CountingRole::Transmitter, Outcome::Error);
            match n {
                16 => assert_eq!(t, Some((ErrorState::ErrorActive, ErrorState::ErrorPassive))),
                32 => assert_eq!(t, Some((ErrorState::ErrorPassive, ErrorState::BusOff))),
                _ => assert_eq!(t, None),
            }
        }
        assert_eq!(c.tec(), 256);
    }

    #[test]
    fn recovery_needs_full_runs() {
        let off = Counters::with_values(256, 0);
        let bits = vec![Bit::Recessive; 128 * 11];
        assert_eq!(recover_bus_off(off, &bits[..bits.len() - 1]).state(), ErrorState::BusOff);
        assert_eq!(recover_bus_off(off, &bits).state(), ErrorState::ErrorActive);

        let mut broken = Vec::new();
        for _ in 0..200 {
            broken.extend([Bit::Recessive; 10]);
            broken.push(Bit::Dominant);
        }
        assert_eq!(recover_bus_off(off, &broken).recovery().completed, 0);
    }
}
