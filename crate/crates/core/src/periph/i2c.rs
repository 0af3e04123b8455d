use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::template::{Cell, PacketTemplate};
use crate::codec::Bit;

pub const I2C_PAYLOAD_BITS: usize = 8;

/// Share of a CAN bit time that resynchronisation absorbs on each fixed
/// portion, on top of the measurement tolerance.
pub const DEFAULT_RESYNC_FRACTION: f64 = 0.125;

/// Measured durations of the uncontrollable parts of an I2C packet, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct I2cTimings {
    pub start_us: f64,
    pub ack_us: f64,
    pub stop_us: f64,
    pub interframe_us: f64,
    pub tolerance_us: f64,
}

impl I2cTimings {
    /// LPC11C24 measurements.
    pub const LPC11C24: I2cTimings =
        I2cTimings { start_us: 5.2, ack_us: 4.41, stop_us: 5.33, interframe_us: 9.58, tolerance_us: 0.25 };

    /// Durations exactly on the bit grid: one bit each, two for the interframe space.
    pub fn aligned(bit_time_us: f64) -> Self {
        Self {
            start_us: bit_time_us,
            ack_us: bit_time_us,
            stop_us: bit_time_us,
            interframe_us: 2.0 * bit_time_us,
            tolerance_us: 0.0,
        }
    }

    fn portions(&self) -> [(I2cPortion, f64); 4] {
        [
            (I2cPortion::Start, self.start_us),
            (I2cPortion::Ack, self.ack_us),
            (I2cPortion::Stop, self.stop_us),
            (I2cPortion::Interframe, self.interframe_us),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum I2cPortion {
    Start,
    Ack,
    Stop,
    Interframe,
}

impl fmt::Display for I2cPortion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            I2cPortion::Start => "start",
            I2cPortion::Ack => "ack",
            I2cPortion::Stop => "stop",
            I2cPortion::Interframe => "interframe",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum I2cError {
    #[error("bit time must be positive, got {0}")]
    BitTime(f64),
    #[error("durations must be positive and the tolerance non-negative")]
    Timings,
    #[error("{portion} portion does not fit the bit grid (residual {residual:.3} us)")]
    Infeasible { portion: I2cPortion, residual: f64 },
}

/// Widths of the fixed portions, in CAN bits, with their rounding residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct I2cLayout {
    pub start: usize,
    pub ack: usize,
    pub stop: usize,
    pub interframe: usize,
    /// |duration - width * bit_time| per portion, in microseconds.
    pub residuals: [f64; 4],
}

impl I2cLayout {
    pub fn widths(&self) -> (usize, usize, usize, usize) {
        (self.start, self.ack, self.stop, self.interframe)
    }

    pub fn packet_len(&self) -> usize {
        self.start + I2C_PAYLOAD_BITS + self.ack + self.stop + self.interframe
    }

    /// Start and stop conditions hold SDA low around their SCL edge, so both
    /// read dominant; the ACK slot and the idle gap are released (recessive).
    pub fn template(&self) -> PacketTemplate {
        let mut cells = Vec::with_capacity(self.packet_len());
        let mut push = |cell, n| cells.extend(std::iter::repeat_n(cell, n));
        push(Cell::Fixed(Bit::Dominant), self.start);
        push(Cell::Free, I2C_PAYLOAD_BITS);
        push(Cell::Fixed(Bit::Recessive), self.ack);
        push(Cell::Fixed(Bit::Dominant), self.stop);
        push(Cell::Fixed(Bit::Recessive), self.interframe);
        let (s, a, p, k) = self.widths();
        PacketTemplate::new(cells, format!("i2c-{s}{a}{p}{k}")).expect("I2C packets are non-empty")
    }

    /// Cell index where the ACK portion begins.
    pub fn ack_offset(&self) -> usize {
        self.start + I2C_PAYLOAD_BITS
    }
}

/// Maps each fixed portion to a whole number of CAN bits, with the default
/// resynchronisation allowance.
pub fn i2c_template(t: &I2cTimings, bit_time_us: f64) -> Result<I2cLayout, I2cError> {
    i2c_template_with(t, bit_time_us, DEFAULT_RESYNC_FRACTION)
}

/// A portion of duration `d` takes `n = round(d / bit_time)` bits when
/// `n >= 1` and `|d - n * bit_time| <= tolerance + resync_fraction * bit_time`.
pub fn i2c_template_with(t: &I2cTimings, bit_time_us: f64, resync_fraction: f64) -> Result<I2cLayout, I2cError> {
    if !(bit_time_us > 0.0 && bit_time_us.is_finite()) {
        return Err(I2cError::BitTime(bit_time_us));
    }
    let negative = |x: f64| x.is_nan() || x < 0.0;
    if t.portions().iter().any(|&(_, d)| negative(d) || d == 0.0)
        || negative(t.tolerance_us)
        || negative(resync_fraction)
    {
        return Err(I2cError::Timings);
    }
    let allowance = t.tolerance_us + resync_fraction * bit_time_us;
    let mut widths = [0usize; 4];
    let mut residuals = [0f64; 4];
    for (i, (portion, d)) in t.portions().into_iter().enumerate() {
        let n = (d / bit_time_us).round();
        let residual = (d - n * bit_time_us).abs();
        // A small epsilon keeps exact decimal inputs from failing on float noise.
        if n < 1.0 || residual > allowance + 1e-9 {
            return Err(I2cError::Infeasible { portion, residual: if n < 1.0 { d } else { residual } });
        }
        widths[i] = n as usize;
        residuals[i] = residual;
    }
    Ok(I2cLayout { start: widths[0], ack: widths[1], stop: widths[2], interframe: widths[3], residuals })
}
