mod compat;
mod corpus;
mod i2c;
mod plan;
mod uart;

use thiserror::Error;

pub use compat::{bus_view, compat_prefix, id_end, Blocker, CompatResult, CompatSpace};
pub use corpus::{analyze_corpus, CompatReport, FrameRow, NamedSpace, ProtocolResult, ProtocolSummary};
pub use i2c::{
    synth_i2c, FrameSpec, I2cInfeasibleReason, I2cSynthOptions, I2cSynthesis, DEFAULT_MAX_ATTEMPTS, DEFAULT_MAX_PACKETS,
};
pub use plan::{synth_spi, PlanPacket, PolyglotPlan, Protocol, UnknownProtocol};
pub use uart::synth_uart;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("target must start with a dominant bit (SOF)")]
    NotStartOfFrame,
    #[error("no UART packetization exists; deepest packet boundary reached at bit {deepest}")]
    UartInfeasible { deepest: usize },
    #[error("no I2C chain found ({reason:?}): {detail}")]
    I2cInfeasible { reason: I2cInfeasibleReason, detail: String },
    #[error("invalid frame constraints: {0}")]
    Spec(String),
}
