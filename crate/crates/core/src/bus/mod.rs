//! Bit-time discrete bus simulator: wired-AND resolution, arbitration, error
//! signalling and fault confinement.

mod counters;
mod event;
mod node;
mod scenario;
mod world;

pub use counters::{
    apply_error_counting, recover_bus_off, Counters, CountingRole, ErrorState, Outcome, Recovery, BUS_OFF_TEC,
    PASSIVE_THRESHOLD, RECOVERY_RUN, RECOVERY_RUNS,
};
pub use event::{read_jsonl, write_jsonl, BusEvent, ErrorRole, EventKind, FlagKind, NodeId};
pub use node::{Node, PhaseKind, ERROR_DELIMITER_BITS, ERROR_FLAG_BITS, INTERMISSION_BITS, SUSPEND_BITS};
#[allow(unused_imports)]
pub(crate) use scenario::parse_hex_id;
pub use scenario::{
    quantize_schedule, replay_node_name, CounterSpec, MessageSpec, NodeSpec, ReplaySpec, Scenario, ScenarioError,
};
pub use world::{resolve_bus, BusActor, BusConfig, ConfigError, World};
