//! Evaluation scenarios and the open-world online protocol.

pub mod config;
pub mod protocol;
pub mod scenario;

pub use config::{parse_kv, read_kv_file, ScenarioConfig, ScenarioKind, VolumeProfile};
pub use protocol::{
    run_closed_stream, run_protocol, run_scenario1, run_scenario2, ClosedEval, GridCell,
    ProtocolOptions, ProtocolOutput, StepRecord,
};
pub use scenario::{
    generate_scenario1, generate_scenario2, generate_scenario3, BatchPlan, ClassBatch,
    StreamEvent, StreamSchedule,
};
