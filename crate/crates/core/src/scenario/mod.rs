//! Scenario configuration and the event-driven run that wires every
//! component together.

mod config;
mod world;

pub use config::{
    apply_override, AnalysisConfig, BtConfig, ConfigError, PolicyName, PopulationConfig,
    PortWeight, ScenarioConfig, SimConfig, TorConfig, WebConfig, DEFAULT_SCENARIO,
};
pub use world::{run, RunError, RunOutput, RunStats, Snapshot};
