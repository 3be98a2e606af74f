//! Discrete-event engine: virtual clock, ordered event queue, seeded
//! randomness, latency and the host registry.

mod host;
mod latency;
mod log;
mod rng;
mod scheduler;
mod time;

pub use host::{
    sample_population, Host, HostId, HostRegistry, PopulationEntry, PopulationError,
    PopulationTable, PEER_PORT_RANGE,
};
pub use latency::LatencyModel;
pub use log::{EventLog, LogRecord};
pub use rng::{rng_for, SimRng};
pub use scheduler::{Event, EventId, Labelled, Scheduler, SchedulingInPast};
pub use time::SimTime;
