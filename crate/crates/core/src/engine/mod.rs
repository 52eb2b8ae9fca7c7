//! Deterministic discrete-event core: clock and queue, RNG substreams, the
//! hashed event log, configuration and the simulation loop.

pub mod config;
pub mod log;
pub mod queue;
pub mod rng;
pub mod sim;

pub use config::{FieldError, SimConfig, ValidationReport};
pub use log::{EventLog, LogEntry};
pub use queue::{EventQueue, ScheduleError, Scheduled};
pub use rng::RngStreams;
pub use sim::{run, run_with, RunOptions};
