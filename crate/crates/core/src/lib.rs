//! Deterministic discrete-event simulator for cognitive UAV swarms.
//!
//! The geometric and radio cost model is generic over the floating-point
//! type (see [`scalar::Scalar`]); the event-driven layers run in `f64`.

pub mod cognition;
pub mod control;
pub mod engine;
pub mod error;
pub mod model;
pub mod offload;
pub mod reconfig;
pub mod scalar;
pub mod scenario;
pub mod sweep;

pub use engine::{run, run_with, EventLog, RunOptions, SimConfig, ValidationReport};
pub use error::{Error, Result};
pub use offload::{MetricRecord, PolicyKind};
pub use scalar::Scalar;

pub type Position = model::Position<f64>;
pub type ChannelParams = model::ChannelParams<f64>;
pub type EnvironmentField = model::EnvironmentField<f64>;
pub type InterferenceZone = model::InterferenceZone<f64>;
pub type RiskZone = model::RiskZone<f64>;

pub type Position32 = model::Position<f32>;
pub type ChannelParams32 = model::ChannelParams<f32>;
pub type EnvironmentField32 = model::EnvironmentField<f32>;
