//! Shared domain types plus the radio and compute cost model.

mod entities;
mod geometry;
mod radio;

pub use entities::{CapabilityClass, DeviceId, IotDevice, Membership, SubnetId, Task, TaskId, UavId, UavNode};
pub use geometry::{distance, Position};
pub use radio::{
    compute_time, link_rate, transfer_time, ChannelParams, EnvironmentField, InterferenceZone, ModelError,
    RiskLevel, RiskZone, MAX_RISK_LEVEL,
};
