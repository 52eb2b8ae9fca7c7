use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::radio::{compute_time, transfer_time, ModelError};
use crate::cognition::{CognitionParams, CognitionState};
use crate::Position;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident($inner:ty), $prefix:literal) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub $inner);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(UavId(u32), "uav");
id_type!(DeviceId(u32), "dev");
id_type!(
    /// Task ids embed the originating device in the high 32 bits so that a
    /// device's ids never depend on how many other devices exist.
    TaskId(u64),
    "task"
);
id_type!(SubnetId(u32), "subnet");

impl TaskId {
    pub fn for_device(device: DeviceId, index: u32) -> Self {
        TaskId(((device.0 as u64) << 32) | index as u64)
    }

    pub fn device(self) -> DeviceId {
        DeviceId((self.0 >> 32) as u32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapabilityClass {
    Perception,
    Relay,
    Compute,
    Strike,
}

impl CapabilityClass {
    pub const ALL: [CapabilityClass; 4] = [
        CapabilityClass::Perception,
        CapabilityClass::Relay,
        CapabilityClass::Compute,
        CapabilityClass::Strike,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CapabilityClass::Perception => "perception",
            CapabilityClass::Relay => "relay",
            CapabilityClass::Compute => "compute",
            CapabilityClass::Strike => "strike",
        }
    }
}

impl fmt::Display for CapabilityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CapabilityClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CapabilityClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown capability class `{s}`"))
    }
}

/// Where a UAV currently belongs. Every UAV is in exactly one subnet or in
/// the resource pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Subnet(SubnetId),
    Pool,
}

#[derive(Clone, Debug)]
pub struct UavNode {
    pub id: UavId,
    pub pos: Position,
    /// m/s.
    pub speed: f64,
    /// cycles/s.
    pub compute_capacity: f64,
    pub capability_class: CapabilityClass,
    pub membership: Membership,
    /// Accepted tasks not yet completed, head first.
    pub queue: VecDeque<TaskId>,
    pub cognition: CognitionState,
    pub is_gateway: bool,
}

impl UavNode {
    pub fn new(
        id: UavId,
        pos: Position,
        compute_capacity: f64,
        capability_class: CapabilityClass,
        cognition: &CognitionParams,
    ) -> Self {
        Self {
            id,
            pos,
            speed: 0.0,
            compute_capacity,
            capability_class,
            membership: Membership::Pool,
            queue: VecDeque::new(),
            cognition: CognitionState::new(cognition),
            is_gateway: false,
        }
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        if self.is_gateway && self.membership == Membership::Pool {
            return Err(format!("{} is a gateway while in the pool", self.id));
        }
        if !(self.compute_capacity > 0.0) {
            return Err(format!("{} has non-positive compute capacity", self.id));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IotDevice {
    pub id: DeviceId,
    pub pos: Position,
    /// Tasks per second.
    pub arrival_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub origin: DeviceId,
    /// Bits.
    pub data_size: f64,
    /// CPU cycles.
    pub compute_demand: f64,
    /// Higher is more urgent.
    pub priority: i32,
    pub arrival_time: f64,
    pub assigned_uav: Option<UavId>,
    pub forwarded_to: Option<UavId>,
    pub completion_time: Option<f64>,
}

impl Task {
    pub fn new(id: TaskId, origin: DeviceId, data_size: f64, compute_demand: f64, arrival_time: f64) -> Self {
        Self {
            id,
            origin,
            data_size,
            compute_demand,
            priority: 0,
            arrival_time,
            assigned_uav: None,
            forwarded_to: None,
            completion_time: None,
        }
    }

    pub fn transfer_time(&self, rate: f64) -> Result<f64, ModelError> {
        transfer_time(self.data_size, rate)
    }

    pub fn compute_time(&self, capacity: f64) -> Result<f64, ModelError> {
        compute_time(self.compute_demand, capacity)
    }

    /// The UAV that actually runs the task.
    pub fn executor(&self) -> Option<UavId> {
        self.forwarded_to.or(self.assigned_uav)
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        if let Some(done) = self.completion_time {
            if done < self.arrival_time {
                return Err(format!("{} completes before it arrives", self.id));
            }
        }
        if self.forwarded_to.is_some() && self.forwarded_to == self.assigned_uav {
            return Err(format!("{} forwarded to its own first hop", self.id));
        }
        Ok(())
    }
}
