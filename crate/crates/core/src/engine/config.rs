use std::fmt;

use serde::Serialize;

use crate::cognition::{CognitionParams, Strategy, StrategyStore};
use crate::control::{ControlMode, ControlParams};
use crate::model::CapabilityClass;
use crate::offload::{BanditParams, PolicyKind, TaskParams};
use crate::reconfig::{FormationKind, FormationTemplate, RegistryParams};
use crate::{ChannelParams, EnvironmentField};

/// Everything a run depends on. Two equal configs produce identical logs.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    /// Side of the square operating area, meters.
    pub area_side: f64,
    pub n_uavs: usize,
    pub n_devices: usize,
    /// Simulated seconds.
    pub horizon: f64,
    pub control_mode: ControlMode,
    pub policy: PolicyKind,
    pub channel: ChannelParams,
    pub tasks: TaskParams,
    /// Tasks per second per device.
    pub arrival_rate: f64,
    pub uav_altitude: f64,
    /// Random-waypoint speed, m/s. Zero keeps UAVs at their hover points.
    pub uav_speed: f64,
    /// cycles/s.
    pub compute_capacity: f64,
    /// Most tasks a UAV holds (in service plus waiting); 0 is unbounded.
    pub queue_capacity: usize,
    /// Assigned to UAVs round-robin by id.
    pub capability_classes: Vec<CapabilityClass>,
    /// Explicit horizontal UAV positions; default is a hover grid.
    pub uav_positions: Option<Vec<(f64, f64)>>,
    /// Explicit device positions; default is uniform placement.
    pub device_positions: Option<Vec<(f64, f64)>>,
    pub formation: FormationTemplate,
    pub control: ControlParams,
    pub cognition: CognitionParams,
    pub risk_strategy: StrategyStore,
    pub bandit: BanditParams,
    pub self_org_duration: f64,
    /// A completed task scores as a success in the shunt cycle when its
    /// latency is within this budget.
    pub latency_budget: f64,
    pub env: EnvironmentField,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            area_side: 1000.0,
            n_uavs: 6,
            n_devices: 10,
            horizon: 300.0,
            control_mode: ControlMode::Hierarchical,
            policy: PolicyKind::Coop,
            channel: ChannelParams::default(),
            tasks: TaskParams::default(),
            arrival_rate: 0.5,
            uav_altitude: 100.0,
            uav_speed: 0.0,
            compute_capacity: 1e9,
            queue_capacity: 10,
            capability_classes: vec![CapabilityClass::Perception, CapabilityClass::Relay, CapabilityClass::Compute],
            uav_positions: None,
            device_positions: None,
            formation: FormationTemplate::new(FormationKind::Grid),
            control: ControlParams::default(),
            cognition: CognitionParams::default(),
            risk_strategy: StrategyStore::default(),
            bandit: BanditParams::default(),
            self_org_duration: RegistryParams::default().self_org_duration,
            latency_budget: 5.0,
            env: EnvironmentField::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

/// Every violated field, not just the first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<FieldError>,
}

impl ValidationReport {
    pub fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.errors.push(FieldError { field: field.into(), message: message.into() });
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn fields(&self) -> impl Iterator<Item = &str> {
        self.errors.iter().map(|e| e.field.as_str())
    }

    pub fn into_result(self) -> Result<(), ValidationReport> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(self)
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration ({} error(s)):", self.errors.len())?;
        for e in &self.errors {
            writeln!(f, "  {}: {}", e.field, e.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationReport {}

impl SimConfig {
    /// Cognition parameters with the area and rate floor of this config.
    pub fn cognition_params(&self) -> CognitionParams {
        CognitionParams { area_side: self.area_side, rate_floor: self.control.rate_floor, ..self.cognition.clone() }
    }

    pub fn class_of(&self, uav: usize) -> CapabilityClass {
        if self.capability_classes.is_empty() {
            CapabilityClass::Compute
        } else {
            self.capability_classes[uav % self.capability_classes.len()]
        }
    }

    pub fn validate(&self) -> Result<(), ValidationReport> {
        let mut r = ValidationReport::default();
        let positive = |r: &mut ValidationReport, field: &str, v: f64| {
            if !(v.is_finite() && v > 0.0) {
                r.push(field, format!("must be finite and > 0 (got {v})"));
            }
        };
        positive(&mut r, "area_side", self.area_side);
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            r.push("horizon", format!("must be finite and >= 0 (got {})", self.horizon));
        }
        positive(&mut r, "bandwidth", self.channel.bandwidth);
        positive(&mut r, "tx_power", self.channel.tx_power);
        positive(&mut r, "noise_power", self.channel.noise_power);
        positive(&mut r, "reference_gain", self.channel.reference_gain);
        positive(&mut r, "min_distance", self.channel.min_distance);
        let ple = self.channel.path_loss_exponent;
        if !(2.0..=4.0).contains(&ple) {
            r.push("path_loss_exponent", format!("must be in [2, 4] (got {ple})"));
        }
        positive(&mut r, "arrival_rate", self.arrival_rate);
        positive(&mut r, "data_size_min", self.tasks.data_size_min);
        positive(&mut r, "data_size_max", self.tasks.data_size_max);
        if self.tasks.data_size_min > self.tasks.data_size_max {
            r.push("data_size_max", "must be >= data_size_min");
        }
        positive(&mut r, "compute_demand_min", self.tasks.compute_demand_min);
        positive(&mut r, "compute_demand_max", self.tasks.compute_demand_max);
        if self.tasks.compute_demand_min > self.tasks.compute_demand_max {
            r.push("compute_demand_max", "must be >= compute_demand_min");
        }
        if self.tasks.priority_levels == 0 {
            r.push("priority_levels", "must be >= 1");
        }
        if !(self.uav_altitude.is_finite() && self.uav_altitude >= 0.0) {
            r.push("uav_altitude", "must be finite and >= 0");
        }
        if !(self.uav_speed.is_finite() && self.uav_speed >= 0.0) {
            r.push("uav_speed", "must be finite and >= 0");
        }
        positive(&mut r, "compute_capacity", self.compute_capacity);
        let in_area = |&(x, y): &(f64, f64)| {
            x.is_finite() && y.is_finite() && (0.0..=self.area_side).contains(&x) && (0.0..=self.area_side).contains(&y)
        };
        if let Some(p) = &self.uav_positions {
            if p.len() != self.n_uavs {
                r.push("uav_positions", format!("has {} entries for {} UAVs", p.len(), self.n_uavs));
            }
            if !p.iter().all(in_area) {
                r.push("uav_positions", "every position must lie inside the area");
            }
        }
        if let Some(p) = &self.device_positions {
            if p.len() != self.n_devices {
                r.push("device_positions", format!("has {} entries for {} devices", p.len(), self.n_devices));
            }
            if !p.iter().all(in_area) {
                r.push("device_positions", "every position must lie inside the area");
            }
        }
        if self.formation.kind == FormationKind::PackHierarchy && self.formation.branching == 0 {
            r.push("pack_branching", "must be >= 1");
        }
        positive(&mut r, "control_period", self.control.control_period);
        if !(self.control.ctrl_latency.is_finite() && self.control.ctrl_latency >= 0.0) {
            r.push("ctrl_latency", "must be finite and >= 0");
        }
        positive(&mut r, "staleness_periods", self.control.staleness_periods);
        if !(self.control.rate_floor.is_finite() && self.control.rate_floor >= 0.0) {
            r.push("rate_floor", "must be finite and >= 0");
        }
        if !(self.control.message_bits.is_finite() && self.control.message_bits >= 0.0) {
            r.push("message_bits", "must be finite and >= 0");
        }
        if self.cognition.region_cells == 0 {
            r.push("region_cells", "must be >= 1");
        }
        if !(self.cognition.attention_boost.is_finite() && self.cognition.attention_boost >= 1.0) {
            r.push("attention_boost", "must be finite and >= 1");
        }
        if self.cognition.history < 2 {
            r.push("history", "must be >= 2");
        }
        if self.cognition.experience_capacity == 0 {
            r.push("experience_capacity", "must be >= 1");
        }
        if !(self.cognition.alert_threshold < self.cognition.critical_threshold) {
            r.push("critical_threshold", "must exceed alert_threshold");
        }
        if !(0.0..=1.0).contains(&self.bandit.epsilon) {
            r.push("epsilon", "must be in [0, 1]");
        }
        if !(self.bandit.step > 0.0 && self.bandit.step <= 1.0) {
            r.push("bandit_step", "must be in (0, 1]");
        }
        if !(self.self_org_duration.is_finite() && self.self_org_duration >= 0.0) {
            r.push("self_org_duration", "must be finite and >= 0");
        }
        positive(&mut r, "latency_budget", self.latency_budget);
        if let Err(e) = self.env.validate() {
            r.push("zones", e);
        }
        if self.risk_strategy.get(0) == Strategy::RetreatToPool {
            r.push("risk_strategy", "level 0 cannot retreat");
        }
        r.into_result()
    }
}
