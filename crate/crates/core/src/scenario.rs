//! Scenario files: flat TOML whose keys mirror [`SimConfig`] fields.
//!
//! Physical quantities are plain numbers in SI base units or strings with a
//! unit suffix (`"1 MHz"`, `"100 ms"`, `"1.5 Mbit"`, `"3 Gcycles/s"`).
//! Zones are arrays of rows: `interference_zones = [[x, y, radius, watts]]`,
//! `risk_zones = [[x, y, radius, level]]`.

use std::path::Path;

use toml::Value;

use crate::cognition::{StrategyStore, Strategy};
use crate::engine::config::{SimConfig, ValidationReport};
use crate::error::{Error, Result};
use crate::model::{CapabilityClass, InterferenceZone, RiskZone};
use crate::Position;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Integer,
    Count,
    Plain,
    Quantity(Dim),
    Text,
    Classes,
    Points,
    Strategies,
    InterferenceZones,
    RiskZones,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Dim {
    Frequency,
    Time,
    Length,
    Power,
    Data,
    Cycles,
    CycleRate,
    DataRate,
    PerSecond,
    Speed,
}

/// Every accepted key, in documentation order.
pub const KEYS: &[&str] = &[
    "seed",
    "area_side",
    "n_uavs",
    "n_devices",
    "horizon",
    "policy",
    "control_mode",
    "bandwidth",
    "tx_power",
    "noise_power",
    "path_loss_exponent",
    "reference_gain",
    "min_distance",
    "arrival_rate",
    "data_size_min",
    "data_size_max",
    "compute_demand_min",
    "compute_demand_max",
    "priority_levels",
    "uav_altitude",
    "uav_speed",
    "compute_capacity",
    "queue_capacity",
    "capability_classes",
    "uav_positions",
    "device_positions",
    "formation",
    "pack_branching",
    "control_period",
    "ctrl_latency",
    "staleness_periods",
    "rate_floor",
    "message_bits",
    "region_cells",
    "attention_boost",
    "history",
    "experience_capacity",
    "alert_threshold",
    "critical_threshold",
    "risk_strategy",
    "epsilon",
    "bandit_step",
    "self_org_duration",
    "latency_budget",
    "interference_zones",
    "risk_zones",
];

fn kind_of(key: &str) -> Option<Kind> {
    use Dim::*;
    use Kind::*;
    Some(match key {
        "seed" => Integer,
        "n_uavs" | "n_devices" | "priority_levels" | "queue_capacity" | "pack_branching" | "region_cells"
        | "history" | "experience_capacity" => Count,
        "path_loss_exponent" | "reference_gain" | "staleness_periods" | "attention_boost" | "alert_threshold"
        | "critical_threshold" | "epsilon" | "bandit_step" => Plain,
        "area_side" | "min_distance" | "uav_altitude" => Quantity(Length),
        "horizon" | "control_period" | "ctrl_latency" | "self_org_duration" | "latency_budget" => Quantity(Time),
        "bandwidth" => Quantity(Frequency),
        "tx_power" | "noise_power" => Quantity(Power),
        "arrival_rate" => Quantity(PerSecond),
        "data_size_min" | "data_size_max" | "message_bits" => Quantity(Data),
        "compute_demand_min" | "compute_demand_max" => Quantity(Cycles),
        "compute_capacity" => Quantity(CycleRate),
        "rate_floor" => Quantity(DataRate),
        "uav_speed" => Quantity(Speed),
        "policy" | "control_mode" | "formation" => Text,
        "capability_classes" => Classes,
        "uav_positions" | "device_positions" => Points,
        "risk_strategy" => Strategies,
        "interference_zones" => InterferenceZones,
        "risk_zones" => RiskZones,
        _ => return None,
    })
}

pub fn is_key(key: &str) -> bool {
    kind_of(key).is_some()
}

fn prefix(p: &str) -> Option<f64> {
    Some(match p {
        "" => 1.0,
        "p" => 1e-12,
        "n" => 1e-9,
        "u" | "µ" => 1e-6,
        "m" => 1e-3,
        "k" => 1e3,
        "M" => 1e6,
        "G" => 1e9,
        "T" => 1e12,
        _ => return None,
    })
}

fn unit_factor(unit: &str, dim: Dim) -> Option<f64> {
    let bases: &[(&str, f64)] = match dim {
        Dim::Frequency => &[("Hz", 1.0)],
        Dim::Time => {
            match unit {
                "min" => return Some(60.0),
                "h" => return Some(3600.0),
                _ => {}
            }
            &[("s", 1.0)]
        }
        Dim::Length => &[("m", 1.0)],
        Dim::Power => &[("W", 1.0)],
        Dim::Data => &[("bit", 1.0), ("b", 1.0), ("B", 8.0)],
        Dim::Cycles => &[("cycles", 1.0), ("cycle", 1.0)],
        Dim::CycleRate => &[("cycles/s", 1.0), ("Hz", 1.0)],
        Dim::DataRate => &[("bit/s", 1.0), ("bps", 1.0)],
        Dim::PerSecond => &[("/s", 1.0)],
        Dim::Speed => &[("m/s", 1.0)],
    };
    for &(base, scale) in bases {
        if let Some(p) = unit.strip_suffix(base) {
            if let Some(f) = prefix(p) {
                return Some(f * scale);
            }
        }
    }
    None
}

/// Parses `"<number> <unit>"` (space optional) into SI base units.
fn parse_quantity(s: &str, dim: Dim) -> Result<f64, String> {
    let s = s.trim();
    let split = (1..=s.len())
        .rev()
        .filter(|&k| s.is_char_boundary(k))
        .find(|&k| s[..k].trim().parse::<f64>().is_ok())
        .ok_or_else(|| format!("`{s}` is not a number with a unit"))?;
    let n: f64 = s[..split].trim().parse().expect("checked above");
    let unit = s[split..].trim();
    if unit.is_empty() {
        return Ok(n);
    }
    unit_factor(unit, dim).map(|f| n * f).ok_or_else(|| format!("unit `{unit}` does not fit a {dim:?} value"))
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Integer(i) => Some(*i as f64),
        Value::Float(f) => Some(*f),
        _ => None,
    }
}

fn quantity(v: &Value, dim: Dim) -> Result<f64, String> {
    match v {
        Value::String(s) => parse_quantity(s, dim),
        _ => number(v).ok_or_else(|| format!("expected a number or a quantity string, got {}", v.type_str())),
    }
}

fn plain(v: &Value) -> Result<f64, String> {
    match v {
        Value::String(s) => s.trim().parse().map_err(|_| format!("`{s}` is not a number")),
        _ => number(v).ok_or_else(|| format!("expected a number, got {}", v.type_str())),
    }
}

fn count(v: &Value) -> Result<usize, String> {
    match v {
        Value::Integer(i) if *i >= 0 => usize::try_from(*i).map_err(|e| e.to_string()),
        _ => Err(format!("expected a non-negative integer, got {v}")),
    }
}

fn text(v: &Value) -> Result<&str, String> {
    v.as_str().ok_or_else(|| format!("expected a string, got {}", v.type_str()))
}

fn rows(v: &Value, width: usize) -> Result<Vec<Vec<f64>>, String> {
    let arr = v.as_array().ok_or_else(|| format!("expected an array of {width}-number rows"))?;
    arr.iter()
        .map(|row| {
            let row = row.as_array().filter(|r| r.len() == width).ok_or_else(|| format!("every row needs {width} numbers"))?;
            row.iter().map(|x| number(x).ok_or_else(|| "rows hold numbers only".to_string())).collect()
        })
        .collect()
}

/// Sets one key on `cfg`.
pub fn apply(cfg: &mut SimConfig, key: &str, v: &Value) -> Result<(), String> {
    let kind = kind_of(key).ok_or_else(|| format!("unknown key (valid keys: {})", KEYS.join(", ")))?;
    let f = || -> Result<f64, String> {
        match kind {
            Kind::Quantity(d) => quantity(v, d),
            _ => plain(v),
        }
    };
    match key {
        "seed" => {
            cfg.seed = match v {
                Value::Integer(i) if *i >= 0 => *i as u64,
                Value::String(s) => s.parse().map_err(|_| format!("`{s}` is not a u64"))?,
                _ => return Err(format!("expected a non-negative integer, got {v}")),
            }
        }
        "area_side" => cfg.area_side = f()?,
        "n_uavs" => cfg.n_uavs = count(v)?,
        "n_devices" => cfg.n_devices = count(v)?,
        "horizon" => cfg.horizon = f()?,
        "policy" => cfg.policy = text(v)?.parse()?,
        "control_mode" => cfg.control_mode = text(v)?.parse()?,
        "bandwidth" => cfg.channel.bandwidth = f()?,
        "tx_power" => cfg.channel.tx_power = f()?,
        "noise_power" => cfg.channel.noise_power = f()?,
        "path_loss_exponent" => cfg.channel.path_loss_exponent = f()?,
        "reference_gain" => cfg.channel.reference_gain = f()?,
        "min_distance" => cfg.channel.min_distance = f()?,
        "arrival_rate" => cfg.arrival_rate = f()?,
        "data_size_min" => cfg.tasks.data_size_min = f()?,
        "data_size_max" => cfg.tasks.data_size_max = f()?,
        "compute_demand_min" => cfg.tasks.compute_demand_min = f()?,
        "compute_demand_max" => cfg.tasks.compute_demand_max = f()?,
        "priority_levels" => cfg.tasks.priority_levels = u32::try_from(count(v)?).map_err(|e| e.to_string())?,
        "uav_altitude" => cfg.uav_altitude = f()?,
        "uav_speed" => cfg.uav_speed = f()?,
        "compute_capacity" => cfg.compute_capacity = f()?,
        "queue_capacity" => cfg.queue_capacity = count(v)?,
        "capability_classes" => {
            let arr = v.as_array().ok_or("expected an array of class names")?;
            cfg.capability_classes = arr.iter().map(|c| text(c)?.parse::<CapabilityClass>()).collect::<Result<_, _>>()?;
        }
        "uav_positions" | "device_positions" => {
            let pts = rows(v, 2)?.into_iter().map(|r| (r[0], r[1])).collect();
            if key == "uav_positions" {
                cfg.uav_positions = Some(pts);
            } else {
                cfg.device_positions = Some(pts);
            }
        }
        "formation" => cfg.formation.kind = text(v)?.parse()?,
        "pack_branching" => cfg.formation.branching = u32::try_from(count(v)?).map_err(|e| e.to_string())?,
        "control_period" => cfg.control.control_period = f()?,
        "ctrl_latency" => cfg.control.ctrl_latency = f()?,
        "staleness_periods" => cfg.control.staleness_periods = f()?,
        "rate_floor" => cfg.control.rate_floor = f()?,
        "message_bits" => cfg.control.message_bits = f()?,
        "region_cells" => cfg.cognition.region_cells = u32::try_from(count(v)?).map_err(|e| e.to_string())?,
        "attention_boost" => cfg.cognition.attention_boost = f()?,
        "history" => cfg.cognition.history = count(v)?,
        "experience_capacity" => cfg.cognition.experience_capacity = count(v)?,
        "alert_threshold" => cfg.cognition.alert_threshold = f()?,
        "critical_threshold" => cfg.cognition.critical_threshold = f()?,
        "risk_strategy" => {
            let arr = v.as_array().filter(|a| a.len() == 3).ok_or("expected three strategy names, for levels 0, 1, 2")?;
            let s: Vec<Strategy> = arr.iter().map(|x| text(x)?.parse()).collect::<Result<_, _>>()?;
            cfg.risk_strategy = StrategyStore::new([s[0], s[1], s[2]]);
        }
        "epsilon" => cfg.bandit.epsilon = f()?,
        "bandit_step" => cfg.bandit.step = f()?,
        "self_org_duration" => cfg.self_org_duration = f()?,
        "latency_budget" => cfg.latency_budget = f()?,
        "interference_zones" => {
            cfg.env.interference_zones = rows(v, 4)?
                .into_iter()
                .map(|r| InterferenceZone { center: Position::ground(r[0], r[1]), radius: r[2], added_noise: r[3] })
                .collect();
        }
        "risk_zones" => {
            cfg.env.risk_zones = rows(v, 4)?
                .into_iter()
                .map(|r| {
                    if r[3].fract() != 0.0 || !(0.0..=2.0).contains(&r[3]) {
                        return Err("risk level must be 0, 1 or 2".to_string());
                    }
                    Ok(RiskZone { center: Position::ground(r[0], r[1]), radius: r[2], level: r[3] as u8 })
                })
                .collect::<Result<_, _>>()?;
        }
        _ => unreachable!("every key in the kind table is handled"),
    }
    Ok(())
}

/// Interprets a command-line value: TOML syntax when it parses (numbers,
/// arrays, quoted strings), otherwise the raw text.
pub fn cli_value(raw: &str) -> Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Applies every key, collecting all field errors, then validates.
pub fn from_table(table: &toml::Table, base: SimConfig) -> Result<SimConfig, ValidationReport> {
    let mut cfg = base;
    let mut report = ValidationReport::default();
    for (k, v) in table {
        if let Err(e) = apply(&mut cfg, k, v) {
            report.push(k.as_str(), e);
        }
    }
    if let Err(r) = cfg.validate() {
        for e in r.errors {
            if !report.fields().any(|f| f == e.field) {
                report.errors.push(e);
            }
        }
    }
    report.into_result().map(|_| cfg)
}

pub fn parse(text: &str, origin: &str) -> Result<SimConfig> {
    let table: toml::Table =
        toml::from_str(text).map_err(|e| Error::Scenario { path: origin.into(), message: e.to_string() })?;
    Ok(from_table(&table, SimConfig::default())?)
}

pub fn load(path: impl AsRef<Path>) -> Result<SimConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Scenario { path: path.display().to_string(), message: e.to_string() })?;
    parse(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControlMode;
    use crate::offload::PolicyKind;

    #[test]
    fn units() {
        assert_eq!(parse_quantity("1 MHz", Dim::Frequency), Ok(1e6));
        assert_eq!(parse_quantity("100 ms", Dim::Time), Ok(0.1));
        assert_eq!(parse_quantity("5 min", Dim::Time), Ok(300.0));
        assert_eq!(parse_quantity("1 km", Dim::Length), Ok(1000.0));
        assert_eq!(parse_quantity("1.5 Mbit", Dim::Data), Ok(1.5e6));
        assert_eq!(parse_quantity("1 kB", Dim::Data), Ok(8000.0));
        assert_eq!(parse_quantity("3 Gcycles/s", Dim::CycleRate), Ok(3e9));
        assert_eq!(parse_quantity("1e-13 W", Dim::Power), Ok(1e-13));
        assert_eq!(parse_quantity("100 pW", Dim::Power), Ok(100.0 * 1e-12));
        assert_eq!(parse_quantity("0.5/s", Dim::PerSecond), Ok(0.5));
        assert_eq!(parse_quantity("2e6", Dim::Data), Ok(2e6));
        assert!(parse_quantity("3 MHz", Dim::Time).is_err());
        assert!(parse_quantity("fast", Dim::Speed).is_err());
    }

    #[test]
    fn full_file() {
        let cfg = parse(
            r#"
            seed = 7
            n_devices = 12
            policy = "greedy_nearest"
            control_mode = "distributed"
            bandwidth = "2 MHz"
            horizon = "2 min"
            compute_capacity = "1 Gcycles/s"
            capability_classes = ["compute", "relay"]
            interference_zones = [[500, 500, 100, 1e-12]]
            risk_zones = [[100, 100, 50, 2]]
            risk_strategy = ["continue", "alert_swarm", "retreat_to_pool"]
            "#,
            "inline",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.n_devices, 12);
        assert_eq!(cfg.policy, PolicyKind::GreedyNearest);
        assert_eq!(cfg.control_mode, ControlMode::Distributed);
        assert_eq!(cfg.channel.bandwidth, 2e6);
        assert_eq!(cfg.horizon, 120.0);
        assert_eq!(cfg.compute_capacity, 1e9);
        assert_eq!(cfg.env.interference_zones.len(), 1);
        assert_eq!(cfg.env.risk_zones[0].level, 2);
        assert_eq!(cfg.risk_strategy.get(1), Strategy::AlertSwarm);
    }

    #[test]
    fn reports_every_bad_field() {
        let err = parse("n_uavs = -1\npolicy = \"sac\"\nbogus = 1\ncompute_capacity = 0\n", "inline").unwrap_err();
        let Error::Validation(report) = err else { panic!("{err}") };
        let fields: Vec<&str> = report.fields().collect();
        for f in ["n_uavs", "policy", "bogus", "compute_capacity"] {
            assert!(fields.contains(&f), "{f} missing from {fields:?}");
        }
    }

    #[test]
    fn syntax_error_is_scenario_error() {
        assert!(matches!(parse("n_uavs = = 3", "x.toml"), Err(Error::Scenario { .. })));
        assert!(matches!(load("/nonexistent/x.toml"), Err(Error::Scenario { .. })));
    }

    #[test]
    fn cli_values() {
        assert_eq!(cli_value("6"), Value::Integer(6));
        assert_eq!(cli_value("coop"), Value::String("coop".into()));
        assert_eq!(cli_value("1 MHz"), Value::String("1 MHz".into()));
        assert_eq!(cli_value("0.25"), Value::Float(0.25));
    }

    #[test]
    fn every_key_has_a_kind() {
        for k in KEYS {
            assert!(is_key(k), "{k}");
        }
    }
}
