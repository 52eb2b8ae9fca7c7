//! Parameter sweeps: one key over a list of values, several seeds per point.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use toml::Value;

use crate::engine::config::{SimConfig, ValidationReport};
use crate::engine::{run_with, RunOptions};
use crate::error::Result;
use crate::offload::MetricRecord;
use crate::scenario;

/// One row of `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub seed: u64,
    pub policy: String,
    pub control_mode: String,
    pub n_uavs: usize,
    pub n_devices: usize,
    pub area_side: f64,
    pub horizon: f64,
    pub arrival_rate: f64,
    pub compute_capacity: f64,
    pub queue_capacity: usize,
    pub sweep_key: String,
    pub sweep_value: String,
    pub avg_execution_time: Option<f64>,
    pub avg_computation_rate: Option<f64>,
    pub avg_offloaded_data: Option<f64>,
    pub completed_tasks: u64,
    pub dropped_tasks: u64,
    pub generated_tasks: u64,
    pub in_flight_tasks: u64,
    pub total_execution_time: f64,
    pub total_compute_completed: f64,
    pub total_offloaded_data: f64,
    pub log_hash: String,
}

impl MetricRow {
    pub fn new(cfg: &SimConfig, m: &MetricRecord, log_hash: String, sweep_key: &str, sweep_value: &str) -> Self {
        Self {
            seed: cfg.seed,
            policy: cfg.policy.to_string(),
            control_mode: cfg.control_mode.to_string(),
            n_uavs: cfg.n_uavs,
            n_devices: cfg.n_devices,
            area_side: cfg.area_side,
            horizon: cfg.horizon,
            arrival_rate: cfg.arrival_rate,
            compute_capacity: cfg.compute_capacity,
            queue_capacity: cfg.queue_capacity,
            sweep_key: sweep_key.to_string(),
            sweep_value: sweep_value.to_string(),
            avg_execution_time: m.avg_execution_time,
            avg_computation_rate: m.avg_computation_rate,
            avg_offloaded_data: m.avg_offloaded_data,
            completed_tasks: m.completed_tasks,
            dropped_tasks: m.dropped_tasks,
            generated_tasks: m.generated_tasks,
            in_flight_tasks: m.in_flight_tasks,
            total_execution_time: m.total_execution_time,
            total_compute_completed: m.total_compute_completed,
            total_offloaded_data: m.total_offloaded_data,
            log_hash,
        }
    }
}

/// Mean and sample standard deviation per sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub sweep_key: String,
    pub sweep_value: String,
    pub policy: String,
    pub control_mode: String,
    pub n_uavs: usize,
    pub n_devices: usize,
    pub runs: usize,
    pub avg_execution_time_mean: Option<f64>,
    pub avg_execution_time_std: Option<f64>,
    pub avg_computation_rate_mean: Option<f64>,
    pub avg_computation_rate_std: Option<f64>,
    pub avg_offloaded_data_mean: Option<f64>,
    pub avg_offloaded_data_std: Option<f64>,
    pub completed_tasks_mean: f64,
    pub dropped_tasks_mean: f64,
    pub dropped_tasks_std: f64,
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub base: SimConfig,
    pub key: String,
    pub values: Vec<Value>,
    /// Seeds are `base.seed + k` for `k` in `0..seeds_per_point`.
    pub seeds_per_point: usize,
}

#[derive(Clone, Debug, Default)]
pub struct SweepResult {
    /// Seed-major: all points for the first seed, then the next seed.
    pub rows: Vec<MetricRow>,
    /// One row per value, in the order given.
    pub summary: Vec<SummaryRow>,
}

pub fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl SweepSpec {
    /// Configs for every point, or every problem found.
    pub fn point_configs(&self) -> Result<Vec<SimConfig>, ValidationReport> {
        let mut report = ValidationReport::default();
        if !scenario::is_key(&self.key) {
            report.push("sweep", format!("unknown key `{}`", self.key));
        }
        if self.values.is_empty() {
            report.push("sweep", "needs at least one value");
        }
        if self.seeds_per_point == 0 {
            report.push("seeds_per_point", "must be >= 1");
        }
        if !report.is_empty() {
            return Err(report);
        }
        let mut out = Vec::with_capacity(self.values.len());
        for v in &self.values {
            let mut cfg = self.base.clone();
            if let Err(e) = scenario::apply(&mut cfg, &self.key, v) {
                report.push(self.key.as_str(), format!("value {}: {e}", value_label(v)));
                continue;
            }
            if let Err(r) = cfg.validate() {
                for e in r.errors {
                    report.push(e.field, format!("at {} = {}: {}", self.key, value_label(v), e.message));
                }
                continue;
            }
            out.push(cfg);
        }
        report.into_result().map(|_| out)
    }
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() < 2 { 0.0 } else { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() };
    (Some(mean), Some(std))
}

fn summarize(rows: &[&MetricRow]) -> SummaryRow {
    let first = rows[0];
    let pick = |f: fn(&MetricRow) -> Option<f64>| mean_std(&rows.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
    let (exec_m, exec_s) = pick(|r| r.avg_execution_time);
    let (rate_m, rate_s) = pick(|r| r.avg_computation_rate);
    let (data_m, data_s) = pick(|r| r.avg_offloaded_data);
    let (done_m, _) = pick(|r| Some(r.completed_tasks as f64));
    let (drop_m, drop_s) = pick(|r| Some(r.dropped_tasks as f64));
    SummaryRow {
        sweep_key: first.sweep_key.clone(),
        sweep_value: first.sweep_value.clone(),
        policy: first.policy.clone(),
        control_mode: first.control_mode.clone(),
        n_uavs: first.n_uavs,
        n_devices: first.n_devices,
        runs: rows.len(),
        avg_execution_time_mean: exec_m,
        avg_execution_time_std: exec_s,
        avg_computation_rate_mean: rate_m,
        avg_computation_rate_std: rate_s,
        avg_offloaded_data_mean: data_m,
        avg_offloaded_data_std: data_s,
        completed_tasks_mean: done_m.unwrap_or(0.0),
        dropped_tasks_mean: drop_m.unwrap_or(0.0),
        dropped_tasks_std: drop_s.unwrap_or(0.0),
    }
}

/// Runs every (seed, value) pair in parallel. Output order does not depend
/// on scheduling.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    let points = spec.point_configs()?;
    let labels: Vec<String> = spec.values.iter().map(value_label).collect();
    let jobs: Vec<(usize, u64)> = (0..spec.seeds_per_point as u64)
        .flat_map(|k| (0..points.len()).map(move |p| (p, k)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(p, k)| {
            let mut cfg = points[p].clone();
            cfg.seed = spec.base.seed.wrapping_add(k);
            let (log, metrics) = run_with(&cfg, RunOptions { retain_log: false })?;
            Ok(MetricRow::new(&cfg, &metrics, log.hash_hex(), &spec.key, &labels[p]))
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = (0..points.len())
        .map(|p| {
            let of_point: Vec<&MetricRow> = rows.iter().skip(p).step_by(points.len()).collect();
            summarize(&of_point)
        })
        .collect();
    Ok(SweepResult { rows, summary })
}

pub fn write_rows<T: Serialize>(out: impl Write, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metric_rows(input: impl std::io::Read) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<Vec<MetricRow>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig { n_uavs: 3, n_devices: 4, horizon: 20.0, seed: 11, ..SimConfig::default() }
    }

    #[test]
    fn rows_are_seed_major_and_roundtrip() {
        let spec = SweepSpec {
            base: small(),
            key: "n_devices".into(),
            values: vec![Value::Integer(2), Value::Integer(4)],
            seeds_per_point: 3,
        };
        let res = run_sweep(&spec).unwrap();
        let order: Vec<(u64, usize)> = res.rows.iter().map(|r| (r.seed, r.n_devices)).collect();
        assert_eq!(order, vec![(11, 2), (11, 4), (12, 2), (12, 4), (13, 2), (13, 4)]);
        assert_eq!(res.summary.len(), 2);
        assert_eq!(res.summary[1].runs, 3);

        let mut buf = Vec::new();
        write_rows(&mut buf, &res.rows).unwrap();
        let back = read_metric_rows(buf.as_slice()).unwrap();
        assert_eq!(back, res.rows);
    }

    #[test]
    fn repeated_sweeps_are_identical() {
        let spec = SweepSpec {
            base: small(),
            key: "policy".into(),
            values: vec![Value::String("coop".into()), Value::String("bandit".into())],
            seeds_per_point: 2,
        };
        let a = run_sweep(&spec).unwrap();
        let b = run_sweep(&spec).unwrap();
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn bad_points_are_all_reported() {
        let spec = SweepSpec {
            base: small(),
            key: "compute_capacity".into(),
            values: vec![Value::Integer(0), Value::Float(-1.0), Value::Float(1e9)],
            seeds_per_point: 1,
        };
        let err = spec.point_configs().unwrap_err();
        assert_eq!(err.errors.len(), 2);
        let bogus = SweepSpec { key: "warp".into(), values: vec![], seeds_per_point: 0, ..spec };
        assert_eq!(bogus.point_configs().unwrap_err().errors.len(), 3);
    }
}
