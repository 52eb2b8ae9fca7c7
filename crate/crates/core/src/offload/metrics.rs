use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::engine::log::{EventLog, LogEntry};

pub const TASK_ARRIVAL: &str = "task_arrival";
pub const TASK_ACCEPT: &str = "task_accept";
pub const TASK_COMPLETE: &str = "task_complete";
pub const TASK_DROP: &str = "task_drop";

/// Per-run offloading metrics. Raw sums are kept next to the averages so
/// other normalizations can be derived from the output.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    /// Mean of completion minus arrival over completed tasks; absent when
    /// nothing completed.
    pub avg_execution_time: Option<f64>,
    /// Completed compute demand per second of horizon, cycles/s.
    pub avg_computation_rate: Option<f64>,
    /// Data accepted by any UAV per device, bits.
    pub avg_offloaded_data: Option<f64>,
    pub completed_tasks: u64,
    pub dropped_tasks: u64,
    pub generated_tasks: u64,
    pub in_flight_tasks: u64,
    pub total_execution_time: f64,
    pub total_compute_completed: f64,
    pub total_offloaded_data: f64,
    pub horizon: f64,
}

/// Folds task records into metric sums. Fed either from a finished log or
/// live as records commit.
#[derive(Clone, Debug, Default)]
pub struct MetricAccumulator {
    generated: u64,
    completed: u64,
    dropped: u64,
    total_exec: f64,
    total_compute: f64,
    total_data: f64,
}

impl MetricAccumulator {
    pub fn observe(&mut self, kind: &str, payload: &Value) {
        let num = |k: &str| payload.get(k).and_then(Value::as_f64).unwrap_or(0.0);
        match kind {
            TASK_ARRIVAL => self.generated += 1,
            TASK_ACCEPT => self.total_data += num("data_size"),
            TASK_COMPLETE => {
                self.completed += 1;
                self.total_exec += num("completion") - num("arrival");
                self.total_compute += num("compute_demand");
            }
            TASK_DROP => self.dropped += 1,
            _ => {}
        }
    }

    pub fn observe_entry(&mut self, e: &LogEntry) {
        self.observe(&e.kind, &e.payload);
    }

    pub fn finish(&self, horizon: f64, n_devices: usize) -> MetricRecord {
        let empty = self.generated == 0;
        let rate = if horizon > 0.0 { self.total_compute / horizon } else { 0.0 };
        let per_device = if n_devices > 0 { self.total_data / n_devices as f64 } else { 0.0 };
        MetricRecord {
            avg_execution_time: (self.completed > 0).then(|| self.total_exec / self.completed as f64),
            avg_computation_rate: (!empty).then_some(rate),
            avg_offloaded_data: (!empty).then_some(per_device),
            completed_tasks: self.completed,
            dropped_tasks: self.dropped,
            generated_tasks: self.generated,
            in_flight_tasks: self.generated.saturating_sub(self.completed + self.dropped),
            total_execution_time: self.total_exec,
            total_compute_completed: self.total_compute,
            total_offloaded_data: self.total_data,
            horizon,
        }
    }
}

/// Metrics over a retained event log. `n_uavs` is accepted for interface
/// symmetry; no metric is normalized per UAV.
pub fn compute_metrics(log: &EventLog, horizon: f64, _n_uavs: usize, n_devices: usize) -> MetricRecord {
    let mut acc = MetricAccumulator::default();
    log.entries().iter().for_each(|e| acc.observe_entry(e));
    acc.finish(horizon, n_devices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn log(entries: &[(&str, Value)]) -> EventLog {
        let mut l = EventLog::new();
        for (i, (k, p)) in entries.iter().enumerate() {
            l.append(LogEntry { t: i as f64, seq: i as u64, kind: (*k).into(), payload: p.clone() });
        }
        l
    }

    #[test]
    fn single_task() {
        let l = log(&[
            (TASK_ARRIVAL, json!({"task": 0})),
            (TASK_ACCEPT, json!({"task": 0, "data_size": 1e6})),
            (TASK_COMPLETE, json!({"task": 0, "arrival": 0.0, "completion": 2.0, "compute_demand": 1e9})),
        ]);
        let m = compute_metrics(&l, 10.0, 1, 2);
        assert_eq!(m.avg_execution_time, Some(2.0));
        assert_eq!(m.avg_offloaded_data, Some(5e5));
        assert_eq!(m.in_flight_tasks, 0);
    }

    #[test]
    fn computation_rate_is_sum_over_horizon() {
        let l = log(&[
            (TASK_ARRIVAL, json!({})),
            (TASK_ARRIVAL, json!({})),
            (TASK_COMPLETE, json!({"arrival": 0.0, "completion": 1.0, "compute_demand": 1e9})),
            (TASK_COMPLETE, json!({"arrival": 0.0, "completion": 1.0, "compute_demand": 2e9})),
        ]);
        let m = compute_metrics(&l, 10.0, 1, 1);
        assert!((m.avg_computation_rate.unwrap() - 0.3e9).abs() < 1e-3);
    }

    #[test]
    fn empty_log() {
        let m = compute_metrics(&EventLog::new(), 10.0, 6, 6);
        assert_eq!((m.completed_tasks, m.dropped_tasks, m.generated_tasks), (0, 0, 0));
        assert_eq!(m.avg_execution_time, None);
        assert_eq!(m.avg_computation_rate, None);
        assert_eq!(m.avg_offloaded_data, None);
    }

    #[test]
    fn conservation_with_drops() {
        let l = log(&[
            (TASK_ARRIVAL, json!({})),
            (TASK_ARRIVAL, json!({})),
            (TASK_ARRIVAL, json!({})),
            (TASK_DROP, json!({})),
            (TASK_COMPLETE, json!({"arrival": 0.0, "completion": 1.0, "compute_demand": 1.0})),
        ]);
        let m = compute_metrics(&l, 1.0, 1, 1);
        assert_eq!(m.completed_tasks + m.dropped_tasks + m.in_flight_tasks, m.generated_tasks);
    }
}
