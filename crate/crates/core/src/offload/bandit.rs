use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::UavId;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BanditParams {
    pub epsilon: f64,
    /// EMA step size.
    pub step: f64,
}

impl Default for BanditParams {
    fn default() -> Self {
        Self { epsilon: 0.1, step: 0.1 }
    }
}

/// Epsilon-greedy over UAVs, valuing each by an exponential moving average
/// of negative observed latency.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BanditPolicy {
    pub params: BanditParams,
    values: BTreeMap<UavId, f64>,
    pulls: BTreeMap<UavId, u64>,
}

impl BanditPolicy {
    pub fn new(params: BanditParams) -> Self {
        Self { params, ..Self::default() }
    }

    pub fn value(&self, arm: UavId) -> Option<f64> {
        self.values.get(&arm).copied()
    }

    pub fn pulls(&self, arm: UavId) -> u64 {
        self.pulls.get(&arm).copied().unwrap_or(0)
    }

    pub fn values(&self) -> &BTreeMap<UavId, f64> {
        &self.values
    }

    /// Untried arms first (lowest id), then epsilon-greedy. Arms must be
    /// sorted ascending; the greedy choice breaks ties by lowest id.
    pub fn select<R: Rng + ?Sized>(&self, arms: &[UavId], rng: &mut R) -> Option<UavId> {
        if arms.is_empty() {
            return None;
        }
        if let Some(&fresh) = arms.iter().find(|a| !self.values.contains_key(a)) {
            return Some(fresh);
        }
        if self.params.epsilon > 0.0 && rng.random::<f64>() < self.params.epsilon {
            return Some(arms[rng.random_range(0..arms.len())]);
        }
        self.greedy(arms)
    }

    pub fn greedy(&self, arms: &[UavId]) -> Option<UavId> {
        let mut best: Option<(f64, UavId)> = None;
        for &a in arms {
            let v = self.values.get(&a).copied().unwrap_or(f64::NEG_INFINITY);
            if best.is_none_or(|(bv, _)| v > bv) {
                best = Some((v, a));
            }
        }
        best.map(|(_, a)| a)
    }

    /// The first sample initializes the estimate; later ones move it by
    /// `step` toward `-latency`.
    pub fn update(&mut self, arm: UavId, latency: f64) {
        let target = -latency;
        let step = self.params.step;
        self.values.entry(arm).and_modify(|v| *v += step * (target - *v)).or_insert(target);
        *self.pulls.entry(arm).or_default() += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::rng::RngStreams;

    #[test]
    fn first_sample_initializes() {
        let mut b = BanditPolicy::new(BanditParams::default());
        b.update(UavId(0), 2.0);
        assert_eq!(b.value(UavId(0)), Some(-2.0));
        b.update(UavId(0), 4.0);
        assert!((b.value(UavId(0)).unwrap() + 2.2).abs() < 1e-12);
    }

    #[test]
    fn explores_untried_then_greedy() {
        let mut rng = RngStreams::new(1).stream("policy");
        let arms = [UavId(0), UavId(1), UavId(2)];
        let mut b = BanditPolicy::new(BanditParams { epsilon: 0.0, step: 0.1 });
        let lat = [3.0, 1.0, 2.0];
        for _ in 0..3 {
            let a = b.select(&arms, &mut rng).unwrap();
            b.update(a, lat[a.0 as usize]);
        }
        assert_eq!(b.pulls(UavId(2)), 1);
        assert_eq!(b.select(&arms, &mut rng), Some(UavId(1)));
    }
}
