use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::geometry::Position;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("link rate is zero, transfer cannot be scheduled")]
    UnreachableLink,
    #[error("compute capacity must be positive")]
    InvalidCapacity,
    #[error("invalid channel parameter `{0}`")]
    InvalidChannel(&'static str),
}

/// Shannon-capacity link with power-law path loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams<S> {
    /// Hz.
    pub bandwidth: S,
    /// Watts.
    pub tx_power: S,
    /// Watts.
    pub noise_power: S,
    pub path_loss_exponent: S,
    /// Linear channel gain at 1 m.
    pub reference_gain: S,
    /// Distances below this are clamped to it.
    pub min_distance: S,
}

impl<S: Scalar> Default for ChannelParams<S> {
    fn default() -> Self {
        Self {
            bandwidth: S::lit(1e6),
            tx_power: S::lit(0.1),
            noise_power: S::lit(1e-13),
            path_loss_exponent: S::lit(2.0),
            reference_gain: S::lit(1e-4),
            min_distance: S::one(),
        }
    }
}

impl<S: Scalar> ChannelParams<S> {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = |v: S| v.is_finite() && v > S::zero();
        if !positive(self.bandwidth) {
            return Err(ModelError::InvalidChannel("bandwidth"));
        }
        if !positive(self.tx_power) {
            return Err(ModelError::InvalidChannel("tx_power"));
        }
        if !positive(self.noise_power) {
            return Err(ModelError::InvalidChannel("noise_power"));
        }
        if !positive(self.reference_gain) {
            return Err(ModelError::InvalidChannel("reference_gain"));
        }
        if !positive(self.min_distance) {
            return Err(ModelError::InvalidChannel("min_distance"));
        }
        let ple = self.path_loss_exponent;
        if !(ple >= S::two() && ple <= S::lit(4.0)) {
            return Err(ModelError::InvalidChannel("path_loss_exponent"));
        }
        Ok(())
    }
}

/// Risk severity of a zone: 0 (none) to 2 (severe).
pub type RiskLevel = u8;

pub const MAX_RISK_LEVEL: RiskLevel = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterferenceZone<S> {
    pub center: Position<S>,
    pub radius: S,
    /// Watts added to the receiver noise floor inside the zone.
    pub added_noise: S,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskZone<S> {
    pub center: Position<S>,
    pub radius: S,
    pub level: RiskLevel,
}

fn contains<S: Scalar>(center: &Position<S>, radius: S, p: &Position<S>) -> bool {
    center.horizontal_distance(p) <= radius
}

/// Static interference and risk zones. Zones are vertical cylinders.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentField<S> {
    pub interference_zones: Vec<InterferenceZone<S>>,
    pub risk_zones: Vec<RiskZone<S>>,
}

impl<S: Scalar> EnvironmentField<S> {
    pub fn is_empty(&self) -> bool {
        self.interference_zones.is_empty() && self.risk_zones.is_empty()
    }

    pub fn validate(&self) -> Result<(), String> {
        for (i, z) in self.interference_zones.iter().enumerate() {
            if !(z.radius > S::zero()) || !z.radius.is_finite() {
                return Err(format!("interference zone {i}: radius must be positive"));
            }
            if !(z.added_noise >= S::zero()) || !z.added_noise.is_finite() {
                return Err(format!("interference zone {i}: added_noise must be nonnegative"));
            }
        }
        for (i, z) in self.risk_zones.iter().enumerate() {
            if !(z.radius > S::zero()) || !z.radius.is_finite() {
                return Err(format!("risk zone {i}: radius must be positive"));
            }
            if z.level > MAX_RISK_LEVEL {
                return Err(format!("risk zone {i}: level must be 0, 1 or 2"));
            }
        }
        Ok(())
    }

    /// Total extra noise power at `p`.
    pub fn added_noise_at(&self, p: &Position<S>) -> S {
        self.interference_zones
            .iter()
            .filter(|z| contains(&z.center, z.radius, p))
            .map(|z| z.added_noise)
            .sum()
    }

    /// Highest level among risk zones containing `p`, 0 outside all zones.
    pub fn risk_level_at(&self, p: &Position<S>) -> RiskLevel {
        self.risk_zones
            .iter()
            .filter(|z| contains(&z.center, z.radius, p))
            .map(|z| z.level)
            .max()
            .unwrap_or(0)
    }

    /// Interference felt at `p`, each containing zone weighted by how deep
    /// `p` sits inside it (1 at the center, 0 at the rim).
    pub fn interference_weight_at(&self, p: &Position<S>) -> S {
        self.interference_zones
            .iter()
            .filter(|z| contains(&z.center, z.radius, p))
            .map(|z| S::one() - z.center.horizontal_distance(p) / z.radius)
            .sum()
    }

    /// Scalar environment reading used by perception.
    pub fn sensed_value_at(&self, p: &Position<S>) -> S {
        S::from_u8(self.risk_level_at(p)).unwrap() + self.interference_weight_at(p)
    }
}

/// Achievable rate in bits/s from `tx` to `rx`.
///
/// `bandwidth * log2(1 + P * g0 * d^-ple / (N0 + interference at rx))`, with
/// `d` clamped below at `min_distance`.
pub fn link_rate<S: Scalar>(
    tx: &Position<S>,
    rx: &Position<S>,
    ch: &ChannelParams<S>,
    env: &EnvironmentField<S>,
) -> S {
    let d = tx.distance(rx).max(ch.min_distance);
    let received = ch.tx_power * ch.reference_gain * d.powf(-ch.path_loss_exponent);
    let noise = ch.noise_power + env.added_noise_at(rx);
    ch.bandwidth * (S::one() + received / noise).log2()
}

/// Seconds needed to push `data_bits` over a link of `rate` bits/s.
pub fn transfer_time<S: Scalar>(data_bits: S, rate: S) -> Result<S, ModelError> {
    if !(rate > S::zero()) {
        return Err(ModelError::UnreachableLink);
    }
    Ok(data_bits / rate)
}

/// Seconds needed to execute `cycles` at `capacity` cycles/s.
pub fn compute_time<S: Scalar>(cycles: S, capacity: S) -> Result<S, ModelError> {
    if !(capacity > S::zero()) {
        return Err(ModelError::InvalidCapacity);
    }
    Ok(cycles / capacity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn origin() -> Position<f64> {
        Position::new(0.0, 0.0, 0.0)
    }

    #[test]
    fn clamped_distance_snr_three() {
        // At d <= 1 m: SNR = P * g0 / N0 = 3.
        let ch = ChannelParams {
            bandwidth: 1e6,
            tx_power: 3.0,
            noise_power: 1.0,
            path_loss_exponent: 2.0,
            reference_gain: 1.0,
            min_distance: 1.0,
        };
        let env = EnvironmentField::default();
        let rate = link_rate(&origin(), &Position::new(0.5, 0.0, 0.0), &ch, &env);
        assert_eq!(rate, 2e6);

        let noisy = EnvironmentField {
            interference_zones: vec![InterferenceZone { center: origin(), radius: 10.0, added_noise: 1.0 }],
            risk_zones: vec![],
        };
        let degraded = link_rate(&origin(), &Position::new(0.5, 0.0, 0.0), &ch, &noisy);
        assert!(degraded < rate);
        // SNR 1.5 -> log2(2.5)
        assert!((degraded - 1e6 * 2.5f64.log2()).abs() < 1e-6);
    }

    #[test]
    fn default_channel_at_100m() {
        // 1e6 * log2(1 + 0.1 * 1e-4 * 100^-2 / 1e-13), evaluated independently.
        let expected = 13_287_856.641_840_545;
        let rate = link_rate(
            &origin(),
            &Position::new(100.0, 0.0, 0.0),
            &ChannelParams::default(),
            &EnvironmentField::default(),
        );
        assert!((rate - expected).abs() / expected < 1e-12);

        let rate32 = link_rate(
            &Position::<f32>::new(0.0, 0.0, 0.0),
            &Position::new(100.0, 0.0, 0.0),
            &ChannelParams::default(),
            &EnvironmentField::default(),
        );
        assert!(((rate32 as f64) - expected).abs() / expected < 1e-5);
    }

    #[test]
    fn transfer_and_compute_examples() {
        assert_eq!(transfer_time(1e6, 1e6), Ok(1.0));
        assert_eq!(transfer_time(0.0, 1e6), Ok(0.0));
        assert_eq!(transfer_time(2e6, 0.5e6), Ok(4.0));
        assert_eq!(transfer_time(1e6, 0.0), Err(ModelError::UnreachableLink));
        assert_eq!(compute_time(3e9, 3e9), Ok(1.0));
        assert_eq!(compute_time(1.5e9, 3e9), Ok(0.5));
        assert_eq!(compute_time(0.0, 3e9), Ok(0.0));
        assert_eq!(compute_time(1.0, 0.0), Err(ModelError::InvalidCapacity));
    }

    #[test]
    fn channel_validation() {
        assert!(ChannelParams::<f64>::default().validate().is_ok());
        let bad = ChannelParams { path_loss_exponent: 5.0, ..ChannelParams::<f64>::default() };
        assert_eq!(bad.validate(), Err(ModelError::InvalidChannel("path_loss_exponent")));
    }

    #[test]
    fn sensed_value_inside_risk_zone() {
        let env = EnvironmentField {
            interference_zones: vec![],
            risk_zones: vec![RiskZone { center: Position::ground(500.0, 500.0), radius: 100.0, level: 2 }],
        };
        assert!(env.sensed_value_at(&Position::new(520.0, 500.0, 100.0)) >= 2.0);
        assert_eq!(env.sensed_value_at(&Position::new(0.0, 0.0, 100.0)), 0.0);
    }

    proptest! {
        #[test]
        fn rate_decreases_with_distance(d1 in 1.0..2000.0f64, gap in 0.001..500.0f64, noise in 0.0..1e-9f64) {
            let ch = ChannelParams::default();
            let env = EnvironmentField::default();
            let near = link_rate(&origin(), &Position::new(d1, 0.0, 0.0), &ch, &env);
            let far = link_rate(&origin(), &Position::new(d1 + gap, 0.0, 0.0), &ch, &env);
            prop_assert!(near >= far);

            let rx = Position::new(d1, 0.0, 0.0);
            let zone = EnvironmentField {
                interference_zones: vec![InterferenceZone { center: rx, radius: 10.0, added_noise: noise }],
                risk_zones: vec![],
            };
            prop_assert!(link_rate(&origin(), &rx, &ch, &zone) <= near);
        }
    }
}
