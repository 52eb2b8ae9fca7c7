//! Numeric abstraction for the closed-form parts of the model.
//!
//! Geometry, the radio model, the cost model and the small statistical
//! kernels are written once against [`Scalar`] and instantiated for `f32`
//! and `f64`. The event-driven layers run on `f64` through the aliases at
//! the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

pub trait Scalar: Float + FromPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static {
    /// Converts an `f64` literal. Every literal used by the model is
    /// representable in both supported widths.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    fn two() -> Self {
        Self::one() + Self::one()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Ordinary least squares fit of `y = intercept + slope * x`.
///
/// Returns `None` for fewer than two points or when every `x` coincides.
pub fn least_squares<S: Scalar>(xs: &[S], ys: &[S]) -> Option<(S, S)> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let nf = S::from_usize(n)?;
    let mean_x = xs[..n].iter().copied().sum::<S>() / nf;
    let mean_y = ys[..n].iter().copied().sum::<S>() / nf;
    let mut sxx = S::zero();
    let mut sxy = S::zero();
    for (&x, &y) in xs[..n].iter().zip(&ys[..n]) {
        let dx = x - mean_x;
        sxx = sxx + dx * dx;
        sxy = sxy + dx * (y - mean_y);
    }
    if sxx <= S::zero() {
        return None;
    }
    let slope = sxy / sxx;
    Some((mean_y - slope * mean_x, slope))
}

/// Rescales nonnegative weights so they sum to one. An all-zero (or empty
/// after filtering) input becomes uniform.
pub fn normalize<S: Scalar>(weights: &mut [S]) {
    if weights.is_empty() {
        return;
    }
    for w in weights.iter_mut() {
        if !(*w > S::zero()) || !w.is_finite() {
            *w = S::zero();
        }
    }
    let total = weights.iter().copied().sum::<S>();
    if total > S::zero() {
        for w in weights.iter_mut() {
            *w = *w / total;
        }
    } else {
        let uniform = S::one() / S::from_usize(weights.len()).unwrap();
        weights.iter_mut().for_each(|w| *w = uniform);
    }
}

/// Sample mean and sample standard deviation (n - 1 denominator, zero for a
/// single observation).
pub fn mean_std<S: Scalar>(values: &[S]) -> Option<(S, S)> {
    if values.is_empty() {
        return None;
    }
    let n = S::from_usize(values.len())?;
    let mean = values.iter().copied().sum::<S>() / n;
    if values.len() == 1 {
        return Some((mean, S::zero()));
    }
    let ss = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>();
    Some((mean, (ss / (n - S::one())).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_recovers_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        let (a, b) = least_squares(&xs, &ys).unwrap();
        assert!((a + 1.0).abs() < 1e-12);
        assert!((b - 2.5).abs() < 1e-12);
    }

    #[test]
    fn ols_in_single_precision() {
        let (a, b) = least_squares(&[0.0f32, 1.0, 2.0], &[0.0, 0.9, 2.1]).unwrap();
        assert!((b - 1.05).abs() < 1e-5);
        assert!((a + 0.05).abs() < 1e-5);
    }

    #[test]
    fn ols_degenerate() {
        assert!(least_squares::<f64>(&[1.0], &[2.0]).is_none());
        assert!(least_squares::<f64>(&[1.0, 1.0], &[2.0, 3.0]).is_none());
    }

    #[test]
    fn normalize_zero_is_uniform() {
        let mut w = [0.0f64; 4];
        normalize(&mut w);
        assert_eq!(w, [0.25; 4]);
    }

    #[test]
    fn std_of_single_value_is_zero() {
        assert_eq!(mean_std(&[3.0f64]), Some((3.0, 0.0)));
        let (m, s) = mean_std(&[1.0f64, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-12);
    }
}
