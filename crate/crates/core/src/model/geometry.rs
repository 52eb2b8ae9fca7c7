use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// A point in the simulated area, in meters. `z` is altitude; ground
/// devices sit at `z = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Position<S> {
    pub x: S,
    pub y: S,
    pub z: S,
}

impl<S: Scalar> Position<S> {
    pub fn new(x: S, y: S, z: S) -> Self {
        Self { x, y, z }
    }

    pub fn ground(x: S, y: S) -> Self {
        Self::new(x, y, S::zero())
    }

    pub fn distance(&self, other: &Self) -> S {
        distance(self, other)
    }

    /// Distance in the horizontal plane. Zones are vertical cylinders, so
    /// containment tests use this.
    pub fn horizontal_distance(&self, other: &Self) -> S {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn within_area(&self, side: S) -> bool {
        self.is_finite()
            && self.x >= S::zero()
            && self.x <= side
            && self.y >= S::zero()
            && self.y <= side
            && self.z >= S::zero()
    }

    /// Moves toward `target` by at most `step` meters.
    pub fn step_toward(&self, target: &Self, step: S) -> Self {
        let d = self.distance(target);
        if d <= step || d <= S::zero() {
            return *target;
        }
        let f = step / d;
        Self::new(
            self.x + (target.x - self.x) * f,
            self.y + (target.y - self.y) * f,
            self.z + (target.z - self.z) * f,
        )
    }
}

/// Euclidean distance in three dimensions.
pub fn distance<S: Scalar>(a: &Position<S>, b: &Position<S>) -> S {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    (dx * dx + dy * dy + dz * dz).sqrt()
}
