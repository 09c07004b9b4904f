//! Odometry motion model: a pose increment decomposed into rotate, translate,
//! rotate, each corrupted by zero-mean Gaussian noise.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Particle;
use crate::geometry::{wrap_angle, Pose2D};

/// Increments shorter than this are treated as pure rotation.
const MIN_TRANS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OdomDelta {
    pub rot1: f64,
    pub trans: f64,
    pub rot2: f64,
}

impl OdomDelta {
    pub fn between(prev: &Pose2D, cur: &Pose2D) -> Self {
        let (dx, dy) = (cur.x - prev.x, cur.y - prev.y);
        let trans = dx.hypot(dy);
        let rot1 = if trans < MIN_TRANS { 0.0 } else { wrap_angle(dy.atan2(dx) - prev.theta) };
        let rot2 = wrap_angle(cur.theta - prev.theta - rot1);
        Self { rot1, trans, rot2 }
    }

    /// Applies the increment to `pose`.
    pub fn apply(&self, pose: &Pose2D) -> Pose2D {
        let heading = pose.theta + self.rot1;
        Pose2D::new(
            pose.x + self.trans * heading.cos(),
            pose.y + self.trans * heading.sin(),
            pose.theta + self.rot1 + self.rot2,
        )
    }
}

/// Variance mixing coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    /// rotation variance from rotation
    pub a1: f64,
    /// rotation variance from translation
    pub a2: f64,
    /// translation variance from translation
    pub a3: f64,
    /// translation variance from rotation
    pub a4: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self { a1: 0.002, a2: 0.002, a3: 0.002, a4: 0.002 }
    }
}

impl NoiseParams {
    pub const ZERO: NoiseParams = NoiseParams { a1: 0.0, a2: 0.0, a3: 0.0, a4: 0.0 };

    pub fn validate(&self) -> Result<(), String> {
        if [self.a1, self.a2, self.a3, self.a4].iter().all(|a| *a >= 0.0 && a.is_finite()) {
            Ok(())
        } else {
            Err(format!("noise coefficients must be finite and >= 0: {self:?}"))
        }
    }

    /// Variances of (rot1, trans, rot2) for an increment.
    pub fn variances(&self, d: &OdomDelta) -> (f64, f64, f64) {
        let (r1, t, r2) = (d.rot1 * d.rot1, d.trans * d.trans, d.rot2 * d.rot2);
        (self.a1 * r1 + self.a2 * t, self.a3 * t + self.a4 * (r1 + r2), self.a1 * r2 + self.a2 * t)
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> f64 {
    if variance <= 0.0 {
        return 0.0;
    }
    Normal::new(0.0, variance.sqrt()).map(|n| n.sample(rng)).unwrap_or(0.0)
}

/// Draws one noisy version of `d`.
pub fn sample_delta<R: Rng + ?Sized>(d: &OdomDelta, noise: &NoiseParams, rng: &mut R) -> OdomDelta {
    let (v1, vt, v2) = noise.variances(d);
    OdomDelta { rot1: d.rot1 + gaussian(rng, v1), trans: d.trans + gaussian(rng, vt), rot2: d.rot2 + gaussian(rng, v2) }
}

/// Moves every particle by its own noisy draw of `delta`. Weights are untouched.
pub fn motion_update<R: Rng + ?Sized>(particles: &mut [Particle], delta: &OdomDelta, noise: &NoiseParams, rng: &mut R) {
    for p in particles {
        p.pose = sample_delta(delta, noise, rng).apply(&p.pose);
    }
}
