use rand::Rng;

use super::Particle;
use crate::geometry::{wrap_angle, Pose2D};

/// Scales weights to sum to one. Returns false if the sum is zero or not finite.
pub fn normalize_weights(particles: &mut [Particle]) -> bool {
    let sum: f64 = particles.iter().map(|p| p.weight).sum();
    if !(sum > 0.0 && sum.is_finite()) {
        return false;
    }
    particles.iter_mut().for_each(|p| p.weight /= sum);
    true
}

/// Low-variance resampling with a single random offset.
pub fn resample<R: Rng + ?Sized>(particles: &[Particle], rng: &mut R) -> Vec<Particle> {
    let n = particles.len();
    if n == 0 {
        return Vec::new();
    }
    let r = rng.random::<f64>() / n as f64;
    resample_with_offset(particles, n, r)
}

/// Systematic resampling into `n` offspring for a given offset in `[0, 1/n)`.
pub fn resample_with_offset(particles: &[Particle], n: usize, offset: f64) -> Vec<Particle> {
    let w = 1.0 / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    let mut cum = particles[0].weight;
    for m in 0..n {
        let u = offset + m as f64 * w;
        while u >= cum && i + 1 < particles.len() {
            i += 1;
            cum += particles[i].weight;
        }
        out.push(Particle::new(particles[i].pose, w));
    }
    out
}

pub type Covariance = [[f64; 3]; 3];

/// Weighted mean pose (circular mean for heading) and covariance.
pub fn estimate(particles: &[Particle]) -> (Pose2D, Covariance) {
    let total: f64 = particles.iter().map(|p| p.weight).sum();
    let norm = if total > 0.0 { total } else { 1.0 };
    let (mut mx, mut my, mut s, mut c) = (0.0, 0.0, 0.0, 0.0);
    for p in particles {
        let w = p.weight / norm;
        mx += w * p.pose.x;
        my += w * p.pose.y;
        s += w * p.pose.theta.sin();
        c += w * p.pose.theta.cos();
    }
    let mth = s.atan2(c);
    let mut cov = [[0.0; 3]; 3];
    for p in particles {
        let w = p.weight / norm;
        let d = [p.pose.x - mx, p.pose.y - my, wrap_angle(p.pose.theta - mth)];
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] += w * d[i] * d[j];
            }
        }
    }
    (Pose2D::new(mx, my, mth), cov)
}
