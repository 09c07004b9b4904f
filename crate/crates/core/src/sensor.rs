use serde::{Deserialize, Serialize};

use crate::geometry::Pose2D;

/// A planar range scan taken from the robot center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaserScan {
    pub angle_min: f64,
    pub angle_increment: f64,
    pub max_range: f64,
    /// Height of the scan plane above the floor.
    pub mount_height: f64,
    pub ranges: Vec<f64>,
    /// True where the beam hit nothing within `max_range`.
    pub no_return: Vec<bool>,
}

impl LaserScan {
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn beam_angle(&self, i: usize) -> f64 {
        self.angle_min + self.angle_increment * i as f64
    }

    /// Endpoint of beam `i` in the world frame, seen from `pose`.
    pub fn endpoint(&self, i: usize, pose: &Pose2D) -> (f64, f64) {
        let a = pose.theta + self.beam_angle(i);
        let r = self.ranges[i];
        (pose.x + r * a.cos(), pose.y + r * a.sin())
    }

    /// Endpoints of all returning beams as 3D points at the mount height.
    pub fn to_points(&self, pose: &Pose2D) -> Vec<[f64; 3]> {
        (0..self.len())
            .filter(|&i| !self.no_return[i])
            .map(|i| {
                let (x, y) = self.endpoint(i, pose);
                [x, y, self.mount_height]
            })
            .collect()
    }
}
