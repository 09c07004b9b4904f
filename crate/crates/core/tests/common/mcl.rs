//! Fixtures for the particle filter tests.

use std::sync::Arc;

use navcore::geometry::{wrap_angle, GridMeta, Pose2D};
use navcore::grid::{Occupancy, OccupancyGrid};
use navcore::localization::{Amcl, AmclParams, NoiseParams, OdomDelta, SensorModel};
use navcore::sim::lidar::LidarSpec;
use navcore::sim::{World, WorldConfig};

/// 10x10 m room with walls and a few obstacles of different shapes, placed
/// so that no two places look alike.
pub fn feature_room() -> OccupancyGrid {
    let meta = GridMeta::new(0.05, 0.0, 0.0, 200, 200).unwrap();
    let mut g = OccupancyGrid::new_filled(meta, Occupancy::Free);
    for (x0, y0, x1, y1) in [
        (0.0, 0.0, 10.0, 0.15),
        (0.0, 9.85, 10.0, 10.0),
        (0.0, 0.0, 0.15, 10.0),
        (9.85, 0.0, 10.0, 10.0),
        (2.0, 6.5, 2.6, 8.5),
        (2.0, 8.0, 4.5, 8.5),
        (6.8, 1.5, 8.0, 2.1),
        (7.5, 6.0, 7.9, 6.4),
        (4.5, 3.5, 5.0, 4.0),
        (0.15, 3.0, 1.0, 3.2),
        (8.5, 8.0, 9.85, 8.3),
        (1.0, 5.0, 1.2, 5.2),
        (3.2, 1.8, 3.4, 2.6),
        (6.0, 8.6, 6.3, 8.9),
        (8.6, 4.0, 9.85, 4.2),
        (5.5, 6.2, 6.5, 6.4),
        (7.0, 3.6, 7.3, 3.9),
        (3.8, 0.15, 4.0, 0.6),
        (0.15, 7.5, 0.6, 7.6),
    ] {
        g.fill_rect(x0, y0, x1, y1, Occupancy::Occupied);
    }
    g
}

pub fn sensor_world(map: &OccupancyGrid, start: Pose2D, lidar_sigma: f64) -> World {
    let config = WorldConfig {
        lidar: LidarSpec { beams: 360, fov: 2.0 * std::f64::consts::PI, noise_sigma: lidar_sigma, ..LidarSpec::default() },
        ..WorldConfig::default()
    };
    World::new(Arc::new(map.clone()), start, vec![], config).unwrap()
}

/// A closed tour through the open part of the room, one pose per filter cycle.
pub fn tour(n: usize) -> Vec<Pose2D> {
    let corners: [(f64, f64); 5] = [(4.0, 5.0), (6.5, 5.0), (6.5, 2.8), (2.0, 2.8), (2.0, 5.0)];
    let mut poses = Vec::new();
    let step = 0.25;
    let mut k = 0;
    while poses.len() < n {
        let (a, b) = (corners[k % corners.len()], corners[(k + 1) % corners.len()]);
        let heading = (b.1 - a.1).atan2(b.0 - a.0);
        let len = (b.0 - a.0).hypot(b.1 - a.1);
        let m = (len / step).round() as usize;
        for i in 0..m {
            let t = i as f64 / m as f64;
            poses.push(Pose2D::new(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1), heading));
        }
        k += 1;
    }
    poses.truncate(n);
    poses
}

pub fn pose_error(a: &Pose2D, b: &Pose2D) -> (f64, f64) {
    (a.distance(b), wrap_angle(a.theta - b.theta).abs())
}

/// Final (position, heading) error after 30 cycles from a uniform start.
///
/// The sensor model is deliberately flat (wide sigma, few beams) so that the
/// first updates keep several hypotheses alive and evidence accumulates over
/// the tour instead of the first scan picking a winner among 500 random
/// particles.
pub fn global_run(seed: u64) -> ((f64, f64), Vec<(f64, f64)>) {
    let map = feature_room();
    let path = tour(31);
    let mut world = sensor_world(&map, path[0], 0.01);
    let params = AmclParams {
        particles: 500,
        noise: NoiseParams { a1: 0.3, a2: 0.3, a3: 0.3, a4: 0.3 },
        sensor: SensorModel { sigma_hit: 1.2, ..SensorModel::default() },
        beam_subsample: 10,
        ..AmclParams::default()
    };
    let mut amcl = Amcl::new(&map, params, seed).unwrap();
    amcl.init_uniform().unwrap();
    let mut errors = Vec::new();
    for w in path.windows(2) {
        world.robot.pose = w[1];
        let scan = world.scan();
        amcl.update(&OdomDelta::between(&w[0], &w[1]), &scan).unwrap();
        errors.push(pose_error(&amcl.estimate().0, &w[1]));
    }
    (*errors.last().unwrap(), errors)
}

/// Largest (position, heading) error while tracking with zero motion noise
/// from an exact initial pose.
pub fn zero_noise_tracking_error() -> (f64, f64) {
    let map = feature_room();
    let path = tour(40);
    let mut world = sensor_world(&map, path[0], 0.0);
    let params = AmclParams {
        particles: 50,
        noise: NoiseParams::ZERO,
        init_std_xy: 0.0,
        init_std_yaw: 0.0,
        ..AmclParams::default()
    };
    let mut amcl = Amcl::new(&map, params, 1).unwrap();
    amcl.init_at(path[0]);
    let mut worst = (0.0f64, 0.0f64);
    for w in path.windows(2) {
        world.robot.pose = w[1];
        let scan = world.scan();
        amcl.update(&OdomDelta::between(&w[0], &w[1]), &scan).unwrap();
        let (d, a) = pose_error(&amcl.estimate().0, &w[1]);
        worst = (worst.0.max(d), worst.1.max(a));
    }
    worst
}
