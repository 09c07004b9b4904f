//! Dynamic-window controller: samples the reachable velocity window, rolls each
//! sample forward, scores it with weighted critics, and returns the best seed.

use std::cmp::Ordering;

use super::{
    dynamic_window, is_goal_reached, sample_trajectories, score_trajectory, ControlError, ControlInput, ControlOutput,
    ControllerParams, ControllerPlugin, Score, Trajectory,
};
use crate::geometry::{wrap_angle, Pose2D, Twist};

#[derive(Debug, Clone, Default)]
pub struct DwbController {
    /// Rotate-to-heading mode, latched once the robot is within the xy tolerance.
    rotating: bool,
}

/// Index into the path of the pose nearest to `p` (first one on ties).
pub fn nearest_index(path: &[Pose2D], p: &Pose2D) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, q) in path.iter().enumerate() {
        let d = (q.x - p.x).powi(2) + (q.y - p.y).powi(2);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Index of the first pose at least `distance` of arc length past `from`,
/// or the last pose.
pub fn advance_along(path: &[Pose2D], from: usize, distance: f64) -> usize {
    let mut acc = 0.0;
    let mut i = from;
    while i + 1 < path.len() && acc < distance {
        acc += path[i].distance(&path[i + 1]);
        i += 1;
    }
    i
}

/// Index of the best trajectory: lowest score, then higher vx, then smaller |wz|,
/// then lower sample index.
pub fn select_best(trajs: &[Trajectory], scores: &[Score]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        let Score::Feasible(v) = *s else { continue };
        let better = match best {
            None => true,
            Some((j, bv)) => {
                let (a, b) = (&trajs[i].twist, &trajs[j].twist);
                match v.partial_cmp(&bv).unwrap_or(Ordering::Equal) {
                    Ordering::Less => true,
                    Ordering::Greater => false,
                    Ordering::Equal => {
                        a.vx > b.vx || (a.vx == b.vx && a.wz.abs() < b.wz.abs())
                    }
                }
            }
        };
        if better {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

impl DwbController {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_rotating(&self) -> bool {
        self.rotating
    }

    /// Scores every sample against an already-selected path segment and target
    /// point. Returns the sampled set, their scores, and the winner.
    pub fn evaluate(
        &self,
        pose: &Pose2D,
        current: &Twist,
        input_snapshot: &crate::costmap::CostSnapshot,
        segment: &[Pose2D],
        target: &Pose2D,
        params: &ControllerParams,
    ) -> Result<(Vec<Trajectory>, Vec<Score>, Option<usize>), ControlError> {
        let window = dynamic_window(current, &params.limits, params.control_period)?;
        let trajs = sample_trajectories(pose, &window, params.vx_samples, params.wz_samples, params.sim_time, params.sim_dt)?;
        let scores = trajs
            .iter()
            .map(|t| score_trajectory(t, input_snapshot, segment, target, &params.weights, params.limits.vx_max))
            .collect::<Result<Vec<_>, _>>()?;
        let best = select_best(&trajs, &scores);
        Ok((trajs, scores, best))
    }

    fn rotate(&self, input: &ControlInput<'_>, params: &ControllerParams) -> Result<ControlOutput, ControlError> {
        let window = dynamic_window(&input.velocity, &params.limits, params.control_period)?;
        let err = wrap_angle(input.goal.theta - input.pose.theta);
        let desired = (params.rotate_gain * err).clamp(-params.limits.wz_max, params.limits.wz_max);
        let twist = Twist::new(window.vx.0, desired.clamp(window.wz.0, window.wz.1));
        let traj = Trajectory::rollout(input.pose, twist, params.sim_time, params.sim_dt);
        let score = score_trajectory(
            &traj,
            input.snapshot,
            std::slice::from_ref(&input.goal),
            &input.goal,
            &params.weights,
            params.limits.vx_max,
        )?;
        match score {
            Score::Feasible(_) => Ok(ControlOutput { twist, trajectory: traj }),
            Score::Infeasible => Err(ControlError::NoValidControl),
        }
    }
}

impl ControllerPlugin for DwbController {
    fn reset(&mut self) {
        self.rotating = false;
    }

    fn compute_velocity(&mut self, input: &ControlInput<'_>, params: &ControllerParams) -> Result<ControlOutput, ControlError> {
        let path = &input.path.poses;
        if path.is_empty() {
            return Err(ControlError::NoPath);
        }
        let tol = params.tolerances;
        if !self.rotating && input.pose.distance(&input.goal) <= tol.xy_tol {
            self.rotating = true;
        }
        if self.rotating {
            return self.rotate(input, params);
        }
        let near = nearest_index(path, &input.pose);
        let target_idx = advance_along(path, near, params.lookahead);
        let end = advance_along(path, near, params.prune_distance).max(target_idx);
        let segment = &path[near..=end];
        let target = path[target_idx];
        let (mut trajs, _scores, best) = self.evaluate(&input.pose, &input.velocity, input.snapshot, segment, &target, params)?;
        let i = best.ok_or(ControlError::NoValidControl)?;
        let traj = trajs.swap_remove(i);
        Ok(ControlOutput { twist: traj.twist, trajectory: traj })
    }

    /// Stateful: once the xy tolerance has been met, only the heading is checked,
    /// so estimate jitter during the final rotation cannot undo the approach.
    fn goal_reached(&self, pose: &Pose2D, goal: &Pose2D, params: &ControllerParams) -> bool {
        if self.rotating {
            wrap_angle(goal.theta - pose.theta).abs() <= params.tolerances.yaw_tol
        } else {
            is_goal_reached(pose, goal, &params.tolerances)
        }
    }
}
