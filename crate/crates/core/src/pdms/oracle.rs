//! Brute-force references: step time in whole milliseconds and test static
//! box overlap at every step.

use super::{boxes_overlap, ego_box, ego_pose_at, ego_poses, grid_velocity, Agent};
use crate::decoder::Trajectory;

fn steps_ms(seconds: f64) -> u64 {
    (seconds * 1000.0).round() as u64
}

/// Any overlap at `t = k ms` for `k = 0 ..= N dt / 1 ms`.
pub fn collides_bruteforce(traj: &Trajectory, agents: &[Agent], ego_half_extents: [f64; 2]) -> bool {
    (0..=steps_ms(traj.dt * traj.len() as f64)).any(|k| {
        let t = k as f64 / 1000.0;
        let ego = ego_box(ego_pose_at(traj, t), ego_half_extents);
        agents.iter().any(|a| boxes_overlap(&ego, &a.box_at(t)))
    })
}

/// Whether some grid point sees a constant-velocity overlap within a
/// look-ahead `h = k ms < threshold`.
pub fn ttc_below_bruteforce(traj: &Trajectory, agents: &[Agent], ego_half_extents: [f64; 2], threshold: f64) -> bool {
    let poses = ego_poses(traj);
    let horizon = (threshold * 1000.0).ceil() as u64;
    (0..poses.len()).any(|i| {
        let tau = i as f64 * traj.dt;
        let v = grid_velocity(&poses, i, traj.dt);
        (0..horizon).filter(|&k| (k as f64) / 1000.0 < threshold).any(|k| {
            let h = k as f64 / 1000.0;
            let p = poses[i];
            let ego = ego_box([p[0] + v[0] * h, p[1] + v[1] * h, p[2]], ego_half_extents);
            agents.iter().any(|a| boxes_overlap(&ego, &a.box_at(tau + h)))
        })
    })
}
