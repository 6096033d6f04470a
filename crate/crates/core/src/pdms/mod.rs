//! Planning score: hard penalties (no collision, drivable area) times a
//! weighted average of progress, time-to-collision and comfort.
//!
//! The sub-score evaluators are simplified stand-ins for the benchmark's
//! internals. The ego footprint follows the trajectory with linearly
//! interpolated position; within each waypoint interval it holds the heading
//! of the waypoint it is heading towards, so collision times can be solved
//! exactly with the separating-axis test.

mod geometry;
pub mod oracle;
mod scene;

pub use geometry::{boxes_overlap, overlap_interval, point_in_polygon, polygon_is_simple, project_arc_length, OrientedBox};
pub use scene::{Agent, SceneEval};

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoder::Trajectory;
use crate::error::{LadyError, Result};

/// Ego rectangle, 4.6 m x 1.8 m.
pub const EGO_HALF_EXTENTS: [f64; 2] = [2.3, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Seconds.
    pub ttc_min: f64,
    /// m/s^2.
    pub a_max: f64,
    /// m/s^3.
    pub j_max: f64,
    pub ego_half_extents: [f64; 2],
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { ttc_min: 1.0, a_max: 2.4, j_max: 8.0, ego_half_extents: EGO_HALF_EXTENTS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdmsWeights {
    pub ep: f64,
    pub ttc: f64,
    pub comfort: f64,
}

impl Default for PdmsWeights {
    fn default() -> Self {
        PdmsWeights { ep: 5.0, ttc: 5.0, comfort: 2.0 }
    }
}

impl PdmsWeights {
    pub fn new(ep: f64, ttc: f64, comfort: f64) -> Result<Self> {
        if [ep, ttc, comfort].iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(LadyError::Config("PDMS weights must be positive".into()));
        }
        Ok(PdmsWeights { ep, ttc, comfort })
    }
}

/// `nc`, `dac`, `ttc`, `comfort` are 0 or 1; `ep` lies in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubScores {
    pub nc: f64,
    pub dac: f64,
    pub ttc: f64,
    pub comfort: f64,
    pub ep: f64,
}

impl SubScores {
    pub fn validate(&self) -> Result<()> {
        let binary = [self.nc, self.dac, self.ttc, self.comfort];
        if binary.iter().any(|&b| b != 0.0 && b != 1.0) || !(0.0..=1.0).contains(&self.ep) {
            return Err(LadyError::Contract(format!("sub-scores out of range: {self:?}")));
        }
        Ok(())
    }
}

pub fn pdms(s: &SubScores, w: &PdmsWeights) -> f64 {
    let penalty = s.nc * s.dac;
    if penalty == 0.0 {
        return 0.0;
    }
    penalty * (w.ep * s.ep + w.ttc * s.ttc + w.comfort * s.comfort) / (w.ep + w.ttc + w.comfort)
}

/// Ego poses `P_0 = (0, 0, 0)` at `t = 0` followed by the waypoints.
fn ego_poses(traj: &Trajectory) -> Vec<[f64; 3]> {
    std::iter::once([0.0, 0.0, 0.0]).chain(traj.waypoints.iter().copied()).collect()
}

/// Ego pose at time `t`, clamped to `[0, N dt]`.
pub fn ego_pose_at(traj: &Trajectory, t: f64) -> [f64; 3] {
    let poses = ego_poses(traj);
    if t <= 0.0 {
        return poses[0];
    }
    let n = traj.len();
    let seg = (((t / traj.dt).ceil() as usize).max(1) - 1).min(n - 1);
    let u = ((t - seg as f64 * traj.dt) / traj.dt).clamp(0.0, 1.0);
    let (a, b) = (poses[seg], poses[seg + 1]);
    [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1]), b[2]]
}

fn ego_box(pose: [f64; 3], half_extents: [f64; 2]) -> OrientedBox {
    OrientedBox { center: [pose[0], pose[1]], heading: pose[2], half_extents }
}

/// Earliest time in `[0, N dt]` at which the ego overlaps any agent.
pub fn first_collision(traj: &Trajectory, agents: &[Agent], ego_half_extents: [f64; 2]) -> Option<f64> {
    let poses = ego_poses(traj);
    let dt = traj.dt;
    let start = ego_box(poses[0], ego_half_extents);
    if agents.iter().any(|a| boxes_overlap(&start, &a.box_at(0.0))) {
        return Some(0.0);
    }
    for (i, seg) in poses.windows(2).enumerate() {
        let (t0, t1) = (i as f64 * dt, (i + 1) as f64 * dt);
        let vel = [(seg[1][0] - seg[0][0]) / dt, (seg[1][1] - seg[0][1]) / dt];
        // Footprint extrapolated back to t = 0 so both boxes share a clock.
        let ego0 = ego_box([seg[0][0] - vel[0] * t0, seg[0][1] - vel[1] * t0, seg[1][2]], ego_half_extents);
        let hit = agents
            .iter()
            .filter_map(|a| overlap_interval(&ego0, vel, &a.box_at(0.0), a.velocity, t0, t1))
            .map(|(lo, _)| lo)
            .fold(None, |acc: Option<f64>, lo| Some(acc.map_or(lo, |m| m.min(lo))));
        if hit.is_some() {
            return hit;
        }
    }
    None
}

/// Ego velocity used for time-to-collision at grid point `i` (forward
/// difference; the last point reuses the previous one).
fn grid_velocity(poses: &[[f64; 3]], i: usize, dt: f64) -> [f64; 2] {
    let j = i.min(poses.len() - 2);
    [(poses[j + 1][0] - poses[j][0]) / dt, (poses[j + 1][1] - poses[j][1]) / dt]
}

/// Time until the ego at `pose`, moving at `vel`, first overlaps any agent
/// (agents observed at absolute time `tau`); `+inf` if never.
pub fn time_to_collision(pose: [f64; 3], vel: [f64; 2], tau: f64, agents: &[Agent], ego_half_extents: [f64; 2]) -> f64 {
    let ego = ego_box(pose, ego_half_extents);
    agents
        .iter()
        .filter_map(|a| overlap_interval(&ego, vel, &a.box_at(tau), a.velocity, 0.0, f64::INFINITY))
        .map(|(lo, _)| lo)
        .fold(f64::INFINITY, f64::min)
}

/// Minimum time-to-collision over the waypoint time grid `0, dt, ..., N dt`.
pub fn ttc_min_with(traj: &Trajectory, agents: &[Agent], ego_half_extents: [f64; 2]) -> f64 {
    let poses = ego_poses(traj);
    (0..poses.len())
        .map(|i| time_to_collision(poses[i], grid_velocity(&poses, i, traj.dt), i as f64 * traj.dt, agents, ego_half_extents))
        .fold(f64::INFINITY, f64::min)
}

pub fn ttc_min(traj: &Trajectory, agents: &[Agent]) -> f64 {
    ttc_min_with(traj, agents, EGO_HALF_EXTENTS)
}

/// Largest acceleration and jerk norms from finite differences of the
/// waypoints alone, so translating the trajectory leaves them unchanged.
pub fn comfort_extremes(traj: &Trajectory) -> (f64, f64) {
    let dt = traj.dt;
    let diff = |p: &[[f64; 2]]| -> Vec<[f64; 2]> { p.windows(2).map(|w| [(w[1][0] - w[0][0]) / dt, (w[1][1] - w[0][1]) / dt]).collect() };
    let pos: Vec<[f64; 2]> = traj.waypoints.iter().map(|w| [w[0], w[1]]).collect();
    let acc = diff(&diff(&pos));
    let jerk = diff(&acc);
    let max_norm = |v: &[[f64; 2]]| v.iter().map(|a| a[0].hypot(a[1])).fold(0.0, f64::max);
    (max_norm(&acc), max_norm(&jerk))
}

pub fn eval_subscores(traj: &Trajectory, scene: &SceneEval, cfg: &Thresholds) -> Result<SubScores> {
    traj.validate()?;
    scene.validate()?;
    let nc = first_collision(traj, &scene.agents, cfg.ego_half_extents).is_none();
    let dac = traj.waypoints.iter().all(|w| point_in_polygon([w[0], w[1]], &scene.drivable));
    let ttc = ttc_min_with(traj, &scene.agents, cfg.ego_half_extents) >= cfg.ttc_min;
    let (acc, jerk) = comfort_extremes(traj);
    let comfort = acc <= cfg.a_max && jerk <= cfg.j_max;
    let last = traj.waypoints[traj.len() - 1];
    let progress = project_arc_length([last[0], last[1]], &scene.centerline) - project_arc_length([0.0, 0.0], &scene.centerline);
    let ep = (progress / scene.reference_progress).clamp(0.0, 1.0);
    let b = |x: bool| if x { 1.0 } else { 0.0 };
    Ok(SubScores { nc: b(nc), dac: b(dac), ttc: b(ttc), comfort: b(comfort), ep })
}

/// One report line per (scene, trajectory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub scene: String,
    pub trajectory: usize,
    pub nc: f64,
    pub dac: f64,
    pub ttc: f64,
    pub comfort: f64,
    pub ep: f64,
    pub pdms: f64,
}

impl ScoreRow {
    pub fn new(scene: impl Into<String>, trajectory: usize, s: &SubScores, w: &PdmsWeights) -> Self {
        ScoreRow { scene: scene.into(), trajectory, nc: s.nc, dac: s.dac, ttc: s.ttc, comfort: s.comfort, ep: s.ep, pdms: pdms(s, w) }
    }
}

pub const REPORT_NOTE: &str = "# sub-scores are simplified stand-ins for benchmark scoring";

/// CSV report with a leading `#` comment line.
pub fn write_report(path: impl AsRef<Path>, rows: &[ScoreRow]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "{REPORT_NOTE}")?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Vec<ScoreRow>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
