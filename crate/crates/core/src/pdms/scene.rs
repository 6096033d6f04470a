//! Synthetic evaluation scenes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::geometry::{polygon_is_simple, OrientedBox};
use crate::error::{LadyError, Result};

/// Constant-velocity agent. `pose` is `(x, y, heading)` at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub pose: [f64; 3],
    pub velocity: [f64; 2],
    pub half_extents: [f64; 2],
}

impl Agent {
    pub fn stationary(x: f64, y: f64, heading: f64, half_extents: [f64; 2]) -> Self {
        Agent { pose: [x, y, heading], velocity: [0.0, 0.0], half_extents }
    }

    /// Footprint at time `t`.
    pub fn box_at(&self, t: f64) -> OrientedBox {
        OrientedBox {
            center: [self.pose[0] + self.velocity[0] * t, self.pose[1] + self.velocity[1] * t],
            heading: self.pose[2],
            half_extents: self.half_extents,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEval {
    pub agents: Vec<Agent>,
    /// Drivable-area polygon, vertices in order, implicitly closed.
    pub drivable: Vec<[f64; 2]>,
    pub centerline: Vec<[f64; 2]>,
    /// Progress (m) achieved by the reference trajectory.
    pub reference_progress: f64,
}

impl SceneEval {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        for (i, a) in self.agents.iter().enumerate() {
            if !finite(&a.pose) || !finite(&a.velocity) || !finite(&a.half_extents) {
                return Err(LadyError::Scene(format!("agent {i} has non-finite fields")));
            }
            if a.half_extents.iter().any(|&h| h < 0.0) {
                return Err(LadyError::Scene(format!("agent {i} has negative extents")));
            }
        }
        if !self.drivable.iter().all(|p| finite(p)) || !polygon_is_simple(&self.drivable) {
            return Err(LadyError::Scene("drivable polygon must be simple with at least 3 vertices".into()));
        }
        if self.centerline.len() < 2 || !self.centerline.iter().all(|p| finite(p)) {
            return Err(LadyError::Scene("centerline needs at least 2 finite points".into()));
        }
        if self.centerline_length() <= 0.0 {
            return Err(LadyError::Scene("centerline has zero length".into()));
        }
        if !(self.reference_progress.is_finite() && self.reference_progress > 0.0) {
            return Err(LadyError::Scene("reference_progress must be positive".into()));
        }
        Ok(())
    }

    pub fn centerline_length(&self) -> f64 {
        self.centerline.windows(2).map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt()).sum()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let scene: SceneEval = serde_json::from_slice(&fs::read(path)?)?;
        scene.validate()?;
        Ok(scene)
    }
}
