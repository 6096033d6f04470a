use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, LadyError, Result};

/// Waypoint period of every trajectory, seconds (2 Hz).
pub const DEFAULT_DT: f64 = 0.5;
/// Default horizon: 8 waypoints over 4 s.
pub const DEFAULT_HORIZON: usize = 8;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// `N` ego-frame waypoints `(x, y, heading)` spaced `dt` seconds apart.
/// Waypoint `i` is reached at time `(i + 1) * dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub waypoints: Vec<[f64; 3]>,
}

impl Trajectory {
    pub fn new(dt: f64, waypoints: Vec<[f64; 3]>) -> Result<Self> {
        let mut t = Trajectory { dt, waypoints };
        for w in &mut t.waypoints {
            w[2] = wrap_angle(w[2]);
        }
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.waypoints.is_empty() {
            return Err(dim_err("a trajectory needs at least one waypoint"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(LadyError::Config(format!("dt = {} must be positive", self.dt)));
        }
        if self.waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(LadyError::Numeric("trajectory has non-finite waypoints".into()));
        }
        if self.waypoints.iter().any(|w| !(w[2] > -PI && w[2] <= PI)) {
            return Err(LadyError::Contract("heading outside (-pi, pi]".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    /// Row-major `[x0, y0, h0, x1, ...]`.
    pub fn flatten(&self) -> Vec<f64> {
        self.waypoints.iter().flatten().copied().collect()
    }

    pub fn from_flat(dt: f64, flat: &[f64]) -> Result<Self> {
        if flat.is_empty() || !flat.len().is_multiple_of(3) {
            return Err(dim_err(format!("{} values do not form waypoints", flat.len())));
        }
        Self::new(dt, flat.chunks(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let t: Trajectory = serde_json::from_slice(&fs::read(path)?)?;
        Trajectory::new(t.dt, t.waypoints)
    }
}

/// Prototype trajectories used to initialize diffusion.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub anchors: Vec<Trajectory>,
}

impl AnchorSet {
    /// Requires at least one anchor, a common shape and pairwise-distinct anchors.
    pub fn new(anchors: Vec<Trajectory>) -> Result<Self> {
        let first = anchors.first().ok_or_else(|| LadyError::InsufficientData("empty anchor set".into()))?;
        let (n, dt) = (first.len(), first.dt);
        for a in &anchors {
            a.validate()?;
            if a.len() != n || a.dt != dt {
                return Err(dim_err("anchors differ in horizon or dt"));
            }
        }
        for i in 0..anchors.len() {
            for j in i + 1..anchors.len() {
                if anchors[i].waypoints == anchors[j].waypoints {
                    return Err(LadyError::Contract(format!("anchors {i} and {j} coincide")));
                }
            }
        }
        Ok(AnchorSet { anchors })
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.anchors[0].len()
    }

    pub fn dt(&self) -> f64 {
        self.anchors[0].dt
    }

    /// Anchor file: a JSON array of trajectories.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec(&self.anchors)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let raw: Vec<Trajectory> = serde_json::from_slice(&fs::read(path)?)?;
        let anchors = raw.into_iter().map(|t| Trajectory::new(t.dt, t.waypoints)).collect::<Result<_>>()?;
        Self::new(anchors)
    }
}

/// Reads a JSON array of trajectories (dataset or anchor file).
pub fn load_trajectories(path: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    let raw: Vec<Trajectory> = serde_json::from_slice(&fs::read(path)?)?;
    raw.into_iter().map(|t| Trajectory::new(t.dt, t.waypoints)).collect()
}
