use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, LadyError, Result};
use crate::tensor::{uniform_matrix, uniform_vector, Real};

/// High-level driving command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    TurnLeft,
    TurnRight,
    LaneChange,
    Follow,
}

/// Current ego status. Serialized as `{v, a, cmd}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoStatus {
    #[serde(rename = "v")]
    pub velocity: f64,
    #[serde(rename = "a")]
    pub acceleration: f64,
    #[serde(rename = "cmd")]
    pub command: Command,
}

/// Length of [`EgoStatus::features`].
pub const EGO_FEATURES: usize = 5;

impl EgoStatus {
    pub fn new(velocity: f64, acceleration: f64, command: Command) -> Result<Self> {
        let ego = EgoStatus { velocity, acceleration, command };
        ego.validate()?;
        Ok(ego)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.velocity.is_finite() || !self.acceleration.is_finite() {
            return Err(LadyError::Numeric("ego status must be finite".into()));
        }
        Ok(())
    }

    /// `[v, a, left, right, lane_change]`; `Follow` is the all-zero command code.
    pub fn features(&self) -> [f64; EGO_FEATURES] {
        let mut f = [self.velocity, self.acceleration, 0.0, 0.0, 0.0];
        match self.command {
            Command::TurnLeft => f[2] = 1.0,
            Command::TurnRight => f[3] = 1.0,
            Command::LaneChange => f[4] = 1.0,
            Command::Follow => {}
        }
        f
    }
}

/// BEV tokens plus the ego token, both with positional embeddings applied.
#[derive(Debug, Clone, PartialEq)]
pub struct BevBundle<F> {
    pub bev_tokens: Array2<F>,
    pub ego_token: Array1<F>,
    /// The `(L_b + 1) x d` table that was added.
    pub pos_emb: Array2<F>,
}

impl<F: Real> BevBundle<F> {
    /// `[bev_tokens; ego_token]` as one `(L_b + 1) x d` sequence.
    pub fn tokens(&self) -> Array2<F> {
        let ego = self.ego_token.view().insert_axis(Axis(0));
        concatenate(Axis(0), &[self.bev_tokens.view(), ego]).expect("bundle widths agree")
    }

    pub fn len(&self) -> usize {
        self.bev_tokens.nrows() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// A single 3x3 local mixing layer over the LiDAR grid plus the ego embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct BevParams<F> {
    pub grid: (usize, usize),
    /// Nine `d x d` taps, index `(dy + 1) * 3 + (dx + 1)`.
    pub taps: Vec<Array2<F>>,
    pub bias: Array1<F>,
    pub ego_weight: Array2<F>,
    pub ego_bias: Array1<F>,
    pub pos_emb: Array2<F>,
}

impl<F: Real> BevParams<F> {
    /// Centre tap identity, everything else zero.
    pub fn identity(grid: (usize, usize), d: usize) -> Self {
        let mut taps = vec![Array2::zeros((d, d)); 9];
        taps[4] = Array2::eye(d);
        BevParams {
            grid,
            taps,
            bias: Array1::zeros(d),
            ego_weight: Array2::zeros((EGO_FEATURES, d)),
            ego_bias: Array1::zeros(d),
            pos_emb: Array2::zeros((grid.0 * grid.1 + 1, d)),
        }
    }

    pub fn random(grid: (usize, usize), d: usize, seed: u64) -> Result<Self> {
        if grid.0 == 0 || grid.1 == 0 || d == 0 {
            return Err(LadyError::Config("BEV grid and width must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / ((9 * d) as f64).sqrt();
        Ok(BevParams {
            grid,
            taps: (0..9).map(|_| uniform_matrix(&mut rng, d, d, scale)).collect(),
            bias: uniform_vector(&mut rng, d, -0.1, 0.1),
            ego_weight: uniform_matrix(&mut rng, EGO_FEATURES, d, 0.2),
            ego_bias: uniform_vector(&mut rng, d, -0.1, 0.1),
            pos_emb: uniform_matrix(&mut rng, grid.0 * grid.1 + 1, d, 0.1),
        })
    }

    pub fn d(&self) -> usize {
        self.bias.len()
    }
}

/// Turns fused LiDAR tokens (row-major on `params.grid`) into a [`BevBundle`].
pub fn assemble_bev<F: Real>(fused_lidar: ArrayView2<F>, ego: &EgoStatus, params: &BevParams<F>) -> Result<BevBundle<F>> {
    ego.validate()?;
    let (rows, cols) = params.grid;
    let d = params.d();
    if fused_lidar.dim() != (rows * cols, d) {
        return Err(dim_err(format!(
            "fused lidar is {:?}, grid {rows}x{cols} with d = {d} needs ({}, {d})",
            fused_lidar.dim(),
            rows * cols
        )));
    }
    if params.taps.len() != 9 || params.pos_emb.dim() != (rows * cols + 1, d) || params.ego_weight.dim() != (EGO_FEATURES, d) {
        return Err(dim_err("BEV parameters do not match the grid"));
    }
    let mut bev = Array2::zeros((rows * cols, d));
    for y in 0..rows {
        for x in 0..cols {
            let mut acc = params.bias.clone();
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (ny, nx) = (y as i64 + dy, x as i64 + dx);
                    if ny < 0 || nx < 0 || ny >= rows as i64 || nx >= cols as i64 {
                        continue;
                    }
                    let src = fused_lidar.row(ny as usize * cols + nx as usize);
                    let tap = &params.taps[((dy + 1) * 3 + (dx + 1)) as usize];
                    acc += &src.dot(tap);
                }
            }
            bev.row_mut(y * cols + x).assign(&acc);
        }
    }
    let feats = Array1::from_iter(ego.features().iter().map(|&v| F::of(v)));
    let mut ego_token = feats.dot(&params.ego_weight) + &params.ego_bias;

    bev += &params.pos_emb.slice(ndarray::s![..rows * cols, ..]);
    ego_token += &params.pos_emb.row(rows * cols);
    Ok(BevBundle { bev_tokens: bev, ego_token, pos_emb: params.pos_emb.clone() })
}
