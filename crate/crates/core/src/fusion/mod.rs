//! Multi-frame camera/LiDAR fusion.
//!
//! Training-style fusion runs the whole multi-frame sequence through the
//! stack at once ([`fuse_parallel`]); streaming inference feeds one frame at a
//! time against a persistent [`RecurrentState`] ([`FusionSession`]). Both give
//! the same tokens for every frame.

mod bev;
mod dropout;
mod frames;

pub use bev::{assemble_bev, BevBundle, BevParams, Command, EgoStatus, EGO_FEATURES};
pub use dropout::{feature_state_dropout, FsdConfig};
pub use frames::{
    build_frame_sequence, pad_history, read_frames_jsonl, split_frames, write_frames_jsonl, FrameRecord,
    FrameShape, FrameTokens,
};

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, LadyError, Result};
use crate::rwkv7::{BlockConfig, Mode, RecurrentState, RwkvStack, StateSnapshot};
use crate::tensor::{uniform_matrix, Real};

/// Runs the stacked blocks over a whole multi-frame sequence from a fresh state.
pub fn fuse_parallel<F: Real>(seq: ArrayView2<F>, stack: &RwkvStack<F>, chunk_size: usize) -> Result<Array2<F>> {
    let mut state = stack.new_state();
    stack.forward(seq, &mut state, Mode::Chunked { chunk_size })
}

/// Fuses one frame against `state`, which holds every previously consumed frame.
pub fn fuse_step<F: Real>(
    frame: &FrameTokens<F>,
    stack: &RwkvStack<F>,
    pos_emb: ArrayView2<F>,
    state: &mut RecurrentState<F>,
    mode: Mode,
) -> Result<Array2<F>> {
    let configs = stack.configs();
    if state.layers.len() != configs.len() || state.layers.iter().zip(&configs).any(|(l, c)| !l.matches(c)) {
        return Err(LadyError::Config("session state does not match the fusion stack".into()));
    }
    let seq = build_frame_sequence(std::slice::from_ref(frame), pos_emb)?;
    stack.forward(seq.view(), state, mode)
}

/// Shapes and depth of the fusion encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub shape: FrameShape,
    /// LiDAR token grid, `rows * cols == shape.l_lidar`.
    pub grid: (usize, usize),
    pub n_layers: usize,
    pub n_heads: usize,
    /// Chunk length used by [`fuse_parallel`].
    pub chunk_size: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            shape: FrameShape { l_cam: 16, l_lidar: 16, d: 64 },
            grid: (4, 4),
            n_layers: 2,
            n_heads: 1,
            chunk_size: 32,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.0 * self.grid.1 != self.shape.l_lidar {
            return Err(dim_err(format!(
                "grid {}x{} does not hold {} lidar tokens",
                self.grid.0, self.grid.1, self.shape.l_lidar
            )));
        }
        if self.n_layers == 0 || self.chunk_size == 0 {
            return Err(LadyError::Config("n_layers and chunk_size must be positive".into()));
        }
        self.block_config().validate()
    }

    pub fn block_config(&self) -> BlockConfig {
        BlockConfig::new(self.shape.d).with_heads(self.n_heads)
    }
}

/// Fusion stack, the shared spatial positional table and the BEV head.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel<F> {
    pub config: FusionConfig,
    pub stack: RwkvStack<F>,
    /// `(l_cam + l_lidar) x d`, added to every frame.
    pub pos_emb: Array2<F>,
    pub bev: BevParams<F>,
}

impl<F: Real> FusionModel<F> {
    pub fn random(config: FusionConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let stack = RwkvStack::random(config.block_config(), config.n_layers, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0xf00d));
        let pos_emb = uniform_matrix(&mut rng, config.shape.tokens_per_frame(), config.shape.d, 0.1);
        let bev = BevParams::random(config.grid, config.shape.d, seed.wrapping_add(0xbe7))?;
        Ok(FusionModel { config, stack, pos_emb, bev })
    }

    pub fn new_session(&self) -> FusionSession<F> {
        FusionSession { state: self.stack.new_state(), frames_seen: 0, last_t: None }
    }

    /// Training-style fusion of `frames` (already padded if needed).
    pub fn fuse_frames(&self, frames: &[FrameTokens<F>]) -> Result<Array2<F>> {
        let seq = build_frame_sequence(frames, self.pos_emb.view())?;
        fuse_parallel(seq.view(), &self.stack, self.config.chunk_size)
    }
}

/// One streaming stream: the recurrent state plus frame bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionSession<F> {
    pub state: RecurrentState<F>,
    pub frames_seen: u64,
    pub last_t: Option<i64>,
}

impl<F: Real> FusionSession<F> {
    /// Consumes one frame and returns its fused `(l_cam + l_lidar) x d` tokens.
    pub fn step(&mut self, model: &FusionModel<F>, frame: &FrameTokens<F>) -> Result<Array2<F>> {
        if let Some(last) = self.last_t {
            if frame.t <= last {
                return Err(LadyError::Ordering(format!("frame {} arrived after frame {last}", frame.t)));
            }
        }
        let out = fuse_step(frame, &model.stack, model.pos_emb.view(), &mut self.state, Mode::Sequential)?;
        self.frames_seen += 1;
        self.last_t = Some(frame.t);
        Ok(out)
    }

    /// Persistent bytes of the session; constant for its whole lifetime.
    pub fn byte_size(&self) -> usize {
        self.state.byte_size() + std::mem::size_of::<u64>() + std::mem::size_of::<Option<i64>>()
    }

    pub fn to_snapshot(&self) -> Result<SessionSnapshot> {
        Ok(SessionSnapshot { state: self.state.to_snapshot()?, frames_seen: self.frames_seen, last_t: self.last_t })
    }

    pub fn from_snapshot(snap: &SessionSnapshot) -> Result<Self> {
        Ok(FusionSession {
            state: RecurrentState::from_snapshot(&snap.state)?,
            frames_seen: snap.frames_seen,
            last_t: snap.last_t,
        })
    }
}

/// Serialized [`FusionSession`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub state: StateSnapshot,
    pub frames_seen: u64,
    pub last_t: Option<i64>,
}

impl SessionSnapshot {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> FusionConfig {
        FusionConfig { shape: FrameShape { l_cam: 2, l_lidar: 4, d: 8 }, grid: (2, 2), n_layers: 2, n_heads: 2, chunk_size: 4 }
    }

    fn frame(t: i64, seed: u64, shape: FrameShape) -> FrameTokens<f64> {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = |rows| Array2::from_shape_simple_fn((rows, shape.d), || StandardNormal.sample(&mut rng));
        FrameTokens { t, camera: m(shape.l_cam), lidar: m(shape.l_lidar) }
    }

    #[test]
    fn single_frame_parallel_equals_step() {
        let model = FusionModel::<f64>::random(small(), 1).unwrap();
        let f = frame(0, 2, model.config.shape);
        let par = model.fuse_frames(std::slice::from_ref(&f)).unwrap();
        let mut session = model.new_session();
        let step = session.step(&model, &f).unwrap();
        assert_eq!(par.dim(), step.dim());
        for (a, b) in par.iter().zip(step.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn session_rejects_out_of_order_frames() {
        let model = FusionModel::<f64>::random(small(), 1).unwrap();
        let mut session = model.new_session();
        session.step(&model, &frame(3, 0, model.config.shape)).unwrap();
        let err = session.step(&model, &frame(3, 1, model.config.shape));
        assert!(matches!(err, Err(LadyError::Ordering(_))));
    }

    #[test]
    fn mismatched_state_is_config_error() {
        let model = FusionModel::<f64>::random(small(), 1).unwrap();
        let mut other = small();
        other.n_heads = 1;
        let other = FusionModel::<f64>::random(other, 1).unwrap();
        let mut st = other.stack.new_state();
        let f = frame(0, 0, model.config.shape);
        let err = fuse_step(&f, &model.stack, model.pos_emb.view(), &mut st, Mode::Sequential);
        assert!(matches!(err, Err(LadyError::Config(_))));
    }

    #[test]
    fn bad_grid_is_rejected() {
        let mut cfg = small();
        cfg.grid = (3, 2);
        assert!(cfg.validate().is_err());
    }
}
