use std::fs;
use std::mem::size_of;
use std::path::Path;

use ndarray::{Array1, Array3};
use serde::{Deserialize, Serialize};

use super::params::BlockConfig;
use crate::error::{dim_err, LadyError, Result};
use crate::tensor::Real;

/// Recurrent memory of one layer.
///
/// `s[h]` is the `head_dim x head_dim` state of head `h`; rows index the
/// value dimension, columns the key dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState<F> {
    pub s: Array3<F>,
    /// Previous normalized token seen by time mixing.
    pub shift_tm: Array1<F>,
    /// Previous normalized token seen by channel mixing.
    pub shift_cm: Array1<F>,
}

impl<F: Real> LayerState<F> {
    pub fn new(config: &BlockConfig) -> Self {
        let dh = config.head_dim();
        LayerState {
            s: Array3::zeros((config.n_heads, dh, dh)),
            shift_tm: Array1::zeros(config.d),
            shift_cm: Array1::zeros(config.d),
        }
    }

    pub fn matches(&self, config: &BlockConfig) -> bool {
        let dh = config.head_dim();
        self.s.dim() == (config.n_heads, dh, dh)
            && self.shift_tm.len() == config.d
            && self.shift_cm.len() == config.d
    }

    fn byte_size(&self) -> usize {
        (self.s.len() + self.shift_tm.len() + self.shift_cm.len()) * size_of::<F>()
    }
}

/// The entire memory of a streaming session: one [`LayerState`] per layer
/// plus a counter of consumed tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState<F> {
    pub layers: Vec<LayerState<F>>,
    pub tokens_consumed: u64,
}

impl<F: Real> RecurrentState<F> {
    /// Zero state: `S = 0` and both shift caches zero.
    pub fn new(configs: &[BlockConfig]) -> Self {
        RecurrentState { layers: configs.iter().map(LayerState::new).collect(), tokens_consumed: 0 }
    }

    /// Bytes of persistent memory. Depends only on the layer shapes.
    pub fn byte_size(&self) -> usize {
        self.layers.iter().map(LayerState::byte_size).sum::<usize>() + size_of::<u64>()
    }

    pub fn to_snapshot(&self) -> Result<StateSnapshot> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let (n_heads, head_dim, _) = l.s.dim();
                let all = l.s.iter().chain(&l.shift_tm).chain(&l.shift_cm);
                if !all.clone().all(|v| v.is_finite()) {
                    return Err(LadyError::Numeric("cannot snapshot a non-finite state".into()));
                }
                Ok(LayerSnapshot {
                    n_heads,
                    head_dim,
                    s: l.s.iter().map(|v| v.as_f64()).collect(),
                    shift_tm: l.shift_tm.iter().map(|v| v.as_f64()).collect(),
                    shift_cm: l.shift_cm.iter().map(|v| v.as_f64()).collect(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(StateSnapshot {
            dtype: std::any::type_name::<F>().to_string(),
            tokens_consumed: self.tokens_consumed,
            layers,
        })
    }

    pub fn from_snapshot(snap: &StateSnapshot) -> Result<Self> {
        let want = std::any::type_name::<F>();
        if snap.dtype != want {
            return Err(LadyError::Config(format!("snapshot holds {} but {want} was requested", snap.dtype)));
        }
        let layers = snap
            .layers
            .iter()
            .map(|l| {
                let d = l.n_heads * l.head_dim;
                if l.s.len() != l.n_heads * l.head_dim * l.head_dim || l.shift_tm.len() != d || l.shift_cm.len() != d {
                    return Err(dim_err("state snapshot layer has inconsistent sizes"));
                }
                let s = Array3::from_shape_vec(
                    (l.n_heads, l.head_dim, l.head_dim),
                    l.s.iter().map(|&v| F::of(v)).collect(),
                )
                .map_err(|e| dim_err(e.to_string()))?;
                Ok(LayerState {
                    s,
                    shift_tm: l.shift_tm.iter().map(|&v| F::of(v)).collect(),
                    shift_cm: l.shift_cm.iter().map(|&v| F::of(v)).collect(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(RecurrentState { layers, tokens_consumed: snap.tokens_consumed })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSnapshot {
    pub n_heads: usize,
    pub head_dim: usize,
    pub s: Vec<f64>,
    pub shift_tm: Vec<f64>,
    pub shift_cm: Vec<f64>,
}

/// Serialized [`RecurrentState`]. Values are widened to `f64`, so both
/// precisions round-trip bit-exactly through JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub dtype: String,
    pub tokens_consumed: u64,
    pub layers: Vec<LayerSnapshot>,
}

impl StateSnapshot {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}
