use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ops::Lora;
use crate::error::{dim_err, LadyError, Result};
use crate::tensor::{uniform_matrix, uniform_vector, Real};

/// Epsilon of every layer normalization inside a block.
pub const NORM_EPS: f64 = 1e-5;

/// Ranks of the four low-rank MLPs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoraRanks {
    pub w: usize,
    pub a: usize,
    pub v: usize,
    pub g: usize,
}

impl LoraRanks {
    pub fn uniform(rank: usize) -> Self {
        LoraRanks { w: rank, a: rank, v: rank, g: rank }
    }

    /// `max(1, d / 4)` for every element.
    pub fn default_for(d: usize) -> Self {
        Self::uniform((d / 4).max(1))
    }
}

/// Shape hyper-parameters of one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub d: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub ranks: LoraRanks,
}

impl BlockConfig {
    /// Single head, `4d` feed-forward width, default lora ranks.
    pub fn new(d: usize) -> Self {
        BlockConfig { d, n_heads: 1, ffn_dim: 4 * d, ranks: LoraRanks::default_for(d) }
    }

    pub fn with_heads(mut self, n_heads: usize) -> Self {
        self.n_heads = n_heads;
        self
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n_heads == 0 || self.ffn_dim == 0 {
            return Err(LadyError::Config("d, n_heads and ffn_dim must be positive".into()));
        }
        if !self.d.is_multiple_of(self.n_heads) {
            return Err(LadyError::Config(format!(
                "d = {} is not divisible by n_heads = {}",
                self.d, self.n_heads
            )));
        }
        for (name, r) in [("w", self.ranks.w), ("a", self.ranks.a), ("v", self.ranks.v), ("g", self.ranks.g)] {
            if r == 0 || r > self.d {
                return Err(LadyError::Config(format!("lora rank {name} = {r} outside [1, {}]", self.d)));
            }
        }
        Ok(())
    }
}

/// All learned tensors of one RWKV-7 block.
#[derive(Debug, Clone, PartialEq)]
pub struct RwkvBlockParams<F> {
    pub config: BlockConfig,
    pub mu_r: Array1<F>,
    pub mu_w: Array1<F>,
    pub mu_k: Array1<F>,
    pub mu_v: Array1<F>,
    pub mu_a: Array1<F>,
    pub mu_g: Array1<F>,
    pub mu_kp: Array1<F>,
    pub w_r: Array2<F>,
    pub w_k: Array2<F>,
    pub w_v: Array2<F>,
    pub w_o: Array2<F>,
    /// Channel-mix key projection, `d x ffn_dim`.
    pub w_kp: Array2<F>,
    /// Channel-mix value projection, `ffn_dim x d`.
    pub w_vp: Array2<F>,
    pub lora_w: Lora<F>,
    pub lora_a: Lora<F>,
    pub lora_v: Lora<F>,
    pub lora_g: Lora<F>,
    pub xi: Array1<F>,
    pub alpha: Array1<F>,
    pub rho: Array1<F>,
    /// Affine of the per-head norm applied to `r S^T`.
    pub gn_weight: Array1<F>,
    pub gn_bias: Array1<F>,
    /// Pre-norm in front of time mixing.
    pub ln1_weight: Array1<F>,
    pub ln1_bias: Array1<F>,
    /// Pre-norm in front of channel mixing.
    pub ln2_weight: Array1<F>,
    pub ln2_bias: Array1<F>,
}

enum TensorRef<'a, F> {
    Vector(&'a Array1<F>),
    Matrix(&'a Array2<F>),
}

enum TensorMut<'a, F> {
    Vector(&'a mut Array1<F>),
    Matrix(&'a mut Array2<F>),
}

impl<F: Real> RwkvBlockParams<F> {
    /// All projections zero, mix vectors zero, norms identity.
    pub fn zeros(config: BlockConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d;
        let v = || Array1::zeros(d);
        let m = || Array2::zeros((d, d));
        Ok(RwkvBlockParams {
            config,
            mu_r: v(),
            mu_w: v(),
            mu_k: v(),
            mu_v: v(),
            mu_a: v(),
            mu_g: v(),
            mu_kp: v(),
            w_r: m(),
            w_k: m(),
            w_v: m(),
            w_o: m(),
            w_kp: Array2::zeros((d, config.ffn_dim)),
            w_vp: Array2::zeros((config.ffn_dim, d)),
            lora_w: Lora::zeros(d, config.ranks.w),
            lora_a: Lora::zeros(d, config.ranks.a),
            lora_v: Lora::zeros(d, config.ranks.v),
            lora_g: Lora::zeros(d, config.ranks.g),
            xi: v(),
            alpha: v(),
            rho: v(),
            gn_weight: Array1::ones(d),
            gn_bias: v(),
            ln1_weight: Array1::ones(d),
            ln1_bias: v(),
            ln2_weight: Array1::ones(d),
            ln2_bias: v(),
        })
    }

    /// Seeded random initialization with magnitudes that keep activations O(1).
    pub fn random(config: BlockConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d;
        let s = 1.0 / (d as f64).sqrt();
        for mu in [&mut p.mu_r, &mut p.mu_w, &mut p.mu_k, &mut p.mu_v, &mut p.mu_a, &mut p.mu_g, &mut p.mu_kp] {
            *mu = uniform_vector(&mut rng, d, 0.0, 1.0);
        }
        for w in [&mut p.w_r, &mut p.w_k, &mut p.w_v, &mut p.w_o] {
            *w = uniform_matrix(&mut rng, d, d, s);
        }
        p.w_kp = uniform_matrix(&mut rng, d, config.ffn_dim, s);
        p.w_vp = uniform_matrix(&mut rng, config.ffn_dim, d, 1.0 / (config.ffn_dim as f64).sqrt());
        for (lora, with_bias) in [
            (&mut p.lora_w, true),
            (&mut p.lora_a, true),
            (&mut p.lora_v, true),
            (&mut p.lora_g, false),
        ] {
            let rank = lora.rank();
            lora.a = uniform_matrix(&mut rng, d, rank, s);
            lora.b = uniform_matrix(&mut rng, rank, d, 1.0 / (rank as f64).sqrt());
            if with_bias {
                lora.lambda = uniform_vector(&mut rng, d, -1.0, 1.0);
            }
        }
        p.xi = uniform_vector(&mut rng, d, 0.5, 1.5);
        p.alpha = uniform_vector(&mut rng, d, 0.0, 1.0);
        p.rho = uniform_vector(&mut rng, d, -0.5, 0.5);
        p.gn_weight = uniform_vector(&mut rng, d, 0.5, 1.5);
        p.gn_bias = uniform_vector(&mut rng, d, -0.1, 0.1);
        p.ln1_weight = uniform_vector(&mut rng, d, 0.8, 1.2);
        p.ln1_bias = uniform_vector(&mut rng, d, -0.1, 0.1);
        p.ln2_weight = uniform_vector(&mut rng, d, 0.8, 1.2);
        p.ln2_bias = uniform_vector(&mut rng, d, -0.1, 0.1);
        Ok(p)
    }

    pub fn d(&self) -> usize {
        self.config.d
    }

    pub fn n_heads(&self) -> usize {
        self.config.n_heads
    }

    fn tensors(&self) -> Vec<(String, TensorRef<'_, F>)> {
        use TensorRef::{Matrix as M, Vector as V};
        let mut out = vec![
            ("mu_r".to_string(), V(&self.mu_r)),
            ("mu_w".into(), V(&self.mu_w)),
            ("mu_k".into(), V(&self.mu_k)),
            ("mu_v".into(), V(&self.mu_v)),
            ("mu_a".into(), V(&self.mu_a)),
            ("mu_g".into(), V(&self.mu_g)),
            ("mu_kp".into(), V(&self.mu_kp)),
            ("W_r".into(), M(&self.w_r)),
            ("W_k".into(), M(&self.w_k)),
            ("W_v".into(), M(&self.w_v)),
            ("W_o".into(), M(&self.w_o)),
            ("W_kp".into(), M(&self.w_kp)),
            ("W_vp".into(), M(&self.w_vp)),
            ("xi".into(), V(&self.xi)),
            ("alpha".into(), V(&self.alpha)),
            ("rho".into(), V(&self.rho)),
            ("gn.weight".into(), V(&self.gn_weight)),
            ("gn.bias".into(), V(&self.gn_bias)),
            ("ln1.weight".into(), V(&self.ln1_weight)),
            ("ln1.bias".into(), V(&self.ln1_bias)),
            ("ln2.weight".into(), V(&self.ln2_weight)),
            ("ln2.bias".into(), V(&self.ln2_bias)),
        ];
        for (name, lora) in [("w", &self.lora_w), ("a", &self.lora_a), ("v", &self.lora_v), ("g", &self.lora_g)] {
            out.push((format!("lora_{name}.A"), M(&lora.a)));
            out.push((format!("lora_{name}.B"), M(&lora.b)));
            out.push((format!("lora_{name}.lambda"), V(&lora.lambda)));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, TensorMut<'_, F>)> {
        use TensorMut::{Matrix as M, Vector as V};
        let mut out = vec![
            ("mu_r".to_string(), V(&mut self.mu_r)),
            ("mu_w".into(), V(&mut self.mu_w)),
            ("mu_k".into(), V(&mut self.mu_k)),
            ("mu_v".into(), V(&mut self.mu_v)),
            ("mu_a".into(), V(&mut self.mu_a)),
            ("mu_g".into(), V(&mut self.mu_g)),
            ("mu_kp".into(), V(&mut self.mu_kp)),
            ("W_r".into(), M(&mut self.w_r)),
            ("W_k".into(), M(&mut self.w_k)),
            ("W_v".into(), M(&mut self.w_v)),
            ("W_o".into(), M(&mut self.w_o)),
            ("W_kp".into(), M(&mut self.w_kp)),
            ("W_vp".into(), M(&mut self.w_vp)),
            ("xi".into(), V(&mut self.xi)),
            ("alpha".into(), V(&mut self.alpha)),
            ("rho".into(), V(&mut self.rho)),
            ("gn.weight".into(), V(&mut self.gn_weight)),
            ("gn.bias".into(), V(&mut self.gn_bias)),
            ("ln1.weight".into(), V(&mut self.ln1_weight)),
            ("ln1.bias".into(), V(&mut self.ln1_bias)),
            ("ln2.weight".into(), V(&mut self.ln2_weight)),
            ("ln2.bias".into(), V(&mut self.ln2_bias)),
        ];
        for (name, lora) in [
            ("w", &mut self.lora_w),
            ("a", &mut self.lora_a),
            ("v", &mut self.lora_v),
            ("g", &mut self.lora_g),
        ] {
            out.push((format!("lora_{name}.A"), M(&mut lora.a)));
            out.push((format!("lora_{name}.B"), M(&mut lora.b)));
            out.push((format!("lora_{name}.lambda"), V(&mut lora.lambda)));
        }
        out
    }

    /// Checks every shape against the config and every mix vector against `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let reference = Self::zeros(self.config)?;
        for ((name, t), (_, r)) in self.tensors().into_iter().zip(reference.tensors()) {
            let (got, want) = match (t, r) {
                (TensorRef::Vector(a), TensorRef::Vector(b)) => (a.shape().to_vec(), b.shape().to_vec()),
                (TensorRef::Matrix(a), TensorRef::Matrix(b)) => (a.shape().to_vec(), b.shape().to_vec()),
                _ => unreachable!("tensor lists are built in the same order"),
            };
            if got != want {
                return Err(dim_err(format!("{name}: expected shape {want:?}, got {got:?}")));
            }
        }
        for (name, mu) in [
            ("mu_r", &self.mu_r),
            ("mu_w", &self.mu_w),
            ("mu_k", &self.mu_k),
            ("mu_v", &self.mu_v),
            ("mu_a", &self.mu_a),
            ("mu_g", &self.mu_g),
            ("mu_kp", &self.mu_kp),
        ] {
            if mu.iter().any(|&m| !(m >= F::zero() && m <= F::one())) {
                return Err(LadyError::Config(format!("{name} has a component outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn to_snapshot(&self) -> BlockSnapshot {
        let tensors = self
            .tensors()
            .into_iter()
            .map(|(name, t)| {
                let entry = match t {
                    TensorRef::Vector(v) => NamedTensor {
                        dims: vec![v.len()],
                        data: v.iter().map(|x| x.as_f64()).collect(),
                    },
                    TensorRef::Matrix(m) => NamedTensor {
                        dims: vec![m.nrows(), m.ncols()],
                        data: m.iter().map(|x| x.as_f64()).collect(),
                    },
                };
                (name, entry)
            })
            .collect();
        BlockSnapshot { config: self.config, tensors }
    }

    /// Rebuilds parameters from a snapshot, rejecting missing, unknown or
    /// mis-shaped entries.
    pub fn from_snapshot(snap: &BlockSnapshot) -> Result<Self> {
        let mut p = Self::zeros(snap.config)?;
        let mut seen = 0;
        for (name, slot) in p.tensors_mut() {
            let entry = snap
                .tensors
                .get(&name)
                .ok_or_else(|| dim_err(format!("snapshot is missing tensor '{name}'")))?;
            let expected: usize = entry.dims.iter().product();
            if entry.data.len() != expected {
                return Err(dim_err(format!(
                    "{name}: dims {:?} need {expected} values, found {}",
                    entry.dims,
                    entry.data.len()
                )));
            }
            match slot {
                TensorMut::Vector(v) => {
                    if entry.dims != [v.len()] {
                        return Err(dim_err(format!("{name}: expected dims [{}], got {:?}", v.len(), entry.dims)));
                    }
                    v.iter_mut().zip(&entry.data).for_each(|(dst, &src)| *dst = F::of(src));
                }
                TensorMut::Matrix(m) => {
                    if entry.dims != [m.nrows(), m.ncols()] {
                        return Err(dim_err(format!(
                            "{name}: expected dims [{}, {}], got {:?}",
                            m.nrows(),
                            m.ncols(),
                            entry.dims
                        )));
                    }
                    m.iter_mut().zip(&entry.data).for_each(|(dst, &src)| *dst = F::of(src));
                }
            }
            seen += 1;
        }
        if seen != snap.tensors.len() {
            let known: Vec<String> = p.tensors().into_iter().map(|(n, _)| n).collect();
            let extra: Vec<&String> = snap.tensors.keys().filter(|k| !known.contains(k)).collect();
            return Err(dim_err(format!("snapshot has unknown tensors {extra:?}")));
        }
        p.validate()?;
        Ok(p)
    }
}

/// One named tensor in a parameter snapshot. `data` is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSnapshot {
    pub config: BlockConfig,
    pub tensors: BTreeMap<String, NamedTensor>,
}

/// JSON parameter container for a stack of blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSnapshot {
    pub blocks: Vec<BlockSnapshot>,
}

impl ParamSnapshot {
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

    #[test]
    fn config_rejects_indivisible_heads() {
        let cfg = BlockConfig::new(10).with_heads(4);
        assert!(matches!(cfg.validate(), Err(LadyError::Config(_))));
    }

    #[test]
    fn config_rejects_rank_above_d() {
        let mut cfg = BlockConfig::new(8);
        cfg.ranks.g = 9;
        assert!(cfg.validate().is_err());
        cfg.ranks.g = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_ranks() {
        assert_eq!(LoraRanks::default_for(2).w, 1);
        assert_eq!(LoraRanks::default_for(64).a, 16);
    }

    #[test]
    fn random_params_are_valid_and_seeded() {
        let cfg = BlockConfig::new(16).with_heads(4);
        let a = RwkvBlockParams::<f64>::random(cfg, 3).unwrap();
        let b = RwkvBlockParams::<f64>::random(cfg, 3).unwrap();
        let c = RwkvBlockParams::<f64>::random(cfg, 4).unwrap();
        a.validate().unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn mix_vector_outside_unit_interval_is_rejected() {
        let mut p = RwkvBlockParams::<f64>::random(BlockConfig::new(8), 1).unwrap();
        p.mu_g[3] = 1.5;
        assert!(matches!(p.validate(), Err(LadyError::Config(_))));
    }

    #[test]
    fn snapshot_round_trip_and_shape_checks() {
        let p = RwkvBlockParams::<f32>::random(BlockConfig::new(8), 9).unwrap();
        let snap = p.to_snapshot();
        let json = serde_json::to_string(&ParamSnapshot { blocks: vec![snap.clone()] }).unwrap();
        let back: ParamSnapshot = serde_json::from_str(&json).unwrap();
        let q = RwkvBlockParams::<f32>::from_snapshot(&back.blocks[0]).unwrap();
        assert_eq!(p, q);

        let mut bad = snap.clone();
        bad.tensors.get_mut("W_r").unwrap().dims = vec![4, 16];
        assert!(matches!(RwkvBlockParams::<f32>::from_snapshot(&bad), Err(LadyError::Dimension(_))));

        let mut missing = snap.clone();
        missing.tensors.remove("lora_w.A");
        assert!(RwkvBlockParams::<f32>::from_snapshot(&missing).is_err());

        let mut extra = snap;
        extra.tensors.insert("bogus".into(), NamedTensor { dims: vec![1], data: vec![0.0] });
        assert!(RwkvBlockParams::<f32>::from_snapshot(&extra).is_err());
    }
}
