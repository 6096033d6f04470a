use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::elements::{project_elements, ElementSet};
use super::mixing::{channel_mix, time_mix_output};
use super::params::{BlockConfig, ParamSnapshot, RwkvBlockParams, NORM_EPS};
use super::recurrence::{chunk_forward, state_step};
use super::state::{LayerState, RecurrentState};
use crate::error::{dim_err, LadyError, Result};
use crate::tensor::{layer_norm, Real};

/// How the state recurrence is evaluated. Both modes compute the same function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Sequential,
    Chunked { chunk_size: usize },
}

impl Mode {
    pub fn validate(&self) -> Result<()> {
        match self {
            Mode::Chunked { chunk_size: 0 } => Err(LadyError::Config("chunk size must be at least 1".into())),
            _ => Ok(()),
        }
    }
}

/// Output tokens of one block plus the layer-0 values later layers mix in.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockRun<F> {
    pub outputs: Array2<F>,
    pub v_first: Array2<F>,
}

/// Pre-norm residual block:
/// `x' = x + time_mix(LN1(x))`, `y = x' + channel_mix(LN2(x'))`.
///
/// `state` is advanced so that a later call continues the same stream.
pub fn block_forward<F: Real>(
    tokens: ArrayView2<F>,
    params: &RwkvBlockParams<F>,
    state: &mut LayerState<F>,
    layer: usize,
    v0: Option<ArrayView2<F>>,
    mode: Mode,
) -> Result<BlockRun<F>> {
    mode.validate()?;
    let d = params.d();
    let n = tokens.nrows();
    if tokens.ncols() != d {
        return Err(dim_err(format!("tokens have width {}, block expects {d}", tokens.ncols())));
    }
    if !state.matches(&params.config) {
        return Err(LadyError::Config("layer state does not match block configuration".into()));
    }
    if let Some(v0) = v0 {
        if v0.dim() != (n, d) {
            return Err(dim_err(format!("layer-0 values have shape {:?}, expected ({n}, {d})", v0.dim())));
        }
    }
    if n == 0 {
        return Ok(BlockRun { outputs: Array2::zeros((0, d)), v_first: Array2::zeros((0, d)) });
    }

    let eps = F::of(NORM_EPS);
    let mut elements: Vec<ElementSet<F>> = Vec::with_capacity(n);
    for t in 0..n {
        let xn = layer_norm(tokens.row(t), params.ln1_weight.view(), params.ln1_bias.view(), eps);
        let v0_row = v0.as_ref().map(|m| m.row(t));
        elements.push(project_elements(xn.view(), params, state, layer, v0_row)?);
    }

    let mut mixed = tokens.to_owned();
    match mode {
        Mode::Sequential => {
            for (t, e) in elements.iter().enumerate() {
                state.s = state_step(&state.s, e)?;
                let o = time_mix_output(e, &state.s, params)?;
                mixed.row_mut(t).scaled_add(F::one(), &o);
            }
        }
        Mode::Chunked { chunk_size } => {
            let mut start = 0;
            for chunk in elements.chunks(chunk_size) {
                let (states, s_out) = chunk_forward(&state.s, chunk)?;
                for (i, (e, s_t)) in chunk.iter().zip(&states).enumerate() {
                    let o = time_mix_output(e, s_t, params)?;
                    mixed.row_mut(start + i).scaled_add(F::one(), &o);
                }
                state.s = s_out;
                start += chunk.len();
            }
        }
    }

    let mut outputs = mixed.clone();
    for t in 0..n {
        let xn = layer_norm(mixed.row(t), params.ln2_weight.view(), params.ln2_bias.view(), eps);
        let c = channel_mix(xn.view(), params, state)?;
        outputs.row_mut(t).scaled_add(F::one(), &c);
    }

    let mut v_first = Array2::zeros((n, d));
    for (t, e) in elements.iter().enumerate() {
        v_first.row_mut(t).assign(&e.v_first);
    }
    Ok(BlockRun { outputs, v_first })
}

/// A stack of blocks sharing one recurrent stream; block 0 supplies the
/// value residual for every later block.
#[derive(Debug, Clone, PartialEq)]
pub struct RwkvStack<F> {
    pub blocks: Vec<RwkvBlockParams<F>>,
}

impl<F: Real> RwkvStack<F> {
    pub fn new(blocks: Vec<RwkvBlockParams<F>>) -> Result<Self> {
        let first = blocks.first().ok_or_else(|| LadyError::Config("a stack needs at least one block".into()))?;
        let d = first.d();
        if blocks.iter().any(|b| b.d() != d) {
            return Err(LadyError::Config("all blocks of a stack must share d".into()));
        }
        Ok(RwkvStack { blocks })
    }

    /// `n_layers` blocks seeded from `seed, seed + 1, ...`.
    pub fn random(config: BlockConfig, n_layers: usize, seed: u64) -> Result<Self> {
        let blocks = (0..n_layers as u64)
            .map(|i| RwkvBlockParams::random(config, seed.wrapping_add(i)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(blocks)
    }

    pub fn d(&self) -> usize {
        self.blocks[0].d()
    }

    pub fn n_layers(&self) -> usize {
        self.blocks.len()
    }

    pub fn configs(&self) -> Vec<BlockConfig> {
        self.blocks.iter().map(|b| b.config).collect()
    }

    pub fn new_state(&self) -> RecurrentState<F> {
        RecurrentState::new(&self.configs())
    }

    /// Runs every block over `tokens`, advancing `state`.
    pub fn forward(&self, tokens: ArrayView2<F>, state: &mut RecurrentState<F>, mode: Mode) -> Result<Array2<F>> {
        if state.layers.len() != self.blocks.len() {
            return Err(LadyError::Config(format!(
                "state has {} layers, stack has {}",
                state.layers.len(),
                self.blocks.len()
            )));
        }
        let mut x = tokens.to_owned();
        let mut v_first: Option<Array2<F>> = None;
        for (layer, (block, ls)) in self.blocks.iter().zip(state.layers.iter_mut()).enumerate() {
            let run = block_forward(x.view(), block, ls, layer, v_first.as_ref().map(|v| v.view()), mode)?;
            if layer == 0 {
                v_first = Some(run.v_first);
            }
            x = run.outputs;
        }
        state.tokens_consumed += tokens.nrows() as u64;
        Ok(x)
    }

    pub fn to_snapshot(&self) -> ParamSnapshot {
        ParamSnapshot { blocks: self.blocks.iter().map(|b| b.to_snapshot()).collect() }
    }

    pub fn from_snapshot(snap: &ParamSnapshot) -> Result<Self> {
        Self::new(snap.blocks.iter().map(RwkvBlockParams::from_snapshot).collect::<Result<_>>()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::max_abs_diff;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn tokens(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut rng))
    }

    #[test]
    fn empty_sequence_is_noop() {
        let stack = RwkvStack::<f64>::random(BlockConfig::new(8), 2, 1).unwrap();
        let mut st = stack.new_state();
        let out = stack.forward(Array2::zeros((0, 8)).view(), &mut st, Mode::Sequential).unwrap();
        assert_eq!(out.dim(), (0, 8));
        assert_eq!(st, stack.new_state());
    }

    #[test]
    fn zero_chunk_size_is_config_error() {
        let stack = RwkvStack::<f64>::random(BlockConfig::new(8), 1, 1).unwrap();
        let mut st = stack.new_state();
        let err = stack.forward(tokens(3, 8, 0).view(), &mut st, Mode::Chunked { chunk_size: 0 });
        assert!(matches!(err, Err(LadyError::Config(_))));
    }

    #[test]
    fn sequential_matches_chunked_on_32_tokens() {
        let stack = RwkvStack::<f64>::random(BlockConfig::new(16).with_heads(4), 2, 7).unwrap();
        let x = tokens(32, 16, 3);
        let mut a = stack.new_state();
        let mut b = stack.new_state();
        let ya = stack.forward(x.view(), &mut a, Mode::Sequential).unwrap();
        let yb = stack.forward(x.view(), &mut b, Mode::Chunked { chunk_size: 8 }).unwrap();
        assert!(max_abs_diff(ya.as_slice().unwrap(), yb.as_slice().unwrap()) <= 1e-10);
        for (la, lb) in a.layers.iter().zip(&b.layers) {
            assert!(max_abs_diff(la.s.as_slice().unwrap(), lb.s.as_slice().unwrap()) <= 1e-10);
            assert!(max_abs_diff(la.shift_tm.as_slice().unwrap(), lb.shift_tm.as_slice().unwrap()) <= 1e-10);
            assert!(max_abs_diff(la.shift_cm.as_slice().unwrap(), lb.shift_cm.as_slice().unwrap()) <= 1e-10);
        }
    }

    #[test]
    fn resume_matches_single_call() {
        let stack = RwkvStack::<f64>::random(BlockConfig::new(8), 2, 2).unwrap();
        let x = tokens(10, 8, 4);
        let mut whole = stack.new_state();
        let y = stack.forward(x.view(), &mut whole, Mode::Sequential).unwrap();
        let mut split = stack.new_state();
        let y1 = stack.forward(x.slice(ndarray::s![..5, ..]), &mut split, Mode::Sequential).unwrap();
        let y2 = stack.forward(x.slice(ndarray::s![5.., ..]), &mut split, Mode::Sequential).unwrap();
        assert_eq!(y.slice(ndarray::s![..5, ..]), y1);
        assert_eq!(y.slice(ndarray::s![5.., ..]), y2);
        assert_eq!(whole, split);
        assert_eq!(split.tokens_consumed, 10);
    }

    #[test]
    fn state_mismatch_is_config_error() {
        let stack = RwkvStack::<f64>::random(BlockConfig::new(8), 2, 2).unwrap();
        let other = RwkvStack::<f64>::random(BlockConfig::new(8).with_heads(2), 2, 2).unwrap();
        let mut st = other.new_state();
        assert!(matches!(
            stack.forward(tokens(2, 8, 0).view(), &mut st, Mode::Sequential),
            Err(LadyError::Config(_))
        ));
    }
}
