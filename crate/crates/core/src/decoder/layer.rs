use ndarray::{Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::trajectory::Trajectory;
use crate::error::{dim_err, Result};
use crate::fusion::BevBundle;
use crate::lica::{Lica, QuerySet};
use crate::rwkv7::{BlockConfig, Mode};
use crate::tensor::{relu, uniform_matrix, uniform_vector, Real};

/// Sinusoidal embedding of a diffusion step.
pub fn step_embedding<F: Real>(step: usize, d: usize) -> Array1<F> {
    let half = (d / 2).max(1);
    Array1::from_shape_fn(d, |i| {
        let freq = (-(10_000f64.ln()) * (i % half) as f64 / half as f64).exp();
        let arg = step as f64 * freq;
        F::of(if i < half { arg.sin() } else { arg.cos() })
    })
}

/// One cascaded decoder layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayerParams<F> {
    pub horizon: usize,
    /// Trajectory embedding, `3N x d`.
    pub embed_w: Array2<F>,
    pub embed_b: Array1<F>,
    pub bev_lica: Lica<F>,
    pub agent_lica: Lica<F>,
    pub ffn_w1: Array2<F>,
    pub ffn_b1: Array1<F>,
    pub ffn_w2: Array2<F>,
    pub ffn_b2: Array1<F>,
    /// Projection back to waypoint deltas, `d x 3N`.
    pub out_w: Array2<F>,
    pub out_b: Array1<F>,
}

impl<F: Real> DecoderLayerParams<F> {
    pub fn random(block: BlockConfig, horizon: usize, lica_depth: usize, seed: u64) -> Result<Self> {
        let d = block.d;
        let n3 = 3 * horizon;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden = 2 * d;
        Ok(DecoderLayerParams {
            horizon,
            embed_w: uniform_matrix(&mut rng, n3, d, 1.0 / (n3 as f64 * 10.0).sqrt()),
            embed_b: uniform_vector(&mut rng, d, -0.1, 0.1),
            bev_lica: Lica::random(block, lica_depth, seed.wrapping_add(1))?,
            agent_lica: Lica::random(block, lica_depth, seed.wrapping_add(2))?,
            ffn_w1: uniform_matrix(&mut rng, d, hidden, 1.0 / (d as f64).sqrt()),
            ffn_b1: uniform_vector(&mut rng, hidden, -0.1, 0.1),
            ffn_w2: uniform_matrix(&mut rng, hidden, d, 1.0 / (hidden as f64).sqrt()),
            ffn_b2: uniform_vector(&mut rng, d, -0.1, 0.1),
            out_w: uniform_matrix(&mut rng, d, n3, 0.05 / (d as f64).sqrt()),
            out_b: Array1::zeros(n3),
        })
    }

    pub fn d(&self) -> usize {
        self.embed_b.len()
    }

    /// Embeds trajectories as `K x d` tokens conditioned on `step`.
    pub fn embed(&self, trajs: &[Trajectory], step: usize) -> Result<Array2<F>> {
        let n3 = 3 * self.horizon;
        let mut flat = Array2::zeros((trajs.len(), n3));
        for (i, t) in trajs.iter().enumerate() {
            if t.len() != self.horizon {
                return Err(dim_err(format!("trajectory has {} waypoints, layer expects {}", t.len(), self.horizon)));
            }
            flat.row_mut(i).iter_mut().zip(t.flatten()).for_each(|(d, v)| *d = F::of(v));
        }
        let step_emb = step_embedding::<F>(step, self.d());
        Ok(flat.dot(&self.embed_w) + &self.embed_b + &step_emb)
    }

    /// Residual feed-forward `t + relu(t W1 + b1) W2 + b2`.
    pub fn feed_forward(&self, t: ArrayView2<F>) -> Array2<F> {
        let h = (t.dot(&self.ffn_w1) + &self.ffn_b1).mapv(relu);
        &t + &(h.dot(&self.ffn_w2) + &self.ffn_b2)
    }

    /// Adds the projected deltas to `trajs`; headings are re-wrapped.
    pub fn apply_deltas(&self, trajs: &[Trajectory], features: ArrayView2<F>) -> Result<Vec<Trajectory>> {
        let deltas = features.dot(&self.out_w) + &self.out_b;
        trajs
            .iter()
            .zip(deltas.rows())
            .map(|(t, d)| {
                let flat: Vec<f64> = t.flatten().iter().zip(d.iter()).map(|(v, dv)| v + dv.as_f64()).collect();
                Trajectory::from_flat(t.dt, &flat)
            })
            .collect()
    }
}

/// One refinement pass: LICA against the BEV bundle, LICA against the agent
/// queries, a residual feed-forward and a projection to waypoint deltas.
/// Returns the refined trajectories and the `K x d` per-mode features.
pub fn decoder_layer<F: Real>(
    noisy: &[Trajectory],
    bev: &BevBundle<F>,
    agent_q: &QuerySet<F>,
    params: &DecoderLayerParams<F>,
    step: usize,
    mode: Mode,
) -> Result<(Vec<Trajectory>, Array2<F>)> {
    let d = params.d();
    if bev.ego_token.len() != d || agent_q.d() != d {
        return Err(dim_err(format!("decoder width {d} vs bev {} / agents {}", bev.ego_token.len(), agent_q.d())));
    }
    let tokens = params.embed(noisy, step)?;
    let queries = QuerySet::new(tokens)?;
    let from_bev = params.bev_lica.attend(bev.tokens().view(), &queries, mode)?;
    let t1 = &queries.tokens + &from_bev.tokens;
    let from_agents = params.agent_lica.attend(agent_q.tokens.view(), &QuerySet::new(t1.clone())?, mode)?;
    let t2 = &t1 + &from_agents.tokens;
    let features = params.feed_forward(t2.view());
    let refined = params.apply_deltas(noisy, features.view())?;
    Ok((refined, features))
}
