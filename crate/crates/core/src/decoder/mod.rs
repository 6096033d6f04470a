//! Truncated-diffusion trajectory decoder.
//!
//! Anchors are corrupted only up to the truncation step and denoised in a
//! couple of deterministic steps. Each step runs the cascaded decoder layers,
//! which predict clean trajectories; confidence, mapping and prediction heads
//! read the final per-mode features.

mod anchors;
mod layer;
mod schedule;
mod trajectory;

pub use anchors::{cluster_anchors, MAX_KMEANS_ITERS};
pub use layer::{decoder_layer, step_embedding, DecoderLayerParams};
pub use schedule::{corrupt_anchors, NoiseSchedule, ScheduleConfig};
pub use trajectory::{load_trajectories, wrap_angle, AnchorSet, Trajectory, DEFAULT_DT, DEFAULT_HORIZON};

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, LadyError, Result};
use crate::fusion::BevBundle;
use crate::lica::{Lica, QuerySet};
use crate::rwkv7::{BlockConfig, Mode};
use crate::tensor::{sigmoid, uniform_matrix, uniform_vector, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub d: usize,
    pub n_heads: usize,
    pub horizon: usize,
    pub dt: f64,
    /// Cascaded layers per denoising step.
    pub n_layers: usize,
    /// Learnable agent queries.
    pub n_agents: usize,
    /// Blocks per LICA role.
    pub lica_depth: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig { d: 64, n_heads: 1, horizon: DEFAULT_HORIZON, dt: DEFAULT_DT, n_layers: 2, n_agents: 8, lica_depth: 1 }
    }
}

impl DecoderConfig {
    pub fn block_config(&self) -> BlockConfig {
        BlockConfig::new(self.d).with_heads(self.n_heads)
    }
}

/// Decoder layers, heads and the agent-query module.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams<F> {
    pub config: DecoderConfig,
    pub layers: Vec<DecoderLayerParams<F>>,
    pub query_tokens: Array2<F>,
    pub query_lica: Lica<F>,
    pub conf_w: Array1<F>,
    pub conf_b: F,
    /// Mapping head: columns are on-road and on-route logits.
    pub map_w: Array2<F>,
    pub map_b: Array1<F>,
    /// Prediction head: agent query to `N x (x, y)`.
    pub pred_w: Array2<F>,
    pub pred_b: Array1<F>,
}

impl<F: Real> DecoderParams<F> {
    pub fn random(config: DecoderConfig, seed: u64) -> Result<Self> {
        if config.n_layers == 0 || config.n_agents == 0 || config.horizon == 0 || config.lica_depth == 0 {
            return Err(LadyError::Config("decoder layers, agents, horizon and LICA depth must be positive".into()));
        }
        let block = config.block_config();
        block.validate()?;
        let d = config.d;
        let layers = (0..config.n_layers as u64)
            .map(|i| DecoderLayerParams::random(block, config.horizon, config.lica_depth, seed.wrapping_add(100 * (i + 1))))
            .collect::<Result<_>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = 1.0 / (d as f64).sqrt();
        Ok(DecoderParams {
            config,
            layers,
            query_tokens: uniform_matrix(&mut rng, config.n_agents, d, 1.0),
            query_lica: Lica::random(block, config.lica_depth, seed.wrapping_add(7))?,
            conf_w: uniform_vector(&mut rng, d, -s, s),
            conf_b: F::zero(),
            map_w: uniform_matrix(&mut rng, d, 2, s),
            map_b: uniform_vector(&mut rng, 2, -0.1, 0.1),
            pred_w: uniform_matrix(&mut rng, d, 2 * config.horizon, s),
            pred_b: uniform_vector(&mut rng, 2 * config.horizon, -0.1, 0.1),
        })
    }
}

/// Agent queries: the learnable queries cross-attended over the BEV bundle.
pub fn agent_queries<F: Real>(bev: &BevBundle<F>, params: &DecoderParams<F>, mode: Mode) -> Result<QuerySet<F>> {
    params.query_lica.attend(bev.tokens().view(), &QuerySet::new(params.query_tokens.clone())?, mode)
}

/// Everything the decoder emits for one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderOutput {
    pub trajectories: Vec<Trajectory>,
    pub confidence: Vec<f64>,
    pub on_road: Vec<f64>,
    pub on_route: Vec<f64>,
    /// Per agent query, `N` future positions.
    pub agent_futures: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeOptions {
    pub steps: usize,
    pub seed: u64,
    /// Number of output modes; `None` keeps every anchor.
    pub modes: Option<usize>,
    /// Re-inject seeded noise between denoising steps.
    pub stochastic: bool,
    pub mode: Mode,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions { steps: 2, seed: 0, modes: None, stochastic: false, mode: Mode::Sequential }
    }
}

/// Evenly spaced schedule indices `truncate_at = t_0 > t_1 > ... > t_steps = 0`.
pub fn denoise_timesteps(truncate_at: usize, steps: usize) -> Vec<usize> {
    (0..=steps).map(|i| ((truncate_at * (steps - i)) as f64 / steps as f64).round() as usize).collect()
}

fn run_layers<F: Real>(
    trajs: &[Trajectory],
    bev: &BevBundle<F>,
    agent_q: &QuerySet<F>,
    params: &DecoderParams<F>,
    step: usize,
    mode: Mode,
) -> Result<(Vec<Trajectory>, Array2<F>)> {
    let mut current = trajs.to_vec();
    let mut features = None;
    for layer in &params.layers {
        let (next, f) = decoder_layer(&current, bev, agent_q, layer, step, mode)?;
        current = next;
        features = Some(f);
    }
    Ok((current, features.expect("at least one layer")))
}

/// Corrupts the anchors at the truncation step, denoises in `opts.steps`
/// iterations of the cascaded layers and applies the output heads.
pub fn decode<F: Real>(
    anchors: &AnchorSet,
    bev: &BevBundle<F>,
    agent_q: &QuerySet<F>,
    params: &DecoderParams<F>,
    sched: &NoiseSchedule,
    opts: &DecodeOptions,
) -> Result<DecoderOutput> {
    if opts.steps < 1 {
        return Err(LadyError::Config("at least one denoising step is required".into()));
    }
    if anchors.horizon() != params.config.horizon {
        return Err(dim_err(format!("anchors have {} waypoints, decoder expects {}", anchors.horizon(), params.config.horizon)));
    }
    let k = anchors.len();
    let k_m = opts.modes.unwrap_or(k);
    if k_m == 0 || k_m > k {
        return Err(LadyError::Config(format!("{k_m} modes requested from {k} anchors")));
    }
    let selected: Vec<Trajectory> = (0..k_m).map(|i| anchors.anchors[i * k / k_m].clone()).collect();

    let t_start = sched.truncate_at();
    let mut x = corrupt_anchors(&selected, sched, t_start, opts.seed)?;
    let timesteps = denoise_timesteps(t_start, opts.steps);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(1));
    let mut features = None;
    for pair in timesteps.windows(2) {
        let (t, t_next) = (pair[0], pair[1]);
        let (x0, f) = run_layers(&x, bev, agent_q, params, t, opts.mode)?;
        features = Some(f);
        if t_next == 0 || t == 0 {
            x = x0;
            continue;
        }
        let ab_t = sched.alpha_bar(t)?;
        let ab_n = sched.alpha_bar(t_next)?;
        let sigma = if opts.stochastic { ((1.0 - ab_n) / (1.0 - ab_t) * (1.0 - ab_t / ab_n)).sqrt() } else { 0.0 };
        let dir = (1.0 - ab_n - sigma * sigma).max(0.0).sqrt();
        x = x
            .iter()
            .zip(&x0)
            .map(|(xt, x0)| {
                let wps = xt
                    .waypoints
                    .iter()
                    .zip(&x0.waypoints)
                    .map(|(a, b)| {
                        let mut w = *b;
                        for c in 0..2 {
                            let eps = (a[c] - ab_t.sqrt() * b[c]) / (1.0 - ab_t).sqrt();
                            let z: f64 = if opts.stochastic { StandardNormal.sample(&mut rng) } else { 0.0 };
                            w[c] = ab_n.sqrt() * b[c] + dir * eps + sigma * z;
                        }
                        w
                    })
                    .collect();
                Trajectory::new(xt.dt, wps)
            })
            .collect::<Result<_>>()?;
    }
    let features = features.expect("at least one step");

    let confidence: Vec<f64> = (features.dot(&params.conf_w) + params.conf_b).iter().map(|v| v.as_f64()).collect();
    let logits = features.dot(&params.map_w) + &params.map_b;
    let on_road = logits.column(0).iter().map(|&v| sigmoid(v).as_f64()).collect();
    let on_route = logits.column(1).iter().map(|&v| sigmoid(v).as_f64()).collect();
    let futures = agent_q.tokens.dot(&params.pred_w) + &params.pred_b;
    let agent_futures = futures
        .rows()
        .into_iter()
        .map(|r| r.to_vec().chunks(2).map(|c| [c[0].as_f64(), c[1].as_f64()]).collect())
        .collect();
    if confidence.iter().any(|c| !c.is_finite()) {
        return Err(LadyError::Numeric("non-finite confidence".into()));
    }
    Ok(DecoderOutput { trajectories: x, confidence, on_road, on_route, agent_futures })
}

/// Highest-confidence trajectory; ties go to the lowest index.
pub fn select_best(out: &DecoderOutput) -> Result<(Trajectory, usize)> {
    if out.trajectories.is_empty() || out.confidence.len() != out.trajectories.len() {
        return Err(LadyError::Contract("select_best needs at least one scored trajectory".into()));
    }
    let mut best = 0;
    for (i, &c) in out.confidence.iter().enumerate().skip(1) {
        if c > out.confidence[best] {
            best = i;
        }
    }
    Ok((out.trajectories[best].clone(), best))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn output(conf: Vec<f64>) -> DecoderOutput {
        let t = Trajectory::new(0.5, vec![[0.0, 0.0, 0.0]]).unwrap();
        DecoderOutput {
            trajectories: vec![t; conf.len()],
            on_road: vec![0.5; conf.len()],
            on_route: vec![0.5; conf.len()],
            agent_futures: vec![],
            confidence: conf,
        }
    }

    #[test]
    fn argmax_and_tie_break() {
        assert_eq!(select_best(&output(vec![0.2, 0.9, 0.5])).unwrap().1, 1);
        assert_eq!(select_best(&output(vec![0.5, 0.5])).unwrap().1, 0);
        assert!(matches!(select_best(&output(vec![])), Err(LadyError::Contract(_))));
    }

    #[test]
    fn timesteps_for_two_steps() {
        assert_eq!(denoise_timesteps(50, 2), vec![50, 25, 0]);
        assert_eq!(denoise_timesteps(50, 1), vec![50, 0]);
    }
}
