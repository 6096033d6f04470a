//! End-to-end pipeline on synthetic inputs: frames, streaming fusion, BEV
//! assembly, truncated-diffusion decoding and best-mode selection.

use ndarray::s;
use serde::{Deserialize, Serialize};

use super::synth::{gen_scene, gen_synthetic_frames, gen_trajectory_dataset};
use crate::decoder::{
    agent_queries, cluster_anchors, decode, select_best, DecodeOptions, DecoderConfig, DecoderOutput, DecoderParams,
    NoiseSchedule, ScheduleConfig, Trajectory,
};
use crate::error::Result;
use crate::fusion::{assemble_bev, Command, EgoStatus, FusionConfig, FusionModel};
use crate::pdms::SceneEval;
use crate::rwkv7::Mode;

#[derive(Debug, Clone, PartialEq)]
pub struct DemoConfig {
    pub frames: usize,
    pub seed: u64,
    pub fusion: FusionConfig,
    pub anchors: usize,
    /// Anchor clustering dataset size.
    pub dataset: usize,
    pub decode: DecodeOptions,
    pub ego: EgoStatus,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            frames: 10,
            seed: 42,
            fusion: FusionConfig::default(),
            anchors: 20,
            dataset: 400,
            decode: DecodeOptions::default(),
            ego: EgoStatus { velocity: 5.0, acceleration: 0.0, command: Command::Follow },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoResult {
    pub best: Trajectory,
    pub best_index: usize,
    pub output: DecoderOutput,
    /// Synthetic scene the plan can be scored against.
    pub scene: SceneEval,
}

pub fn run_demo(cfg: &DemoConfig) -> Result<DemoResult> {
    let fusion = FusionModel::<f32>::random(cfg.fusion, cfg.seed)?;
    let frames = gen_synthetic_frames::<f32>(cfg.frames, cfg.seed, 0.02, cfg.fusion.shape)?;
    let mut session = fusion.new_session();
    let mut last = None;
    for f in &frames {
        last = Some(session.step(&fusion, f)?);
    }
    let last = last.expect("at least one frame");
    let lidar = last.slice(s![cfg.fusion.shape.l_cam.., ..]);
    let bev = assemble_bev(lidar, &cfg.ego, &fusion.bev)?;

    let dec_cfg = DecoderConfig { d: cfg.fusion.shape.d, n_heads: cfg.fusion.n_heads, ..DecoderConfig::default() };
    let params = DecoderParams::<f32>::random(dec_cfg, cfg.seed.wrapping_add(1))?;
    let dataset = gen_trajectory_dataset(cfg.dataset, cfg.seed, dec_cfg.horizon, dec_cfg.dt)?;
    let anchors = cluster_anchors(&dataset, cfg.anchors, cfg.seed)?;
    let sched = NoiseSchedule::new(ScheduleConfig::default())?;
    let queries = agent_queries(&bev, &params, Mode::Sequential)?;
    let opts = DecodeOptions { seed: cfg.seed, ..cfg.decode };
    let output = decode(&anchors, &bev, &queries, &params, &sched, &opts)?;
    let (best, best_index) = select_best(&output)?;
    let (scene, _) = gen_scene(cfg.seed, dec_cfg.horizon, dec_cfg.dt)?;
    Ok(DemoResult { best, best_index, output, scene })
}
