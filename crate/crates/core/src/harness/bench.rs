//! Latency and memory scaling of streaming fusion against full-history
//! softmax attention.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::softmax::SoftmaxAttention;
use super::synth::gen_synthetic_frames;
use crate::error::{LadyError, Result};
use crate::fusion::{build_frame_sequence, FusionConfig, FusionModel};

/// Below this a single timed call is considered too coarse and calls are batched.
const MIN_MEASURABLE_S: f64 = 2e-4;
const MAX_BATCH: usize = 1 << 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchMode {
    Linear,
    Softmax,
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchMode::Linear => "linear",
            BenchMode::Softmax => "softmax",
        })
    }
}

impl FromStr for BenchMode {
    type Err = LadyError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(BenchMode::Linear),
            "softmax" => Ok(BenchMode::Softmax),
            other => Err(LadyError::Config(format!("unknown bench mode `{other}`"))),
        }
    }
}

/// One timed trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub frames: usize,
    pub mode: BenchMode,
    /// Median time to process the newest frame.
    pub latency_ms: f64,
    /// Peak persistent bytes carried between frames.
    pub state_bytes: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub frames_grid: Vec<usize>,
    pub modes: Vec<BenchMode>,
    pub trials: usize,
    /// Timed repetitions of the newest frame per trial.
    pub repeats: usize,
    pub fusion: FusionConfig,
    pub seed: u64,
    pub drift: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            frames_grid: vec![1, 2, 4, 8, 16, 32, 64, 128],
            modes: vec![BenchMode::Linear, BenchMode::Softmax],
            trials: 5,
            repeats: 3,
            fusion: FusionConfig::default(),
            seed: 0,
            drift: 0.01,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
    pub warnings: Vec<String>,
}

/// Median over trials with the spread, per `(frames, mode)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchSummary {
    pub frames: usize,
    pub mode: BenchMode,
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub state_bytes: usize,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Median seconds per call of `run`. Calls are batched when a single one is
/// too short to time reliably; the warning says so.
fn measure(repeats: usize, mut run: impl FnMut() -> Result<()>) -> Result<(f64, Option<String>)> {
    let mut batch = 1;
    let mut warning = None;
    loop {
        let mut times = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let start = Instant::now();
            for _ in 0..batch {
                run()?;
            }
            times.push(start.elapsed().as_secs_f64() / batch as f64);
        }
        let m = median(times);
        if m * batch as f64 >= MIN_MEASURABLE_S || batch >= MAX_BATCH {
            return Ok((m, warning));
        }
        batch *= 4;
        warning = Some(format!("timer too coarse for one call ({:.1} us); batching {batch} calls", m * 1e6));
    }
}

fn trial(model: &FusionModel<f32>, attention: &SoftmaxAttention<f32>, frames: usize, mode: BenchMode, cfg: &BenchConfig) -> Result<(BenchRecord, Option<String>)> {
    let start = Instant::now();
    let stream = gen_synthetic_frames::<f32>(frames, cfg.seed, cfg.drift, cfg.fusion.shape)?;
    let (newest, history) = stream.split_last().expect("at least one frame");
    let (latency, state_bytes, warning) = match mode {
        BenchMode::Linear => {
            let mut session = model.new_session();
            let mut peak = session.byte_size();
            for frame in history {
                session.step(model, frame)?;
                peak = peak.max(session.byte_size());
            }
            let (lat, warn) = measure(cfg.repeats, || {
                let mut s = session.clone();
                s.step(model, newest).map(|_| ())
            })?;
            session.step(model, newest)?;
            (lat, peak.max(session.byte_size()), warn)
        }
        BenchMode::Softmax => {
            // Every frame re-attends over the whole token history; the cache
            // holds keys and values for all of it.
            let tokens = build_frame_sequence(&stream, model.pos_emb.view())?;
            let (lat, warn) = measure(cfg.repeats, || attention.attend(tokens.view(), tokens.view()).map(|_| ()))?;
            (lat, 2 * tokens.len() * std::mem::size_of::<f32>(), warn)
        }
    };
    let record = BenchRecord { frames, mode, latency_ms: latency * 1e3, state_bytes, wall_ms: start.elapsed().as_secs_f64() * 1e3 };
    Ok((record, warning))
}

/// One warm-up trial per `(frames, mode)` is run and discarded; then
/// `cfg.trials` records follow, strictly sequentially.
pub fn run_scaling_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.frames_grid.is_empty() || cfg.frames_grid.contains(&0) || cfg.trials == 0 || cfg.repeats == 0 {
        return Err(LadyError::Config("bench needs positive frame counts, trials and repeats".into()));
    }
    cfg.fusion.validate()?;
    let model = FusionModel::<f32>::random(cfg.fusion, cfg.seed)?;
    let attention = SoftmaxAttention::<f32>::random(cfg.fusion.shape.d, cfg.seed.wrapping_add(1));
    let mut report = BenchReport::default();
    for &mode in &cfg.modes {
        for &frames in &cfg.frames_grid {
            trial(&model, &attention, frames, mode, cfg)?;
            let mut warned = false;
            for _ in 0..cfg.trials {
                let (rec, warn) = trial(&model, &attention, frames, mode, cfg)?;
                if let (Some(w), false) = (warn, warned) {
                    report.warnings.push(format!("{mode} T={frames}: {w}"));
                    warned = true;
                }
                report.records.push(rec);
            }
        }
    }
    Ok(report)
}

pub fn summarize(records: &[BenchRecord]) -> Vec<BenchSummary> {
    let mut keys: Vec<(BenchMode, usize)> = records.iter().map(|r| (r.mode, r.frames)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(mode, frames)| {
            let group: Vec<&BenchRecord> = records.iter().filter(|r| r.mode == mode && r.frames == frames).collect();
            let lat: Vec<f64> = group.iter().map(|r| r.latency_ms).collect();
            BenchSummary {
                frames,
                mode,
                min_ms: lat.iter().copied().fold(f64::INFINITY, f64::min),
                max_ms: lat.iter().copied().fold(0.0, f64::max),
                median_ms: median(lat),
                state_bytes: group.iter().map(|r| r.state_bytes).max().unwrap_or(0),
            }
        })
        .collect()
}

pub fn write_bench_csv(path: impl AsRef<Path>, records: &[BenchRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_bench_csv(path: impl AsRef<Path>) -> Result<Vec<BenchRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::FrameShape;

    fn small() -> BenchConfig {
        BenchConfig {
            frames_grid: vec![1, 3],
            trials: 2,
            repeats: 1,
            fusion: FusionConfig { shape: FrameShape { l_cam: 2, l_lidar: 4, d: 8 }, grid: (2, 2), n_layers: 1, n_heads: 1, chunk_size: 4 },
            ..BenchConfig::default()
        }
    }

    #[test]
    fn records_per_trial_and_constant_linear_state() {
        let report = run_scaling_bench(&small()).unwrap();
        assert_eq!(report.records.len(), 2 * 2 * 2);
        let linear: Vec<usize> = report.records.iter().filter(|r| r.mode == BenchMode::Linear).map(|r| r.state_bytes).collect();
        assert!(linear.iter().all(|&b| b == linear[0]));
        let soft = summarize(&report.records);
        let s1 = soft.iter().find(|s| s.mode == BenchMode::Softmax && s.frames == 1).unwrap();
        let s3 = soft.iter().find(|s| s.mode == BenchMode::Softmax && s.frames == 3).unwrap();
        assert_eq!(s3.state_bytes, 3 * s1.state_bytes);
        assert!(report.records.iter().all(|r| r.latency_ms > 0.0 && r.wall_ms > 0.0));
    }

    #[test]
    fn csv_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.csv");
        let recs = vec![BenchRecord { frames: 8, mode: BenchMode::Softmax, latency_ms: 1.5, state_bytes: 64, wall_ms: 3.0 }];
        write_bench_csv(&path, &recs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "frames,mode,latency_ms,state_bytes,wall_ms");
        assert_eq!(read_bench_csv(&path).unwrap(), recs);
    }

    #[test]
    fn bad_config_rejected() {
        let mut cfg = small();
        cfg.frames_grid = vec![0];
        assert!(run_scaling_bench(&cfg).is_err());
        assert!("quadratic".parse::<BenchMode>().is_err());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
