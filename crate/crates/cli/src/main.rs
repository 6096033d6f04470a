//! `lady` — equivalence checks, scaling benchmark, demo pipeline, scoring
//! and anchor clustering.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lady_core::decoder::{cluster_anchors, load_trajectories, DecodeOptions, Trajectory, DEFAULT_DT, DEFAULT_HORIZON};
use lady_core::harness::{
    gen_trajectory_dataset, run_demo, run_equiv_suite, run_scaling_bench, summarize, write_bench_csv, BenchConfig, BenchMode,
    DemoConfig,
};
use lady_core::pdms::{eval_subscores, write_report, PdmsWeights, SceneEval, ScoreRow, Thresholds};
use lady_core::{LadyError, Result};

/// Exit code when `equiv` ran but some check failed.
const EXIT_CHECK_FAILED: u8 = 13;

#[derive(Parser)]
#[command(name = "lady", version, about = "Linear-attention fusion and truncated-diffusion planning toolkit")]
struct Cli {
    /// Seed for every generator; `LADY_SEED` overrides the default.
    #[arg(long, global = true, env = "LADY_SEED", default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Linear,
    Softmax,
    Both,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the oracle-equivalence checks and print a pass/fail table.
    Equiv,
    /// Latency and memory versus number of frames.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64,128")]
        frames: Vec<usize>,
        #[arg(long, value_enum, default_value = "both")]
        mode: ModeArg,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value = "bench.csv")]
        out: PathBuf,
    },
    /// Synthetic frames -> fusion -> decode -> best trajectory.
    Demo {
        #[arg(long, default_value_t = 10)]
        frames: usize,
        #[arg(long, default_value = "traj.json")]
        out: PathBuf,
        /// Also write the synthetic scene for `score`.
        #[arg(long)]
        scene_out: Option<PathBuf>,
        /// Write the full decoder output (every mode with its scores).
        #[arg(long)]
        all_out: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        anchors: usize,
        /// Modes to decode (defaults to every anchor).
        #[arg(long)]
        modes: Option<usize>,
        #[arg(long, default_value_t = 2)]
        steps: usize,
        /// Re-inject seeded noise between denoising steps.
        #[arg(long)]
        stochastic: bool,
    },
    /// Score trajectories against a scene and write a CSV report.
    Score {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value = "report.csv")]
        out: PathBuf,
        /// EP, TTC and comfort weights.
        #[arg(long, value_delimiter = ',', num_args = 3, default_value = "5,5,2")]
        weights: Vec<f64>,
    },
    /// K-means anchors from a JSON array of trajectories.
    Cluster {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 100)]
        k: usize,
        /// Output file; prints to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic trajectory dataset for `cluster`.
    GenTrajs {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value = "trajs.json")]
        out: PathBuf,
    },
}

/// A single trajectory object or an array of them.
fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    match Trajectory::load(path) {
        Ok(t) => Ok(vec![t]),
        Err(LadyError::Json(_)) => load_trajectories(path),
        Err(e) => Err(e),
    }
}

fn run(cli: Cli) -> Result<u8> {
    let seed = cli.seed;
    match cli.command {
        Cmd::Equiv => {
            let checks = run_equiv_suite(seed)?;
            let mut failed = 0;
            for c in &checks {
                println!("{:<22} {:<4} {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
                failed += usize::from(!c.passed);
            }
            println!("{} passed, {failed} failed", checks.len() - failed);
            return Ok(if failed == 0 { 0 } else { EXIT_CHECK_FAILED });
        }
        Cmd::Bench { frames, mode, trials, repeats, out } => {
            let modes = match mode {
                ModeArg::Linear => vec![BenchMode::Linear],
                ModeArg::Softmax => vec![BenchMode::Softmax],
                ModeArg::Both => vec![BenchMode::Linear, BenchMode::Softmax],
            };
            let cfg = BenchConfig { frames_grid: frames, modes, trials, repeats, seed, ..BenchConfig::default() };
            let report = run_scaling_bench(&cfg)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            write_bench_csv(&out, &report.records)?;
            println!("{:<8} {:>6} {:>12} {:>12} {:>12} {:>12}", "mode", "frames", "median_ms", "min_ms", "max_ms", "state_bytes");
            for s in summarize(&report.records) {
                println!("{:<8} {:>6} {:>12.4} {:>12.4} {:>12.4} {:>12}", s.mode, s.frames, s.median_ms, s.min_ms, s.max_ms, s.state_bytes);
            }
            println!("wrote {}", out.display());
        }
        Cmd::Demo { frames, out, scene_out, all_out, anchors, modes, steps, stochastic } => {
            let cfg = DemoConfig {
                frames,
                seed,
                anchors,
                decode: DecodeOptions { steps, modes, stochastic, ..DecodeOptions::default() },
                ..DemoConfig::default()
            };
            let res = run_demo(&cfg)?;
            res.best.save(&out)?;
            if let Some(p) = scene_out {
                res.scene.save(p)?;
            }
            if let Some(p) = all_out {
                std::fs::write(p, serde_json::to_vec_pretty(&res.output)?)?;
            }
            let end = res.best.waypoints[res.best.len() - 1];
            println!(
                "best mode {} of {} (confidence {:.4}), final waypoint ({:.2}, {:.2}, {:.3})",
                res.best_index,
                res.output.trajectories.len(),
                res.output.confidence[res.best_index],
                end[0],
                end[1],
                end[2]
            );
            println!("wrote {}", out.display());
        }
        Cmd::Score { traj, scene, out, weights } => {
            let w = PdmsWeights::new(weights[0], weights[1], weights[2])?;
            let trajs = read_trajectories(&traj)?;
            let s = SceneEval::load(&scene)?;
            let name = scene.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let rows = trajs
                .iter()
                .enumerate()
                .map(|(i, t)| Ok(ScoreRow::new(name.clone(), i, &eval_subscores(t, &s, &Thresholds::default())?, &w)))
                .collect::<Result<Vec<_>>>()?;
            write_report(&out, &rows)?;
            for r in &rows {
                println!("trajectory {}: nc {} dac {} ttc {} comfort {} ep {:.3} -> pdms {:.4}", r.trajectory, r.nc, r.dac, r.ttc, r.comfort, r.ep, r.pdms);
            }
            println!("wrote {}", out.display());
        }
        Cmd::Cluster { data, k, out } => {
            let trajs = load_trajectories(&data)?;
            let anchors = cluster_anchors(&trajs, k, seed)?;
            match out {
                Some(p) => {
                    anchors.save(&p)?;
                    println!("{} anchors from {} trajectories -> {}", anchors.len(), trajs.len(), p.display());
                }
                None => println!("{}", serde_json::to_string_pretty(&anchors.anchors)?),
            }
        }
        Cmd::GenTrajs { n, out } => {
            let trajs = gen_trajectory_dataset(n, seed, DEFAULT_HORIZON, DEFAULT_DT)?;
            std::fs::write(&out, serde_json::to_vec_pretty(&trajs)?)?;
            println!("wrote {n} trajectories to {}", out.display());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
