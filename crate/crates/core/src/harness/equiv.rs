//! Quick oracle-equivalence checks behind the `equiv` subcommand.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::synth::{gen_scene, gen_synthetic_frames};
use crate::decoder::{select_best, DecoderOutput, Trajectory};
use crate::error::Result;
use crate::fusion::{build_frame_sequence, fuse_parallel, FrameShape, FusionConfig, FusionModel, FusionSession};
use crate::lica::{Lica, QuerySet};
use crate::pdms::{self, oracle, pdms, PdmsWeights, SubScores, Thresholds};
use crate::rwkv7::{chunk_forward, decay_floor, project_elements, state_step, BlockConfig, ElementSet, LayerState, Mode, RwkvBlockParams};
use crate::tensor::{max_abs_diff, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn noise<F: Real>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<F> {
    Array2::from_shape_simple_fn((rows, cols), || F::of(StandardNormal.sample(rng)))
}

fn elements<F: Real>(cfg: BlockConfig, n: usize, seed: u64) -> Result<Vec<ElementSet<F>>> {
    let params = RwkvBlockParams::<F>::random(cfg, seed)?;
    let mut ls = LayerState::new(&cfg);
    let x = noise::<F>(n, cfg.d, &mut ChaCha8Rng::seed_from_u64(seed ^ 0xface));
    x.rows().into_iter().map(|row| project_elements(row, &params, &mut ls, 0, None)).collect()
}

fn chunk_error<F: Real>(cfg: BlockConfig, n: usize, seed: u64) -> Result<f64> {
    let el = elements::<F>(cfg, n, seed)?;
    let mut s = Array3::zeros((cfg.n_heads, cfg.head_dim(), cfg.head_dim()));
    let (states, _) = chunk_forward(&s, &el)?;
    let mut worst = 0.0f64;
    for (e, chunked) in el.iter().zip(&states) {
        s = state_step(&s, e)?;
        worst = worst.max(max_abs_diff(s.as_slice().unwrap(), chunked.as_slice().unwrap()));
    }
    Ok(worst)
}

fn chunk_vs_sequential(seed: u64) -> Result<Check> {
    let (mut e32, mut e64) = (0.0f64, 0.0f64);
    let mut case = seed;
    for d in [8, 16, 64] {
        for heads in [1, 4] {
            for b in [1, 4, 16] {
                case = case.wrapping_add(1);
                let cfg = BlockConfig::new(d).with_heads(heads);
                e32 = e32.max(chunk_error::<f32>(cfg, b, case)?);
                e64 = e64.max(chunk_error::<f64>(cfg, b, case)?);
            }
        }
    }
    Ok(Check { name: "chunk-vs-sequential", passed: e32 <= 1e-5 && e64 <= 1e-10, detail: format!("f32 {e32:.2e} f64 {e64:.2e}") })
}

fn small_fusion() -> FusionConfig {
    FusionConfig { shape: FrameShape { l_cam: 4, l_lidar: 4, d: 16 }, grid: (2, 2), n_layers: 2, n_heads: 2, chunk_size: 16 }
}

fn streaming(seed: u64) -> Result<Check> {
    let cfg = small_fusion();
    let model = FusionModel::<f32>::random(cfg, seed)?;
    let frames = gen_synthetic_frames::<f32>(10, seed, 0.05, cfg.shape)?;
    let seq = build_frame_sequence(&frames, model.pos_emb.view())?;
    let parallel = fuse_parallel(seq.view(), &model.stack, cfg.chunk_size)?;
    let mut session = model.new_session();
    let mut resumed = None;
    let mut last = None;
    for (i, f) in frames.iter().enumerate() {
        last = Some(session.step(&model, f)?);
        if i == 4 {
            resumed = Some(FusionSession::<f32>::from_snapshot(&session.to_snapshot()?)?);
        }
    }
    let last = last.expect("ten frames");
    let l = cfg.shape.tokens_per_frame();
    let tail = parallel.slice(ndarray::s![parallel.nrows() - l.., ..]).to_owned();
    let err = max_abs_diff(tail.as_slice().unwrap(), last.as_slice().unwrap());
    let mut resumed = resumed.expect("snapshot taken");
    let mut resumed_last = None;
    for f in &frames[5..] {
        resumed_last = Some(resumed.step(&model, f)?);
    }
    let bit_exact = resumed_last.as_ref() == Some(&last) && resumed == session;
    Ok(Check { name: "streaming-and-resume", passed: err <= 1e-5 && bit_exact, detail: format!("max err {err:.2e}, resume bit-exact {bit_exact}") })
}

fn constant_memory(seed: u64) -> Result<Check> {
    let cfg = small_fusion();
    let model = FusionModel::<f32>::random(cfg, seed)?;
    let frames = gen_synthetic_frames::<f32>(128, seed, 0.0, cfg.shape)?;
    let mut session = model.new_session();
    session.step(&model, &frames[0])?;
    let one = session.byte_size();
    for f in &frames[1..] {
        session.step(&model, f)?;
    }
    let many = session.byte_size();
    Ok(Check { name: "constant-memory", passed: one == many, detail: format!("T=1 {one} B, T=128 {many} B") })
}

fn pdms_formula() -> Check {
    let w = PdmsWeights::default();
    let partial_ep = pdms(&SubScores { nc: 1.0, dac: 1.0, ttc: 1.0, comfort: 1.0, ep: 0.875 }, &w);
    let nc0 = pdms(&SubScores { nc: 0.0, dac: 1.0, ttc: 1.0, comfort: 1.0, ep: 1.0 }, &w);
    let dac0 = pdms(&SubScores { nc: 1.0, dac: 0.0, ttc: 1.0, comfort: 1.0, ep: 1.0 }, &w);
    Check {
        name: "pdms-formula",
        passed: (100.0 * partial_ep - 94.8).abs() <= 0.05 && nc0 == 0.0 && dac0 == 0.0,
        detail: format!("ep=0.875 -> {:.3}", 100.0 * partial_ep),
    }
}

fn collision_oracle(seed: u64, scenes: u64) -> Result<Check> {
    let cfg = Thresholds::default();
    let mut agree = 0;
    for s in 0..scenes {
        let (scene, traj) = gen_scene(seed.wrapping_add(s), 8, 0.5)?;
        let nc = pdms::first_collision(&traj, &scene.agents, cfg.ego_half_extents).is_none();
        let ttc_ok = pdms::ttc_min_with(&traj, &scene.agents, cfg.ego_half_extents) >= cfg.ttc_min;
        let nc_ref = !oracle::collides_bruteforce(&traj, &scene.agents, cfg.ego_half_extents);
        let ttc_ref = !oracle::ttc_below_bruteforce(&traj, &scene.agents, cfg.ego_half_extents, cfg.ttc_min);
        agree += usize::from(nc == nc_ref && ttc_ok == ttc_ref);
    }
    Ok(Check { name: "nc-ttc-oracle", passed: agree as u64 == scenes, detail: format!("{agree}/{scenes} scenes agree") })
}

fn lica_causality(seed: u64, cases: u64) -> Result<Check> {
    let mut failures = 0;
    for c in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(c));
        let (l, m) = (rng.random_range(0..12), rng.random_range(2..8));
        let lica = Lica::<f64>::random(BlockConfig::new(8), 1, seed.wrapping_add(c))?;
        let feats = noise::<f64>(l, 8, &mut rng);
        let q = noise::<f64>(m, 8, &mut rng);
        let j = rng.random_range(1..m);
        let mut q2 = q.clone();
        q2.row_mut(j).mapv_inplace(|x| x + 1.0);
        let a = lica.attend(feats.view(), &QuerySet::new(q)?, Mode::Sequential)?;
        let b = lica.attend(feats.view(), &QuerySet::new(q2)?, Mode::Sequential)?;
        let ok = a.len() == m && (0..j).all(|i| a.tokens.row(i) == b.tokens.row(i)) && a.tokens.row(j) != b.tokens.row(j);
        failures += usize::from(!ok);
    }
    Ok(Check { name: "lica-causality", passed: failures == 0, detail: format!("{failures} of {cases} cases failed") })
}

fn select_best_property(seed: u64, vectors: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = Trajectory::new(0.5, vec![[0.0, 0.0, 0.0]])?;
    let mut failures = 0;
    for _ in 0..vectors {
        let n = rng.random_range(1..12);
        // Few distinct values so ties are common.
        let conf: Vec<f64> = (0..n).map(|_| rng.random_range(0..4) as f64).collect();
        let out = DecoderOutput { trajectories: vec![t.clone(); n], on_road: vec![0.5; n], on_route: vec![0.5; n], agent_futures: vec![], confidence: conf.clone() };
        let (_, idx) = select_best(&out)?;
        let max = conf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        failures += usize::from(conf.iter().position(|&c| c == max) != Some(idx));
    }
    Ok(Check { name: "select-best", passed: failures == 0, detail: format!("{failures} of {vectors} vectors failed") })
}

fn decay_range(seed: u64, samples: usize) -> Result<Check> {
    let cfg = BlockConfig::new(8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut n = 0;
    while n < samples {
        let params = RwkvBlockParams::<f64>::random(cfg, rng.random())?;
        let scale = 10f64.powf(rng.random_range(-2.0..2.0));
        let mut ls = LayerState::new(&cfg);
        for row in (noise::<f64>(64, 8, &mut rng) * scale).rows() {
            let e = project_elements(row, &params, &mut ls, 0, None)?;
            for &w in e.w.iter() {
                lo = lo.min(w);
                hi = hi.max(w);
            }
            n += 8;
        }
    }
    Ok(Check { name: "decay-range", passed: lo > decay_floor() && hi < 1.0, detail: format!("{n} components in [{lo:.6}, {hi:.6}]") })
}

/// Runs every check; the same seed always prints the same table.
pub fn run_equiv_suite(seed: u64) -> Result<Vec<Check>> {
    Ok(vec![
        chunk_vs_sequential(seed)?,
        streaming(seed)?,
        constant_memory(seed)?,
        pdms_formula(),
        collision_oracle(seed, 50)?,
        lica_causality(seed, 20)?,
        select_best_property(seed, 1000)?,
        decay_range(seed, 100_000)?,
    ])
}
