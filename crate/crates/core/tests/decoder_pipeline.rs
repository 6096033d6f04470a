use lady_core::decoder::{
    agent_queries, cluster_anchors, corrupt_anchors, decode, select_best, AnchorSet, DecodeOptions, DecoderConfig,
    DecoderParams, NoiseSchedule, ScheduleConfig,
};
use lady_core::fusion::{BevBundle, BevParams, Command, EgoStatus, assemble_bev};
use lady_core::harness::gen_trajectory_dataset;
use lady_core::rwkv7::Mode;
use lady_core::LadyError;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const D: usize = 16;

fn bev(seed: u64) -> BevBundle<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lidar = Array2::from_shape_simple_fn((4, D), || StandardNormal.sample(&mut rng));
    let params = BevParams::random((2, 2), D, seed).unwrap();
    assemble_bev(lidar.view(), &EgoStatus::new(4.0, 0.3, Command::TurnLeft).unwrap(), &params).unwrap()
}

fn setup(k: usize) -> (AnchorSet, BevBundle<f64>, DecoderParams<f64>) {
    let data = gen_trajectory_dataset(200, 5, 8, 0.5).unwrap();
    let anchors = cluster_anchors(&data, k, 5).unwrap();
    let cfg = DecoderConfig { d: D, ..DecoderConfig::default() };
    (anchors, bev(1), DecoderParams::random(cfg, 9).unwrap())
}

#[test]
fn emits_modes_by_eight_waypoints_with_probabilities() {
    let (anchors, bev, params) = setup(12);
    let sched = NoiseSchedule::new(ScheduleConfig::default()).unwrap();
    let q = agent_queries(&bev, &params, Mode::Sequential).unwrap();
    assert_eq!(q.len(), 8);
    for modes in [None, Some(4), Some(1)] {
        let out = decode(&anchors, &bev, &q, &params, &sched, &DecodeOptions { modes, ..Default::default() }).unwrap();
        let k_m = modes.unwrap_or(12);
        assert_eq!(out.trajectories.len(), k_m);
        assert!(out.trajectories.iter().all(|t| t.len() == 8 && t.dt == 0.5));
        assert_eq!(out.confidence.len(), k_m);
        assert!(out.on_road.iter().chain(&out.on_route).all(|p| (0.0..=1.0).contains(p)));
        assert_eq!(out.agent_futures.len(), 8);
        assert!(out.agent_futures.iter().all(|f| f.len() == 8));
    }
    assert!(sched.max_queried() <= 50);
}

#[test]
fn deterministic_by_default_and_seeded_when_stochastic() {
    let (anchors, bev, params) = setup(6);
    let sched = NoiseSchedule::new(ScheduleConfig::default()).unwrap();
    let q = agent_queries(&bev, &params, Mode::Sequential).unwrap();
    let opts = DecodeOptions { seed: 3, ..Default::default() };
    let a = decode(&anchors, &bev, &q, &params, &sched, &opts).unwrap();
    assert_eq!(a, decode(&anchors, &bev, &q, &params, &sched, &opts).unwrap());
    let sto = DecodeOptions { stochastic: true, ..opts };
    let b = decode(&anchors, &bev, &q, &params, &sched, &sto).unwrap();
    assert_eq!(b, decode(&anchors, &bev, &q, &params, &sched, &sto).unwrap());
    assert_ne!(a.trajectories, b.trajectories);
}

#[test]
fn chunked_and_sequential_decoding_agree() {
    let (anchors, bev, params) = setup(5);
    let sched = NoiseSchedule::new(ScheduleConfig::default()).unwrap();
    let q = agent_queries(&bev, &params, Mode::Sequential).unwrap();
    let a = decode(&anchors, &bev, &q, &params, &sched, &DecodeOptions::default()).unwrap();
    let b = decode(&anchors, &bev, &q, &params, &sched, &DecodeOptions { mode: Mode::Chunked { chunk_size: 4 }, ..Default::default() }).unwrap();
    for (x, y) in a.confidence.iter().zip(&b.confidence) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn contract_errors() {
    let (anchors, bev, params) = setup(4);
    let sched = NoiseSchedule::new(ScheduleConfig::default()).unwrap();
    let q = agent_queries(&bev, &params, Mode::Sequential).unwrap();
    let zero_steps = DecodeOptions { steps: 0, ..Default::default() };
    assert!(matches!(decode(&anchors, &bev, &q, &params, &sched, &zero_steps), Err(LadyError::Config(_))));
    let too_many = DecodeOptions { modes: Some(5), ..Default::default() };
    assert!(decode(&anchors, &bev, &q, &params, &sched, &too_many).is_err());
    assert!(matches!(corrupt_anchors(&anchors.anchors, &sched, 51, 0), Err(LadyError::Contract(_))));
    assert_eq!(corrupt_anchors(&anchors.anchors, &sched, 0, 0).unwrap(), anchors.anchors);
}

#[test]
fn best_mode_is_invariant_to_monotone_rescoring() {
    let (anchors, bev, params) = setup(8);
    let sched = NoiseSchedule::new(ScheduleConfig::default()).unwrap();
    let q = agent_queries(&bev, &params, Mode::Sequential).unwrap();
    let mut out = decode(&anchors, &bev, &q, &params, &sched, &DecodeOptions::default()).unwrap();
    let (best, idx) = select_best(&out).unwrap();
    out.confidence.iter_mut().for_each(|c| *c = (3.0 * *c).exp() + 1.0);
    let (best2, idx2) = select_best(&out).unwrap();
    assert_eq!((idx, best), (idx2, best2));
}
