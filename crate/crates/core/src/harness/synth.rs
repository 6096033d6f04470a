//! Seeded generators for frames, trajectories and evaluation scenes.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::decoder::{wrap_angle, Trajectory};
use crate::error::{LadyError, Result};
use crate::fusion::{FrameShape, FrameTokens};
use crate::pdms::{Agent, SceneEval};
use crate::tensor::Real;

/// `T` frames of unit Gaussian tokens; frame `i` is shifted by `drift * i`.
pub fn gen_synthetic_frames<F: Real>(frames: usize, seed: u64, drift: f64, shape: FrameShape) -> Result<Vec<FrameTokens<F>>> {
    if frames == 0 {
        return Err(LadyError::Config("need at least one frame".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = |rows: usize, shift: f64| {
        Array2::from_shape_simple_fn((rows, shape.d), || {
            let z: f64 = StandardNormal.sample(&mut rng);
            F::of(z + shift)
        })
    };
    Ok((0..frames)
        .map(|i| {
            let shift = drift * i as f64;
            let camera = noise(shape.l_cam, shift);
            let lidar = noise(shape.l_lidar, shift);
            FrameTokens { t: i as i64, camera, lidar }
        })
        .collect())
}

/// Unicycle roll-out from the origin with constant speed and yaw rate.
pub fn unicycle(speed: f64, yaw_rate: f64, horizon: usize, dt: f64) -> Result<Trajectory> {
    let (mut x, mut y, mut h) = (0.0, 0.0, 0.0);
    let mut wps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        h += yaw_rate * dt;
        x += speed * dt * h.cos();
        y += speed * dt * h.sin();
        wps.push([x, y, wrap_angle(h)]);
    }
    Trajectory::new(dt, wps)
}

/// Driving-like trajectories for anchor clustering.
pub fn gen_trajectory_dataset(n: usize, seed: u64, horizon: usize, dt: f64) -> Result<Vec<Trajectory>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| unicycle(rng.random_range(0.0..15.0), rng.random_range(-0.4..0.4), horizon, dt)).collect()
}

/// Straight road along +x, 10 m wide, with a few constant-velocity agents
/// scattered around the ego path, plus a candidate ego trajectory.
pub fn gen_scene(seed: u64, horizon: usize, dt: f64) -> Result<(SceneEval, Trajectory)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let traj = unicycle(rng.random_range(0.0..12.0), rng.random_range(-0.15..0.15), horizon, dt)?;
    let n_agents = rng.random_range(0..=4);
    let agents = (0..n_agents)
        .map(|_| Agent {
            pose: [rng.random_range(-5.0..45.0), rng.random_range(-8.0..8.0), rng.random_range(-3.2..3.2)],
            velocity: [rng.random_range(-8.0..8.0), rng.random_range(-3.0..3.0)],
            half_extents: [rng.random_range(0.5..2.5), rng.random_range(0.4..1.1)],
        })
        .collect();
    let scene = SceneEval {
        agents,
        drivable: vec![[-20.0, -5.0], [80.0, -5.0], [80.0, 5.0], [-20.0, 5.0]],
        centerline: vec![[-20.0, 0.0], [80.0, 0.0]],
        reference_progress: 30.0,
    };
    scene.validate()?;
    Ok((scene, traj))
}
