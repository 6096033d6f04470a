//! Scalar trait and the handful of dense helpers shared by every module.

use std::fmt::{Debug, Display};

use ndarray::{Array1, Array2, ArrayView1, NdFloat};
use num_traits::FromPrimitive;
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{dim_err, LadyError, Result};

/// Floating-point element type. Implemented for `f32` (benchmarks) and
/// `f64` (oracles, Jacobian checks).
pub trait Real:
    NdFloat + FromPrimitive + Default + Debug + Display + Serialize + DeserializeOwned
{
    /// Lossless-where-possible conversion from `f64`.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 conversion")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("f64 conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

pub fn relu<F: Real>(x: F) -> F {
    if x > F::zero() {
        x
    } else {
        F::zero()
    }
}

/// Layer normalization over the whole slice with an affine map.
pub fn layer_norm<F: Real>(
    x: ArrayView1<F>,
    gamma: ArrayView1<F>,
    beta: ArrayView1<F>,
    eps: F,
) -> Array1<F> {
    let n = F::of(x.len() as f64);
    let mean = x.sum() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).fold(F::zero(), |a, b| a + b) / n;
    let inv = F::one() / (var + eps).sqrt();
    let mut out = x.mapv(|v| (v - mean) * inv);
    out *= &gamma;
    out += &beta;
    out
}

pub(crate) fn check_len<F>(x: ArrayView1<F>, expected: usize, what: &str) -> Result<()> {
    if x.len() != expected {
        return Err(dim_err(format!("{what}: expected length {expected}, got {}", x.len())));
    }
    Ok(())
}

pub(crate) fn check_finite<'a, F: Real + 'a>(
    values: impl IntoIterator<Item = &'a F>,
    what: &str,
) -> Result<()> {
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(LadyError::Numeric(what.to_string()))
    }
}

/// Matrix with entries drawn uniformly from `[-scale, scale]`.
pub fn uniform_matrix<F: Real, R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Array2<F> {
    Array2::from_shape_simple_fn((rows, cols), || F::of(rng.random_range(-scale..=scale)))
}

pub fn uniform_vector<F: Real, R: Rng>(rng: &mut R, len: usize, lo: f64, hi: f64) -> Array1<F> {
    Array1::from_shape_simple_fn(len, || F::of(rng.random_range(lo..=hi)))
}

/// Element-wise cast between precisions.
pub fn cast_matrix<F: Real, G: Real>(m: &Array2<F>) -> Array2<G> {
    m.mapv(|v| G::of(v.as_f64()))
}

pub fn cast_vector<F: Real, G: Real>(v: &Array1<F>) -> Array1<G> {
    v.mapv(|x| G::of(x.as_f64()))
}

/// Largest absolute element-wise difference; `inf` on shape mismatch.
pub fn max_abs_diff<F: Real>(a: &[F], b: &[F]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.as_f64() - y.as_f64()).abs())
        .fold(0.0, f64::max)
}
