//! Scaled dot-product attention, the quadratic-cost baseline.

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_err, Result};
use crate::tensor::{uniform_matrix, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxAttention<F> {
    pub wq: Array2<F>,
    pub wk: Array2<F>,
    pub wv: Array2<F>,
}

impl<F: Real> SoftmaxAttention<F> {
    pub fn random(d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = 1.0 / (d as f64).sqrt();
        SoftmaxAttention {
            wq: uniform_matrix(&mut rng, d, d, s),
            wk: uniform_matrix(&mut rng, d, d, s),
            wv: uniform_matrix(&mut rng, d, d, s),
        }
    }

    pub fn d(&self) -> usize {
        self.wq.nrows()
    }

    /// `softmax(Q K^T / sqrt(d)) V` with `Q = q Wq`, `K = kv Wk`, `V = kv Wv`.
    pub fn attend(&self, q: ArrayView2<F>, kv: ArrayView2<F>) -> Result<Array2<F>> {
        let d = self.d();
        if q.ncols() != d || kv.ncols() != d {
            return Err(dim_err(format!("attention width {d}, got q {} and kv {}", q.ncols(), kv.ncols())));
        }
        if kv.nrows() == 0 {
            return Err(dim_err("attention over an empty key set"));
        }
        let qp = q.dot(&self.wq);
        let kp = kv.dot(&self.wk);
        let vp = kv.dot(&self.wv);
        let mut scores = qp.dot(&kp.t()) * F::of(1.0 / (d as f64).sqrt());
        for mut row in scores.axis_iter_mut(Axis(0)) {
            let m = row.fold(F::neg_infinity(), |a, &b| a.max(b));
            row.mapv_inplace(|x| (x - m).exp());
            let z = row.sum();
            row.mapv_inplace(|x| x / z);
        }
        Ok(scores.dot(&vp))
    }
}
