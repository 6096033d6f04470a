use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bev::BevBundle;
use crate::error::{LadyError, Result};
use crate::tensor::Real;

/// Drop probabilities for feature state dropout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FsdConfig {
    pub p_bev: f64,
    pub p_ego: f64,
}

impl Default for FsdConfig {
    fn default() -> Self {
        FsdConfig { p_bev: 0.1, p_ego: 0.5 }
    }
}

/// Zeroes each BEV token with probability `p_bev` and the ego token with
/// probability `p_ego`, deterministically under `seed`. Training only.
pub fn feature_state_dropout<F: Real>(bundle: &BevBundle<F>, p_bev: f64, p_ego: f64, seed: u64) -> Result<BevBundle<F>> {
    for (name, p) in [("p_bev", p_bev), ("p_ego", p_ego)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(LadyError::Config(format!("{name} = {p} is not a probability")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = bundle.clone();
    for mut row in out.bev_tokens.rows_mut() {
        if rng.random_bool(p_bev) {
            row.fill(F::zero());
        }
    }
    if rng.random_bool(p_ego) {
        out.ego_token = Array1::zeros(out.ego_token.len());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn bundle(n: usize) -> BevBundle<f64> {
        BevBundle {
            bev_tokens: Array2::from_elem((n, 4), 1.0),
            ego_token: Array1::from_elem(4, 2.0),
            pos_emb: Array2::zeros((n + 1, 4)),
        }
    }

    #[test]
    fn zero_probability_is_identity() {
        let b = bundle(10);
        assert_eq!(feature_state_dropout(&b, 0.0, 0.0, 1).unwrap(), b);
    }

    #[test]
    fn full_probability_drops_everything() {
        let out = feature_state_dropout(&bundle(10), 1.0, 1.0, 1).unwrap();
        assert!(out.bev_tokens.iter().all(|&v| v == 0.0));
        assert!(out.ego_token.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_probability_is_config_error() {
        assert!(matches!(feature_state_dropout(&bundle(2), 1.5, 0.0, 1), Err(LadyError::Config(_))));
        assert!(feature_state_dropout(&bundle(2), 0.0, -0.1, 1).is_err());
    }

    /// Exact two-sided 99% acceptance region of Binomial(n, p).
    fn binomial_interval(n: u64, p: f64) -> (u64, u64) {
        let mut pmf = vec![0.0f64; n as usize + 1];
        let mut log_c = 0.0f64;
        for k in 0..=n {
            if k > 0 {
                log_c += ((n - k + 1) as f64).ln() - (k as f64).ln();
            }
            pmf[k as usize] = (log_c + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp();
        }
        let (mut lo, mut acc) = (0u64, 0.0);
        while acc + pmf[lo as usize] <= 0.005 {
            acc += pmf[lo as usize];
            lo += 1;
        }
        let (mut hi, mut acc) = (n, 0.0);
        while acc + pmf[hi as usize] <= 0.005 {
            acc += pmf[hi as usize];
            hi -= 1;
        }
        (lo, hi)
    }

    #[test]
    fn drop_count_is_binomial() {
        let out = feature_state_dropout(&bundle(100), 0.5, 0.0, 7).unwrap();
        let dropped = out.bev_tokens.rows().into_iter().filter(|r| r.iter().all(|&v| v == 0.0)).count() as u64;
        let (lo, hi) = binomial_interval(100, 0.5);
        assert_eq!((lo, hi), (37, 63));
        assert!(dropped >= lo && dropped <= hi, "dropped {dropped} outside [{lo}, {hi}]");
        assert_eq!(feature_state_dropout(&bundle(100), 0.5, 0.0, 7).unwrap(), out);
    }
}
