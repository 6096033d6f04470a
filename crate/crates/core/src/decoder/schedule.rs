use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::trajectory::Trajectory;
use crate::error::{LadyError, Result};

/// Linear beta schedule parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub total_steps: usize,
    pub truncate_at: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig { total_steps: 1000, truncate_at: 50, beta_start: 1e-4, beta_end: 2e-2 }
    }
}

/// Truncated diffusion schedule. Cumulative products exist only up to
/// `truncate_at`; every lookup is range-checked and the largest index ever
/// requested is recorded.
#[derive(Debug)]
pub struct NoiseSchedule {
    config: ScheduleConfig,
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
    max_queried: AtomicUsize,
}

impl Clone for NoiseSchedule {
    fn clone(&self) -> Self {
        NoiseSchedule {
            config: self.config,
            betas: self.betas.clone(),
            alpha_bars: self.alpha_bars.clone(),
            max_queried: AtomicUsize::new(self.max_queried.load(Ordering::Relaxed)),
        }
    }
}

impl NoiseSchedule {
    pub fn new(config: ScheduleConfig) -> Result<Self> {
        let ScheduleConfig { total_steps, truncate_at, beta_start, beta_end } = config;
        if total_steps == 0 || truncate_at > total_steps {
            return Err(LadyError::Config(format!("truncate_at {truncate_at} outside [0, {total_steps}]")));
        }
        if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(LadyError::Config("betas must satisfy 0 < start <= end < 1".into()));
        }
        // betas[i] belongs to step i + 1.
        let betas: Vec<f64> = (0..total_steps)
            .map(|i| {
                let frac = if total_steps == 1 { 0.0 } else { i as f64 / (total_steps - 1) as f64 };
                beta_start + (beta_end - beta_start) * frac
            })
            .collect();
        let mut alpha_bars = Vec::with_capacity(truncate_at + 1);
        alpha_bars.push(1.0);
        for b in &betas[..truncate_at] {
            let prev = *alpha_bars.last().expect("seeded with 1");
            alpha_bars.push(prev * (1.0 - b));
        }
        Ok(NoiseSchedule { config, betas, alpha_bars, max_queried: AtomicUsize::new(0) })
    }

    pub fn config(&self) -> ScheduleConfig {
        self.config
    }

    pub fn truncate_at(&self) -> usize {
        self.config.truncate_at
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// `alpha_bar(0) = 1`; indices above `truncate_at` are rejected.
    pub fn alpha_bar(&self, step: usize) -> Result<f64> {
        if step > self.config.truncate_at {
            return Err(LadyError::Contract(format!(
                "step {step} exceeds the truncation point {}",
                self.config.truncate_at
            )));
        }
        self.max_queried.fetch_max(step, Ordering::Relaxed);
        Ok(self.alpha_bars[step])
    }

    /// Largest schedule index evaluated so far.
    pub fn max_queried(&self) -> usize {
        self.max_queried.load(Ordering::Relaxed)
    }
}

/// Forward diffusion of the anchor positions to `step`:
/// `x = sqrt(ab) x0 + sqrt(1 - ab) eps`. Headings are left as they are.
pub fn corrupt_anchors(anchors: &[Trajectory], sched: &NoiseSchedule, step: usize, seed: u64) -> Result<Vec<Trajectory>> {
    let ab = sched.alpha_bar(step)?;
    let (signal, noise) = (ab.sqrt(), (1.0 - ab).sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    anchors
        .iter()
        .map(|a| {
            let wps = a
                .waypoints
                .iter()
                .map(|w| {
                    let ex: f64 = StandardNormal.sample(&mut rng);
                    let ey: f64 = StandardNormal.sample(&mut rng);
                    [signal * w[0] + noise * ex, signal * w[1] + noise * ey, w[2]]
                })
                .collect();
            Trajectory::new(a.dt, wps)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anchor() -> Trajectory {
        Trajectory::new(0.5, (1..=8).map(|i| [2.0 * i as f64, 0.1 * i as f64, 0.05]).collect()).unwrap()
    }

    #[test]
    fn schedule_invariants() {
        let s = NoiseSchedule::new(ScheduleConfig::default()).unwrap();
        assert!(s.betas().windows(2).all(|w| w[0] <= w[1]));
        assert!(s.betas().iter().all(|&b| b > 0.0 && b < 1.0));
        let abs: Vec<f64> = (0..=50).map(|i| s.alpha_bar(i).unwrap()).collect();
        assert_eq!(abs[0], 1.0);
        assert!(abs.windows(2).all(|w| w[1] < w[0]));
        assert!(abs.iter().all(|&a| a > 0.0 && a <= 1.0));
    }

    #[test]
    fn step_zero_is_identity() {
        let s = NoiseSchedule::new(ScheduleConfig::default()).unwrap();
        let a = vec![anchor()];
        assert_eq!(corrupt_anchors(&a, &s, 0, 9).unwrap(), a);
    }

    #[test]
    fn truncation_boundary() {
        let s = NoiseSchedule::new(ScheduleConfig::default()).unwrap();
        let a = vec![anchor()];
        assert!(corrupt_anchors(&a, &s, 50, 1).is_ok());
        assert!(matches!(corrupt_anchors(&a, &s, 51, 1), Err(LadyError::Contract(_))));
        assert_eq!(s.max_queried(), 50);
    }

    #[test]
    fn monte_carlo_variance_matches_schedule() {
        let s = NoiseSchedule::new(ScheduleConfig::default()).unwrap();
        let a = vec![anchor()];
        let step = 50;
        let ab = s.alpha_bar(step).unwrap();
        let n = 10_000;
        let residuals: Vec<f64> = (0..n)
            .map(|seed| corrupt_anchors(&a, &s, step, seed).unwrap()[0].waypoints[3][0] - ab.sqrt() * a[0].waypoints[3][0])
            .collect();
        let mean = residuals.iter().sum::<f64>() / n as f64;
        let var = residuals.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1) as f64;
        assert!((var / (1.0 - ab) - 1.0).abs() < 0.05, "variance {var} vs {}", 1.0 - ab);
    }

    #[test]
    fn bad_configs() {
        let mut c = ScheduleConfig::default();
        c.truncate_at = 1001;
        assert!(NoiseSchedule::new(c).is_err());
        let mut c = ScheduleConfig::default();
        c.beta_end = 1.0;
        assert!(NoiseSchedule::new(c).is_err());
    }
}
