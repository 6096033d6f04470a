use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, LadyError, Result};
use crate::tensor::{sigmoid, Real};

/// Token-shift interpolation `a + (b - a) * mu`.
pub fn lerp<F: Real>(a: ArrayView1<F>, b: ArrayView1<F>, mu: ArrayView1<F>) -> Result<Array1<F>> {
    if a.len() != b.len() || a.len() != mu.len() {
        return Err(dim_err(format!(
            "lerp operands have lengths {}, {}, {}",
            a.len(),
            b.len(),
            mu.len()
        )));
    }
    Ok(ndarray::Zip::from(&a)
        .and(&b)
        .and(&mu)
        .map_collect(|&a, &b, &m| a + (b - a) * m))
}

/// Nonlinearity applied between the two low-rank factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply<F: Real>(self, x: F) -> F {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }
}

impl FromStr for Activation {
    type Err = LadyError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "none" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(LadyError::Config(format!("unknown activation '{other}'"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        };
        f.write_str(s)
    }
}

/// Low-rank factors `A: d x rank`, `B: rank x d` and bias `lambda: d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lora<F> {
    pub a: Array2<F>,
    pub b: Array2<F>,
    pub lambda: Array1<F>,
}

impl<F: Real> Lora<F> {
    pub fn zeros(d: usize, rank: usize) -> Self {
        Lora {
            a: Array2::zeros((d, rank)),
            b: Array2::zeros((rank, d)),
            lambda: Array1::zeros(d),
        }
    }

    pub fn rank(&self) -> usize {
        self.a.ncols()
    }
}

/// Low-rank MLP `f(x A) B (+ lambda)`.
pub fn loramlp<F: Real>(f: Activation, x: ArrayView1<F>, lora: &Lora<F>, bias: bool) -> Result<Array1<F>> {
    let (d_in, rank) = lora.a.dim();
    let (rank_b, d_out) = lora.b.dim();
    if x.len() != d_in || rank != rank_b || (bias && lora.lambda.len() != d_out) {
        return Err(dim_err(format!(
            "loramlp shapes do not chain: x[{}] A[{d_in}x{rank}] B[{rank_b}x{d_out}] lambda[{}]",
            x.len(),
            lora.lambda.len()
        )));
    }
    let hidden = x.dot(&lora.a).mapv(|v| f.apply(v));
    let mut out = hidden.dot(&lora.b);
    if bias {
        out += &lora.lambda;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn lerp_midpoint_and_endpoints() {
        let a = array![1.0f64, 2.0];
        let b = array![3.0, 4.0];
        let half = array![0.5, 0.5];
        assert_eq!(lerp(a.view(), b.view(), half.view()).unwrap(), array![2.0, 3.0]);
        let zero = Array1::zeros(2);
        let one = Array1::ones(2);
        assert_eq!(lerp(a.view(), b.view(), zero.view()).unwrap(), a);
        assert_eq!(lerp(a.view(), b.view(), one.view()).unwrap(), b);
    }

    #[test]
    fn lerp_rejects_length_mismatch() {
        let a = array![1.0f64, 2.0];
        let b = array![3.0];
        let mu = array![0.5, 0.5];
        assert!(matches!(lerp(a.view(), b.view(), mu.view()), Err(LadyError::Dimension(_))));
    }

    #[test]
    fn loramlp_zero_input_gives_bias() {
        let mut lora = Lora::<f64>::zeros(3, 2);
        lora.a.fill(0.7);
        lora.b.fill(-1.3);
        lora.lambda = array![0.1, 0.2, 0.3];
        let x = Array1::zeros(3);
        let out = loramlp(Activation::Identity, x.view(), &lora, true).unwrap();
        assert_eq!(out, lora.lambda);
    }

    #[test]
    fn loramlp_tanh_zero_is_zero() {
        let mut lora = Lora::<f64>::zeros(4, 1);
        lora.a.fill(2.0);
        lora.b.fill(3.0);
        let x = Array1::zeros(4);
        let out = loramlp(Activation::Tanh, x.view(), &lora, true).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn loramlp_sigmoid_scalar() {
        // d = rank = 1 with unit factors reduces to sigmoid(x).
        let mut lora = Lora::<f64>::zeros(1, 1);
        lora.a[[0, 0]] = 1.0;
        lora.b[[0, 0]] = 1.0;
        for x in [-3.0, -0.5, 0.0, 0.25, 4.0] {
            let out = loramlp(Activation::Sigmoid, array![x].view(), &lora, false).unwrap();
            let expected = 1.0 / (1.0 + (-x as f64).exp());
            assert!((out[0] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn unknown_activation_is_config_error() {
        assert!(matches!("gelu".parse::<Activation>(), Err(LadyError::Config(_))));
        assert_eq!("Tanh".parse::<Activation>().unwrap(), Activation::Tanh);
    }

    #[test]
    fn loramlp_rejects_broken_chain() {
        let lora = Lora::<f64>::zeros(3, 2);
        let x = Array1::zeros(4);
        assert!(loramlp(Activation::Identity, x.view(), &lora, true).is_err());
    }
}
