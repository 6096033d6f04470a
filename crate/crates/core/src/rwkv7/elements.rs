use ndarray::{Array1, ArrayView1};

use super::ops::{lerp, loramlp, Activation};
use super::params::RwkvBlockParams;
use super::state::LayerState;
use crate::error::{LadyError, Result};
use crate::tensor::{check_len, sigmoid, Real};

/// Per-token quantities driving the state update and the time-mix readout.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementSet<F> {
    /// Receptance.
    pub r: Array1<F>,
    /// Data-dependent decay, every component in `(exp(-exp(-0.5)), 1)`.
    pub w: Array1<F>,
    pub k: Array1<F>,
    /// Removal key `k * xi`.
    pub kappa: Array1<F>,
    /// Replacement key `k * lerp(1, a, alpha)`.
    pub k_tilde: Array1<F>,
    pub v: Array1<F>,
    /// In-context learning rate.
    pub a: Array1<F>,
    pub g: Array1<F>,
    /// Value-residual mixing rate.
    pub nu: Array1<F>,
    /// Layer-0 value of this token.
    pub v_first: Array1<F>,
}

/// `exp(-0.5)`, the scale inside the decay exponent.
pub fn decay_scale<F: Real>() -> F {
    F::of((-0.5f64).exp())
}

/// Projects one token into its [`ElementSet`] and advances the time-mix
/// token shift. `v0` must be given exactly when `layer >= 1`.
pub fn project_elements<F: Real>(
    x: ArrayView1<F>,
    params: &RwkvBlockParams<F>,
    state: &mut LayerState<F>,
    layer: usize,
    v0: Option<ArrayView1<F>>,
) -> Result<ElementSet<F>> {
    let d = params.d();
    check_len(x, d, "token")?;
    check_len(state.shift_tm.view(), d, "time-mix shift")?;
    match (layer, v0) {
        (0, Some(_)) => return Err(LadyError::Contract("layer 0 must not receive a layer-0 value".into())),
        (l, None) if l >= 1 => {
            return Err(LadyError::Contract(format!("layer {l} requires the layer-0 value")))
        }
        (_, Some(v0)) => check_len(v0, d, "layer-0 value")?,
        _ => {}
    }

    let prev = state.shift_tm.view();
    let xr = lerp(x, prev, params.mu_r.view())?;
    let xw = lerp(x, prev, params.mu_w.view())?;
    let xk = lerp(x, prev, params.mu_k.view())?;
    let xv = lerp(x, prev, params.mu_v.view())?;
    let xa = lerp(x, prev, params.mu_a.view())?;
    let xg = lerp(x, prev, params.mu_g.view())?;

    let r = xr.dot(&params.w_r);
    let scale = decay_scale::<F>();
    let w = loramlp(Activation::Tanh, xw.view(), &params.lora_w, true)?.mapv(|z| (-scale * sigmoid(z)).exp());
    let k = xk.dot(&params.w_k);
    let kappa = &k * &params.xi;
    let a = loramlp(Activation::Identity, xa.view(), &params.lora_a, true)?.mapv(sigmoid);
    let ones = Array1::ones(d);
    let k_tilde = &k * &lerp(ones.view(), a.view(), params.alpha.view())?;
    let nu = loramlp(Activation::Identity, xv.view(), &params.lora_v, true)?.mapv(sigmoid);
    let v_layer = xv.dot(&params.w_v);
    let (v, v_first) = match v0 {
        None => (v_layer.clone(), v_layer),
        Some(v0) => (lerp(v0, v_layer.view(), nu.view())?, v0.to_owned()),
    };
    let g = loramlp(Activation::Sigmoid, xg.view(), &params.lora_g, false)?;

    state.shift_tm.assign(&x);
    Ok(ElementSet { r, w, k, kappa, k_tilde, v, a, g, nu, v_first })
}
