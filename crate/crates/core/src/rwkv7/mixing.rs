use ndarray::{s, Array1, Array3, ArrayView1, Axis};

use super::elements::ElementSet;
use super::ops::lerp;
use super::params::{RwkvBlockParams, NORM_EPS};
use super::state::LayerState;
use crate::error::{dim_err, Result};
use crate::tensor::{check_finite, check_len, layer_norm, relu, Real};

/// Time-mix readout for one token given the state after that token:
/// per head `p = LN(r S^T) + (r . (rho * k~)) v`, then `o = (g * p) W_o`.
pub fn time_mix_output<F: Real>(e: &ElementSet<F>, s_t: &Array3<F>, params: &RwkvBlockParams<F>) -> Result<Array1<F>> {
    let d = params.d();
    let (n_heads, dh, _) = s_t.dim();
    if n_heads * dh != d || n_heads != params.n_heads() {
        return Err(dim_err(format!("state holds {n_heads} heads of {dh}, params expect d = {d}")));
    }
    check_len(e.r.view(), d, "receptance")?;
    let eps = F::of(NORM_EPS);
    let mut p = Array1::zeros(d);
    for h in 0..n_heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let r = e.r.slice(s![lo..hi]);
        let readout = s_t.index_axis(Axis(0), h).dot(&r);
        let normed = layer_norm(readout.view(), params.gn_weight.slice(s![lo..hi]), params.gn_bias.slice(s![lo..hi]), eps);
        let bonus = (&r * &params.rho.slice(s![lo..hi])).dot(&e.k_tilde.slice(s![lo..hi]));
        let mut ph = p.slice_mut(s![lo..hi]);
        ph.assign(&normed);
        ph.scaled_add(bonus, &e.v.slice(s![lo..hi]));
    }
    let out = (&e.g * &p).dot(&params.w_o);
    check_finite(out.iter(), "time-mix output")?;
    Ok(out)
}

/// Channel mixing `ReLU(lerp(x, x_prev, mu_k') W_k')^2 W_v'`; advances the
/// channel-mix token shift.
pub fn channel_mix<F: Real>(x: ArrayView1<F>, params: &RwkvBlockParams<F>, state: &mut LayerState<F>) -> Result<Array1<F>> {
    check_len(x, params.d(), "channel-mix input")?;
    let mixed = lerp(x, state.shift_cm.view(), params.mu_kp.view())?;
    let hidden = mixed.dot(&params.w_kp).mapv(|z| {
        let r = relu(z);
        r * r
    });
    state.shift_cm.assign(&x);
    Ok(hidden.dot(&params.w_vp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rwkv7::params::BlockConfig;
    use ndarray::{array, Array2};

    fn two_dim_params() -> RwkvBlockParams<f64> {
        let mut cfg = BlockConfig::new(2);
        cfg.ffn_dim = 3;
        let mut p = RwkvBlockParams::zeros(cfg).unwrap();
        p.w_o = array![[1.0, 2.0], [-1.0, 0.5]];
        p.rho = array![0.5, -1.0];
        p.gn_weight = array![2.0, 1.0];
        p.gn_bias = array![0.1, -0.2];
        p.mu_kp = array![0.25, 0.5];
        p.w_kp = array![[1.0, -2.0, 0.5], [0.5, 1.0, -1.0]];
        p.w_vp = array![[1.0, 0.0], [0.5, -1.0], [2.0, 1.0]];
        p
    }

    fn elements(r: Array1<f64>, g: Array1<f64>, kt: Array1<f64>, v: Array1<f64>) -> ElementSet<f64> {
        let z = Array1::zeros(2);
        ElementSet { r, w: z.clone(), k: z.clone(), kappa: z.clone(), k_tilde: kt, v: v.clone(), a: z.clone(), g, nu: z, v_first: v }
    }

    #[test]
    fn closed_gate_gives_zero() {
        let p = two_dim_params();
        let e = elements(array![1.0, 2.0], Array1::zeros(2), array![1.0, 1.0], array![3.0, 4.0]);
        let s = Array3::from_shape_vec((1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(time_mix_output(&e, &s, &p).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_state_and_rho_leave_norm_bias() {
        let mut p = two_dim_params();
        p.rho.fill(0.0);
        p.w_o = Array2::eye(2);
        let e = elements(array![1.0, 2.0], Array1::ones(2), array![1.0, 1.0], array![3.0, 4.0]);
        let out = time_mix_output(&e, &Array3::zeros((1, 2, 2)), &p).unwrap();
        assert_eq!(out, p.gn_bias);
    }

    #[test]
    fn hand_case_time_mix() {
        let p = two_dim_params();
        let r = array![1.0, 2.0];
        let g = array![0.5, 2.0];
        let kt = array![1.0, -1.0];
        let v = array![3.0, 4.0];
        let e = elements(r, g, kt, v);
        let s = Array3::from_shape_vec((1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        // r S^T = (1*1 + 2*2, 1*3 + 2*4) = (5, 11); mean 8, var 9
        let sd = (9.0f64 + 1e-5).sqrt();
        let ln = [2.0 * (-3.0 / sd) + 0.1, 1.0 * (3.0 / sd) - 0.2];
        // r . (rho * k~) = 1*0.5*1 + 2*(-1)*(-1) = 2.5
        let pv = [ln[0] + 2.5 * 3.0, ln[1] + 2.5 * 4.0];
        let gp = [0.5 * pv[0], 2.0 * pv[1]];
        let expected = [gp[0] * 1.0 + gp[1] * -1.0, gp[0] * 2.0 + gp[1] * 0.5];
        let out = time_mix_output(&e, &s, &p).unwrap();
        for i in 0..2 {
            assert!((out[i] - expected[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn channel_mix_zero_and_negative() {
        let p = two_dim_params();
        let mut st = LayerState::new(&p.config);
        assert!(channel_mix(Array1::zeros(2).view(), &p, &mut st).unwrap().iter().all(|&v| v == 0.0));

        let mut q = two_dim_params();
        q.w_kp.mapv_inplace(|v| -v.abs());
        let mut st = LayerState::new(&q.config);
        let out = channel_mix(array![1.0, 2.0].view(), &q, &mut st).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_case_channel_mix() {
        let p = two_dim_params();
        let mut st = LayerState::new(&p.config);
        st.shift_cm = array![2.0, -2.0];
        let x = array![1.0, 2.0];
        // lerp: (1 + (2-1)*0.25, 2 + (-2-2)*0.5) = (1.25, 0)
        // xk W_k' = (1.25, -2.5, 0.625) -> relu^2 = (1.5625, 0, 0.390625)
        // W_v': (1.5625 + 0.78125, 0.390625) = (2.34375, 0.390625)
        let out = channel_mix(x.view(), &p, &mut st).unwrap();
        assert!((out[0] - 2.34375).abs() < 1e-12);
        assert!((out[1] - 0.390625).abs() < 1e-12);
        assert_eq!(st.shift_cm, x);
    }
}
