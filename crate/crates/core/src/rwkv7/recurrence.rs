//! Delta-rule state recurrence.
//!
//! The sequential form applies, per head,
//!
//! ```text
//! S_t = S_{t-1} (diag(w_t) - khat_t^T (a_t * khat_t)) + v_t^T k~_t,   khat = kappa / |kappa|
//! ```
//!
//! The chunked form evaluates `B` steps at once. Writing `h_s = S_{s-1} khat_s^T`
//! and `b_s = u_s * kappa_s = a_s * khat_s`, the unrolled recurrence is
//!
//! ```text
//! S_t = S_in diag(D[t,0]) + sum_{s<=t} v_s^T (k~_s * G(t,s)) - h_s^T (b_s * G(t,s))
//! ```
//!
//! with `D` the causal decay matrix and `G(t,s) = prod_{m=s+1..t} w_m`. The
//! unknown `h` solve a unit lower-triangular system `(I + Q) H = S_in-term + P V`
//! by forward substitution, after which every state of the chunk is a pair of
//! small matrix products.

use ndarray::{s, Array1, Array2, Array3, ArrayView1, Axis};

use super::elements::ElementSet;
use crate::error::{dim_err, LadyError, Result};
use crate::tensor::{check_finite, Real};

/// Added to `|kappa|` before dividing; zero keys then give a zero removal direction.
pub const KAPPA_EPS: f64 = 1e-12;

fn inv_head_norms<F: Real>(kappa: ArrayView1<F>, n_heads: usize) -> Vec<F> {
    let dh = kappa.len() / n_heads;
    let eps = F::of(KAPPA_EPS);
    (0..n_heads)
        .map(|h| {
            let seg = kappa.slice(s![h * dh..(h + 1) * dh]);
            F::one() / (seg.dot(&seg).sqrt() + eps)
        })
        .collect()
}

fn check_element_dims<F: Real>(e: &ElementSet<F>, d: usize) -> Result<()> {
    for (name, v) in [("w", &e.w), ("kappa", &e.kappa), ("k_tilde", &e.k_tilde), ("v", &e.v), ("a", &e.a)] {
        if v.len() != d {
            return Err(dim_err(format!("element {name} has length {}, state expects {d}", v.len())));
        }
    }
    Ok(())
}

fn check_element_finite<F: Real>(e: &ElementSet<F>) -> Result<()> {
    check_finite(
        e.w.iter().chain(&e.kappa).chain(&e.k_tilde).chain(&e.v).chain(&e.a),
        "element set",
    )
}

/// One step of the sequential recurrence for every head of `s_prev`.
pub fn state_step<F: Real>(s_prev: &Array3<F>, e: &ElementSet<F>) -> Result<Array3<F>> {
    let (n_heads, dh, dh2) = s_prev.dim();
    if dh != dh2 {
        return Err(dim_err("per-head state must be square"));
    }
    check_element_dims(e, n_heads * dh)?;
    check_element_finite(e)?;
    check_finite(s_prev.iter(), "incoming state")?;

    let inv = inv_head_norms(e.kappa.view(), n_heads);
    let mut out = Array3::zeros(s_prev.raw_dim());
    for h in 0..n_heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let khat = e.kappa.slice(s![lo..hi]).mapv(|x| x * inv[h]);
        let removal = &e.a.slice(s![lo..hi]) * &khat;
        let w = e.w.slice(s![lo..hi]);
        let v = e.v.slice(s![lo..hi]);
        let kt = e.k_tilde.slice(s![lo..hi]);
        let sp = s_prev.index_axis(Axis(0), h);
        let hk = sp.dot(&khat);
        let mut so = out.index_axis_mut(Axis(0), h);
        for i in 0..dh {
            for j in 0..dh {
                so[[i, j]] = sp[[i, j]] * w[j] - hk[i] * removal[j] + v[i] * kt[j];
            }
        }
    }
    Ok(out)
}

/// Causal decay tensor `D[i, j, c] = prod_{m=j..i} w_m[c]` for `j <= i`, zero above.
pub fn decay_matrix<F: Real>(ws: &[Array1<F>]) -> Result<Array3<F>> {
    let b = ws.len();
    if b == 0 {
        return Err(dim_err("decay matrix needs at least one step"));
    }
    let d = ws[0].len();
    if ws.iter().any(|w| w.len() != d) {
        return Err(dim_err("decay vectors differ in length"));
    }
    let mut delta = Array3::zeros((b, b, d));
    for i in 0..b {
        delta.slice_mut(s![i, i, ..]).assign(&ws[i]);
        for j in (0..i).rev() {
            let next = &delta.slice(s![i, j + 1, ..]) * &ws[j];
            delta.slice_mut(s![i, j, ..]).assign(&next);
        }
    }
    Ok(delta)
}

/// Stacked per-chunk quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkMatrices<F> {
    /// `B x B x d` causal decay.
    pub delta: Array3<F>,
    /// Rows `u_t = a_t / |kappa_t|` (per head).
    pub u: Array2<F>,
    /// Raw removal keys.
    pub kappa: Array2<F>,
    /// Normalized removal keys.
    pub kappa_hat: Array2<F>,
    /// Replacement keys.
    pub k_tilde: Array2<F>,
    pub v: Array2<F>,
}

impl<F: Real> ChunkMatrices<F> {
    pub fn build(elements: &[ElementSet<F>], n_heads: usize) -> Result<Self> {
        let b = elements.len();
        if b == 0 {
            return Err(dim_err("empty chunk"));
        }
        let d = elements[0].w.len();
        if n_heads == 0 || !d.is_multiple_of(n_heads) {
            return Err(dim_err(format!("d = {d} does not split into {n_heads} heads")));
        }
        let dh = d / n_heads;
        let ws: Vec<Array1<F>> = elements.iter().map(|e| e.w.clone()).collect();
        let delta = decay_matrix(&ws)?;
        let mut u = Array2::zeros((b, d));
        let mut kappa = Array2::zeros((b, d));
        let mut kappa_hat = Array2::zeros((b, d));
        let mut k_tilde = Array2::zeros((b, d));
        let mut v = Array2::zeros((b, d));
        for (t, e) in elements.iter().enumerate() {
            check_element_dims(e, d)?;
            let inv = inv_head_norms(e.kappa.view(), n_heads);
            for c in 0..d {
                let n = inv[c / dh];
                u[[t, c]] = e.a[c] * n;
                kappa[[t, c]] = e.kappa[c];
                kappa_hat[[t, c]] = e.kappa[c] * n;
            }
            k_tilde.row_mut(t).assign(&e.k_tilde);
            v.row_mut(t).assign(&e.v);
        }
        Ok(ChunkMatrices { delta, u, kappa, kappa_hat, k_tilde, v })
    }

    pub fn len(&self) -> usize {
        self.u.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Runs a whole chunk at once. Returns every intermediate state (one per
/// element) and the final state, identical up to rounding to repeated
/// [`state_step`] calls.
pub fn chunk_forward<F: Real>(s_in: &Array3<F>, elements: &[ElementSet<F>]) -> Result<(Vec<Array3<F>>, Array3<F>)> {
    let (n_heads, dh, dh2) = s_in.dim();
    if dh != dh2 {
        return Err(dim_err("per-head state must be square"));
    }
    if elements.is_empty() {
        return Err(LadyError::Contract("chunk length must be at least 1".into()));
    }
    for e in elements {
        check_element_dims(e, n_heads * dh)?;
        check_element_finite(e)?;
    }
    check_finite(s_in.iter(), "incoming state")?;

    let b = elements.len();
    let cm = ChunkMatrices::build(elements, n_heads)?;
    let mut states = vec![Array3::zeros(s_in.raw_dim()); b];
    let one = Array1::<F>::ones(dh);

    for h in 0..n_heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let sin = s_in.index_axis(Axis(0), h);
        let delta = cm.delta.slice(s![.., .., lo..hi]);
        let khat = cm.kappa_hat.slice(s![.., lo..hi]);
        let kt = cm.k_tilde.slice(s![.., lo..hi]);
        let v = cm.v.slice(s![.., lo..hi]);
        let removal = &cm.u.slice(s![.., lo..hi]) * &cm.kappa.slice(s![.., lo..hi]);

        // Exclusive decay prod_{m=from..=to} w_m, empty product = 1.
        let decay = |to: isize, from: usize| -> Array1<F> {
            if to < from as isize {
                one.clone()
            } else {
                delta.slice(s![to as usize, from, ..]).to_owned()
            }
        };

        // Forward substitution for H[s] = S_{s-1} khat_s^T.
        let mut hmat = Array2::<F>::zeros((b, dh));
        for st in 0..b {
            let ks = khat.row(st);
            let lead = &decay(st as isize - 1, 0) * &ks;
            let mut rhs = sin.dot(&lead);
            for r in 0..st {
                let gk = &decay(st as isize - 1, r + 1) * &ks;
                let p = kt.row(r).dot(&gk);
                let q = removal.row(r).dot(&gk);
                rhs.scaled_add(p, &v.row(r));
                rhs.scaled_add(-q, &hmat.row(r));
            }
            hmat.row_mut(st).assign(&rhs);
        }

        for t in 0..b {
            let mut gk = Array2::<F>::zeros((t + 1, dh));
            let mut gb = Array2::<F>::zeros((t + 1, dh));
            for sidx in 0..=t {
                let g = decay(t as isize, sidx + 1);
                gk.row_mut(sidx).assign(&(&kt.row(sidx) * &g));
                gb.row_mut(sidx).assign(&(&removal.row(sidx) * &g));
            }
            let scale = delta.slice(s![t, 0, ..]);
            let mut st = &sin * &scale.broadcast((dh, dh)).expect("row broadcast");
            st += &v.slice(s![..=t, ..]).t().dot(&gk);
            st -= &hmat.slice(s![..=t, ..]).t().dot(&gb);
            states[t].index_axis_mut(Axis(0), h).assign(&st);
        }
    }
    let s_out = states[b - 1].clone();
    Ok((states, s_out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array};

    fn elements_from(w: Array1<f64>, kappa: Array1<f64>, a: Array1<f64>, v: Array1<f64>, kt: Array1<f64>) -> ElementSet<f64> {
        let d = w.len();
        ElementSet {
            r: Array1::zeros(d),
            w,
            k: kappa.clone(),
            kappa,
            k_tilde: kt,
            v: v.clone(),
            a,
            g: Array1::zeros(d),
            nu: Array1::zeros(d),
            v_first: v,
        }
    }

    #[test]
    fn first_step_is_outer_product() {
        let e = elements_from(array![0.9, 0.7], array![1.0, 2.0], array![0.3, 0.6], array![1.5, -2.0], array![0.5, 4.0]);
        let s = state_step(&Array3::zeros((1, 2, 2)), &e).unwrap();
        assert_eq!(s.index_axis(Axis(0), 0), array![[0.75, 6.0], [-1.0, -8.0]]);
    }

    #[test]
    fn unit_decay_zero_rate_accumulates() {
        let e = elements_from(array![1.0, 1.0], array![3.0, 1.0], array![0.0, 0.0], array![1.0, 2.0], array![2.0, 1.0]);
        let prev = Array::from_shape_vec((1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = state_step(&prev, &e).unwrap();
        assert_eq!(s.index_axis(Axis(0), 0), array![[3.0, 3.0], [7.0, 6.0]]);
    }

    #[test]
    fn hand_case_two_by_two() {
        // khat = (0.6, 0.8); A = diag(w) - khat^T (a * khat) = [[0.72, -0.12], [-0.24, 0.64]]
        let e = elements_from(array![0.9, 0.8], array![3.0, 4.0], array![0.5, 0.25], array![1.0, -1.0], array![2.0, 1.0]);
        let prev = Array::from_shape_vec((1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = state_step(&prev, &e).unwrap();
        let expected = array![[2.24, 2.16], [-0.80, 1.20]];
        for (g, x) in s.iter().zip(expected.iter()) {
            assert!((g - x).abs() < 1e-12, "{g} vs {x}");
        }
    }

    #[test]
    fn zero_key_is_stable() {
        let e = elements_from(array![0.9, 0.8], array![0.0, 0.0], array![0.5, 0.5], array![1.0, 1.0], array![0.0, 0.0]);
        let prev = Array::from_shape_vec((1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = state_step(&prev, &e).unwrap();
        assert!(s.iter().all(|v| v.is_finite()));
        assert_eq!(s[[0, 0, 0]], 0.9);
    }

    #[test]
    fn non_finite_input_is_numeric_error() {
        let e = elements_from(array![0.9, f64::NAN], array![1.0, 0.0], array![0.5, 0.5], array![1.0, 1.0], array![0.0, 0.0]);
        assert!(matches!(state_step(&Array3::zeros((1, 2, 2)), &e), Err(LadyError::Numeric(_))));
    }

    #[test]
    fn decay_matrix_cases() {
        let d = decay_matrix(&[array![0.5], array![0.5]]).unwrap();
        assert_eq!(d.slice(s![.., .., 0]), array![[0.5, 0.0], [0.25, 0.5]]);
        let ones = decay_matrix(&vec![Array1::<f64>::ones(3); 4]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if j <= i { 1.0 } else { 0.0 };
                assert!(ones.slice(s![i, j, ..]).iter().all(|&v| v == expected));
            }
        }
        assert!(decay_matrix::<f64>(&[]).is_err());
    }

    #[test]
    fn single_element_chunk_equals_one_step() {
        let e = elements_from(array![0.9, 0.8], array![3.0, 4.0], array![0.5, 0.25], array![1.0, -1.0], array![2.0, 1.0]);
        let prev = Array::from_shape_vec((1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let seq = state_step(&prev, &e).unwrap();
        let (states, out) = chunk_forward(&prev, std::slice::from_ref(&e)).unwrap();
        assert_eq!(states.len(), 1);
        for (a, b) in out.iter().zip(seq.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn empty_chunk_is_rejected() {
        assert!(chunk_forward::<f64>(&Array3::zeros((1, 2, 2)), &[]).is_err());
    }
}
