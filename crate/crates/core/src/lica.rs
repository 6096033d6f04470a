//! Linear cross-attention.
//!
//! Queries are first encoded by their own RWKV-7 stack, then appended after
//! the feature tokens and run through a second stack. The recurrent state
//! carries everything seen so far, so the last `M` outputs have read all
//! features and all earlier queries at cost linear in `L + M`.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use crate::error::{dim_err, LadyError, Result};
use crate::rwkv7::{BlockConfig, Mode, RwkvStack};
use crate::tensor::Real;

/// `M x d` query tokens, `M >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySet<F> {
    pub tokens: Array2<F>,
}

impl<F: Real> QuerySet<F> {
    pub fn new(tokens: Array2<F>) -> Result<Self> {
        if tokens.nrows() == 0 {
            return Err(LadyError::Contract("a query set needs at least one token".into()));
        }
        Ok(QuerySet { tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.nrows() == 0
    }

    pub fn d(&self) -> usize {
        self.tokens.ncols()
    }
}

/// Runs the queries through the encoder stack from a fresh state.
pub fn encode_query<F: Real>(q: &QuerySet<F>, encoder: &RwkvStack<F>, mode: Mode) -> Result<QuerySet<F>> {
    if q.d() != encoder.d() {
        return Err(dim_err(format!("query width {} vs encoder width {}", q.d(), encoder.d())));
    }
    let mut state = encoder.new_state();
    QuerySet::new(encoder.forward(q.tokens.view(), &mut state, mode)?)
}

/// Runs `[features; q_enc]` through the cross stack from a fresh state and
/// returns the last `M` outputs.
pub fn cross_attend<F: Real>(
    features: ArrayView2<F>,
    q_enc: &QuerySet<F>,
    cross: &RwkvStack<F>,
    mode: Mode,
) -> Result<QuerySet<F>> {
    let d = cross.d();
    if q_enc.d() != d || features.ncols() != d {
        return Err(dim_err(format!(
            "cross-attention widths differ: features {}, queries {}, block {d}",
            features.ncols(),
            q_enc.d()
        )));
    }
    let seq = concatenate(Axis(0), &[features, q_enc.tokens.view()]).map_err(|e| dim_err(e.to_string()))?;
    let mut state = cross.new_state();
    let out = cross.forward(seq.view(), &mut state, mode)?;
    let l = features.nrows();
    QuerySet::new(out.slice(s![l.., ..]).to_owned())
}

/// Encoder stack plus cross stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Lica<F> {
    pub encoder: RwkvStack<F>,
    pub cross: RwkvStack<F>,
}

impl<F: Real> Lica<F> {
    /// `depth` blocks per role.
    pub fn random(config: BlockConfig, depth: usize, seed: u64) -> Result<Self> {
        Ok(Lica {
            encoder: RwkvStack::random(config, depth, seed)?,
            cross: RwkvStack::random(config, depth, seed.wrapping_add(1000))?,
        })
    }

    pub fn d(&self) -> usize {
        self.encoder.d()
    }

    /// `cross_attend(features, encode_query(q))`.
    pub fn attend(&self, features: ArrayView2<F>, q: &QuerySet<F>, mode: Mode) -> Result<QuerySet<F>> {
        let encoded = encode_query(q, &self.encoder, mode)?;
        cross_attend(features, &encoded, &self.cross, mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut rng))
    }

    fn block(seed: u64) -> RwkvStack<f64> {
        RwkvStack::random(BlockConfig::new(8), 1, seed).unwrap()
    }

    #[test]
    fn empty_query_set_is_rejected() {
        assert!(QuerySet::<f64>::new(Array2::zeros((0, 8))).is_err());
    }

    #[test]
    fn encode_single_token_is_block_forward() {
        let enc = block(1);
        let q = QuerySet::new(noise(1, 8, 2)).unwrap();
        let out = encode_query(&q, &enc, Mode::Sequential).unwrap();
        let mut st = enc.new_state();
        let expected = enc.forward(q.tokens.view(), &mut st, Mode::Sequential).unwrap();
        assert_eq!(out.tokens, expected);
    }

    #[test]
    fn encode_matches_block_oracle_and_preserves_length() {
        let enc = block(42);
        let q = QuerySet::new(noise(4, 8, 42)).unwrap();
        let a = encode_query(&q, &enc, Mode::Chunked { chunk_size: 2 }).unwrap();
        let b = encode_query(&q, &enc, Mode::Chunked { chunk_size: 2 }).unwrap();
        assert_eq!(a, b, "fresh state per call");
        assert_eq!(a.len(), 4);
        let mut st = enc.new_state();
        let oracle = enc.forward(q.tokens.view(), &mut st, Mode::Sequential).unwrap();
        for (x, y) in a.tokens.iter().zip(oracle.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn no_features_equals_block_on_queries() {
        let cross = block(3);
        let q = QuerySet::new(noise(3, 8, 5)).unwrap();
        let out = cross_attend(Array2::zeros((0, 8)).view(), &q, &cross, Mode::Sequential).unwrap();
        let mut st = cross.new_state();
        assert_eq!(out.tokens, cross.forward(q.tokens.view(), &mut st, Mode::Sequential).unwrap());
    }

    #[test]
    fn feature_perturbation_reaches_queries() {
        let cross = block(9);
        let feats = noise(6, 8, 10);
        let q = QuerySet::new(noise(3, 8, 11)).unwrap();
        let base = cross_attend(feats.view(), &q, &cross, Mode::Sequential).unwrap();
        let mut bumped = feats.clone();
        bumped[[3, 2]] += 0.5;
        let moved = cross_attend(bumped.view(), &q, &cross, Mode::Sequential).unwrap();
        assert!(base.tokens.iter().zip(moved.tokens.iter()).any(|(a, b)| a != b));
    }

    #[test]
    fn later_queries_do_not_affect_earlier_outputs() {
        let cross = block(12);
        let feats = noise(5, 8, 13);
        let q = QuerySet::new(noise(4, 8, 14)).unwrap();
        let base = cross_attend(feats.view(), &q, &cross, Mode::Sequential).unwrap();
        let mut bumped = q.clone();
        bumped.tokens.row_mut(2).mapv_inplace(|v| v + 1.0);
        let moved = cross_attend(feats.view(), &bumped, &cross, Mode::Sequential).unwrap();
        assert_eq!(base.tokens.slice(s![..2, ..]), moved.tokens.slice(s![..2, ..]));
        assert_ne!(base.tokens.row(2), moved.tokens.row(2));
    }

    #[test]
    fn width_mismatch_is_dimension_error() {
        let cross = block(1);
        let q = QuerySet::new(noise(2, 8, 1)).unwrap();
        assert!(matches!(
            cross_attend(noise(3, 4, 0).view(), &q, &cross, Mode::Sequential),
            Err(LadyError::Dimension(_))
        ));
    }
}
