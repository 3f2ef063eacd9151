//! Evidence transmission between the tokens of one sentence.
//!
//! Queries and keys are projections of the evidence matrix, the values keep
//! the class width so that they remain evidence:
//!
//! ```text
//! Q = β W_Q,  K = β W_K,  V = softplus(β W_V)
//! β_trans = softmax(Q Kᵀ / γ) V
//! β_agg   = β + β_trans
//! ```

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidential::ProbabilityVector;
use crate::params::{join, slice, slice_mut, Parameters};
use crate::special::{sigmoid, softplus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionParams {
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    /// Attention temperature; a hyperparameter, not trained.
    pub gamma: f64,
}

impl TransmissionParams {
    /// Zero-mean normal weights with standard deviation `1/√c`; `gamma`
    /// defaults to `√p`.
    pub fn new(num_classes: usize, projection: usize, gamma: Option<f64>, rng: &mut impl Rng) -> Result<Self> {
        if num_classes < 2 || projection == 0 {
            return Err(Error::InvalidParameter(format!(
                "transmission needs c >= 2 and p >= 1 (got c={num_classes}, p={projection})"
            )));
        }
        let gamma = gamma.unwrap_or((projection as f64).sqrt());
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
        }
        let normal = Normal::new(0.0, 1.0 / (num_classes as f64).sqrt()).expect("valid std");
        Ok(Self {
            w_q: Array2::from_shape_fn((num_classes, projection), |_| normal.sample(rng)),
            w_k: Array2::from_shape_fn((num_classes, projection), |_| normal.sample(rng)),
            w_v: Array2::from_shape_fn((num_classes, num_classes), |_| normal.sample(rng)),
            gamma,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.w_v.nrows()
    }

    pub fn projection(&self) -> usize {
        self.w_q.ncols()
    }

    fn check(&self, beta: ArrayView2<f64>) -> Result<()> {
        let c = self.num_classes();
        if beta.ncols() != c || self.w_q.nrows() != c || self.w_k.nrows() != c || self.w_v.ncols() != c {
            return Err(Error::InvalidParameter(format!(
                "evidence has {} classes, projections expect {c}",
                beta.ncols()
            )));
        }
        if self.w_k.ncols() != self.w_q.ncols() {
            return Err(Error::InvalidParameter("W_Q and W_K widths differ".into()));
        }
        Ok(())
    }
}

impl Parameters for TransmissionParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&join(prefix, "w_q"), slice(&self.w_q));
        f(&join(prefix, "w_k"), slice(&self.w_k));
        f(&join(prefix, "w_v"), slice(&self.w_v));
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&join(prefix, "w_q"), slice_mut(&mut self.w_q));
        f(&join(prefix, "w_k"), slice_mut(&mut self.w_k));
        f(&join(prefix, "w_v"), slice_mut(&mut self.w_v));
    }
}

/// Query, key and value matrices. Without `softplus_on` the values are the
/// raw projection `β W_V` and may be negative.
pub fn qkv(
    beta: ArrayView2<f64>,
    params: &TransmissionParams,
    softplus_on: bool,
) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
    params.check(beta)?;
    let q = beta.dot(&params.w_q);
    let k = beta.dot(&params.w_k);
    let mut v = beta.dot(&params.w_v);
    if softplus_on {
        v.mapv_inplace(softplus);
    }
    Ok((q, k, v))
}

/// Row-wise softmax of `Q Kᵀ / γ`.
pub fn attention(q: ArrayView2<f64>, k: ArrayView2<f64>, gamma: f64) -> Array2<f64> {
    let mut logits = q.dot(&k.t()) / gamma;
    for mut row in logits.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    logits
}

/// `softmax(Q Kᵀ / γ) V`.
pub fn transmit(q: ArrayView2<f64>, k: ArrayView2<f64>, v: ArrayView2<f64>, gamma: f64) -> Result<Array2<f64>> {
    if q.nrows() != k.nrows() || k.nrows() != v.nrows() || q.ncols() != k.ncols() {
        return Err(Error::InvalidParameter(format!(
            "inconsistent shapes Q {:?}, K {:?}, V {:?}",
            q.dim(),
            k.dim(),
            v.dim()
        )));
    }
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    Ok(attention(q, k, gamma).dot(&v))
}

/// Elementwise `β_post + β_trans`.
pub fn aggregate(beta_post: ArrayView2<f64>, beta_trans: ArrayView2<f64>) -> Result<Array2<f64>> {
    if beta_post.dim() != beta_trans.dim() {
        return Err(Error::InvalidParameter(format!(
            "cannot aggregate {:?} with {:?}",
            beta_post.dim(),
            beta_trans.dim()
        )));
    }
    Ok(&beta_post + &beta_trans)
}

/// `(β_agg + 1) / Σ_k (β_agg,k + 1)`. Negative entries, reachable only
/// without the value softplus, are floored at zero.
pub fn aggregated_expected_probability(beta_agg_row: ArrayView1<f64>) -> ProbabilityVector {
    let alpha: Vec<f64> = beta_agg_row.iter().map(|&b| b.max(0.0) + 1.0).collect();
    let a0: f64 = alpha.iter().sum();
    ProbabilityVector::new(alpha.into_iter().map(|a| a / a0).collect()).expect("normalized by construction")
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct TransmissionCache {
    q: Array2<f64>,
    k: Array2<f64>,
    pre_v: Array2<f64>,
    v: Array2<f64>,
    attn: Array2<f64>,
}

/// `β_agg` for one sentence, with the cache needed by [`backward`].
pub fn forward(
    beta: ArrayView2<f64>,
    params: &TransmissionParams,
    softplus_on: bool,
) -> Result<(Array2<f64>, TransmissionCache)> {
    params.check(beta)?;
    let q = beta.dot(&params.w_q);
    let k = beta.dot(&params.w_k);
    let pre_v = beta.dot(&params.w_v);
    let v = if softplus_on {
        pre_v.mapv(softplus)
    } else {
        pre_v.clone()
    };
    let attn = attention(q.view(), k.view(), params.gamma);
    let agg = &beta + &attn.dot(&v);
    Ok((agg, TransmissionCache { q, k, pre_v, v, attn }))
}

/// Back-propagates `∂L/∂β_agg` to `∂L/∂β_post`, accumulating weight gradients.
pub fn backward(
    beta: ArrayView2<f64>,
    params: &TransmissionParams,
    softplus_on: bool,
    cache: &TransmissionCache,
    d_agg: ArrayView2<f64>,
    grad: &mut TransmissionParams,
) -> Array2<f64> {
    let mut d_beta = d_agg.to_owned();
    let d_attn = d_agg.dot(&cache.v.t());
    let d_v = cache.attn.t().dot(&d_agg);
    let d_pre_v = if softplus_on {
        d_v * cache.pre_v.mapv(sigmoid)
    } else {
        d_v
    };

    // softmax backward, row-wise
    let inner = (&d_attn * &cache.attn).sum_axis(Axis(1)).insert_axis(Axis(1));
    let d_logits = &cache.attn * &(&d_attn - &inner) / params.gamma;
    let d_q = d_logits.dot(&cache.k);
    let d_k = d_logits.t().dot(&cache.q);

    grad.w_q += &beta.t().dot(&d_q);
    grad.w_k += &beta.t().dot(&d_k);
    grad.w_v += &beta.t().dot(&d_pre_v);
    d_beta += &d_q.dot(&params.w_q.t());
    d_beta += &d_k.dot(&params.w_k.t());
    d_beta += &d_pre_v.dot(&params.w_v.t());
    d_beta
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(c: usize, p: usize, seed: u64) -> TransmissionParams {
        TransmissionParams::new(c, p, None, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn zero_evidence_values() {
        let p = params(3, 3, 0);
        let beta = Array2::zeros((4, 3));
        let (_, _, v) = qkv(beta.view(), &p, true).unwrap();
        assert!(v.iter().all(|&x| (x - std::f64::consts::LN_2).abs() < 1e-15));
        let (_, _, v) = qkv(beta.view(), &p, false).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn negative_value_column_stays_positive() {
        let mut p = params(2, 2, 1);
        p.w_v = array![[1.0, -200.0], [1.0, -200.0]];
        let beta = array![[1.0, 2.0]];
        let (_, _, v) = qkv(beta.view(), &p, true).unwrap();
        assert!(v[[0, 1]] > 0.0 && v[[0, 1]] < 1e-100);
    }

    #[test]
    fn dimension_mismatch() {
        let p = params(3, 2, 0);
        assert!(qkv(Array2::zeros((2, 4)).view(), &p, true).is_err());
        assert!(transmit(
            Array2::zeros((2, 2)).view(),
            Array2::zeros((3, 2)).view(),
            Array2::zeros((3, 3)).view(),
            1.0
        )
        .is_err());
        assert!(aggregate(Array2::zeros((2, 2)).view(), Array2::zeros((2, 3)).view()).is_err());
    }

    #[test]
    fn single_token_passes_value_through() {
        let q = array![[0.3, -2.0]];
        let k = array![[1.5, 0.2]];
        let v = array![[0.7, 1.1, 2.0]];
        assert_eq!(transmit(q.view(), k.view(), v.view(), 1.3).unwrap(), v);
    }

    #[test]
    fn zero_queries_average_values() {
        let q = Array2::zeros((3, 2));
        let k = array![[1.0, 2.0], [-3.0, 0.5], [0.0, 9.0]];
        let v = array![[1.0, 0.0], [2.0, 3.0], [6.0, 3.0]];
        let t = transmit(q.view(), k.view(), v.view(), 1.0).unwrap();
        for row in t.rows() {
            assert!((row[0] - 3.0).abs() < 1e-15);
            assert!((row[1] - 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_token_hand_computation() {
        let q = array![[1.0, 0.0], [0.0, 1.0]];
        let k = array![[2.0, 0.0], [0.0, 1.0]];
        let v = array![[1.0, 0.0], [0.0, 1.0]];
        // logits row0 = [2, 0], row1 = [0, 1]
        let a0 = 2f64.exp() / (2f64.exp() + 1.0);
        let a1 = 1f64.exp() / (1.0 + 1f64.exp());
        let t = transmit(q.view(), k.view(), v.view(), 1.0).unwrap();
        assert!((t[[0, 0]] - a0).abs() < 1e-15 && (t[[0, 1]] - (1.0 - a0)).abs() < 1e-15);
        assert!((t[[1, 0]] - (1.0 - a1)).abs() < 1e-15 && (t[[1, 1]] - a1).abs() < 1e-15);
    }

    #[test]
    fn aggregate_examples() {
        let post = array![[1.0, 2.0], [3.0, 0.5]];
        assert_eq!(aggregate(post.view(), Array2::zeros((2, 2)).view()).unwrap(), post);
        let sym = array![[1.0, 2.0], [2.0, 1.0]];
        let out = aggregate(sym.view(), sym.t()).unwrap();
        assert_eq!(out, out.t());
    }

    #[test]
    fn aggregated_probability_examples() {
        assert_eq!(
            aggregated_expected_probability(array![0.0, 0.0].view()).as_slice(),
            &[0.5, 0.5]
        );
        let p = aggregated_expected_probability(array![3.0, 0.0].view());
        assert!((p.as_slice()[0] - 0.8).abs() < 1e-15 && (p.as_slice()[1] - 0.2).abs() < 1e-15);
        let big = aggregated_expected_probability(array![3e9, 1e9].view());
        assert!((big.as_slice()[0] - 0.75).abs() < 1e-8);
    }

    #[test]
    fn forward_matches_composition() {
        let p = params(3, 2, 4);
        let beta = array![[1.0, 0.0, 2.0], [0.5, 4.0, 0.1], [0.0, 0.0, 0.3]];
        let (q, k, v) = qkv(beta.view(), &p, true).unwrap();
        let t = transmit(q.view(), k.view(), v.view(), p.gamma).unwrap();
        let expected = aggregate(beta.view(), t.view()).unwrap();
        let (agg, _) = forward(beta.view(), &p, true).unwrap();
        assert_eq!(agg, expected);
    }
}
