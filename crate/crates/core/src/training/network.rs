//! The full network: encoder, latent projection, class-wise flows, evidence
//! transmission and (for the dropout baseline) a softmax head, with one
//! forward/backward pair per sentence.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::config::{ModelVariant, TrainingConfig};
use crate::error::{Error, Result};
use crate::evidential::{dirichlet_entropy_raw, ALPHA_FLOOR};
use crate::params::{join, slice, slice_mut, Parameters};
use crate::special::{digamma, trigamma};
use crate::token_pn::{BiRnn, BiRnnCache, Embedding, LatentMlp, LatentMlpCache, RadialFlowStack, TokenPriorTable};
use crate::transmission::{self, TransmissionCache, TransmissionParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxHead {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Parameters for SoftmaxHead {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&join(prefix, "w"), slice(&self.w));
        f(&join(prefix, "b"), slice(&self.b));
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&join(prefix, "w"), slice_mut(&mut self.w));
        f(&join(prefix, "b"), slice_mut(&mut self.b));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub embedding: Embedding,
    pub rnn: BiRnn,
    pub mlp: LatentMlp,
    pub flows: RadialFlowStack,
    pub transmission: TransmissionParams,
    pub head: SoftmaxHead,
}

impl Parameters for Network {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        self.embedding.visit(&join(prefix, "embedding"), f);
        self.rnn.visit(&join(prefix, "rnn"), f);
        self.mlp.visit(&join(prefix, "mlp"), f);
        self.flows.visit(&join(prefix, "flows"), f);
        self.transmission.visit(&join(prefix, "transmission"), f);
        self.head.visit(&join(prefix, "head"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.embedding.visit_mut(&join(prefix, "embedding"), f);
        self.rnn.visit_mut(&join(prefix, "rnn"), f);
        self.mlp.visit_mut(&join(prefix, "mlp"), f);
        self.flows.visit_mut(&join(prefix, "flows"), f);
        self.transmission.visit_mut(&join(prefix, "transmission"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

/// Everything besides parameters that a forward pass depends on.
#[derive(Debug, Clone, Copy)]
pub struct ForwardSpec<'a> {
    pub variant: ModelVariant,
    pub softplus_on: bool,
    pub priors: &'a TokenPriorTable,
}

impl ForwardSpec<'_> {
    fn total_tokens(&self) -> f64 {
        self.priors.total_token_count() as f64
    }
}

/// One sentence as vocabulary ids, optionally with precomputed contextual
/// embeddings that replace the recurrent encoder.
#[derive(Debug, Clone, Copy)]
pub struct SentenceInput<'a> {
    pub tokens: &'a [usize],
    pub contextual: Option<ArrayView2<'a, f64>>,
}

impl<'a> SentenceInput<'a> {
    pub fn tokens(tokens: &'a [usize]) -> Self {
        Self {
            tokens,
            contextual: None,
        }
    }
}

/// Forward intermediates for one sentence.
#[derive(Debug, Clone)]
pub struct Trace {
    x: Option<Array2<f64>>,
    rnn_cache: Option<BiRnnCache>,
    ctx: Array2<f64>,
    mask: Option<Array2<f64>>,
    mlp_cache: LatentMlpCache,
    pub z: Array2<f64>,
    /// `β_post` (evidential variants only).
    pub beta_post: Option<Array2<f64>>,
    trans_cache: Option<TransmissionCache>,
    /// `β_agg` for evidential variants, logits for the dropout baseline.
    pub output: Array2<f64>,
}

impl Network {
    pub fn new(config: &TrainingConfig, vocab_size: usize, num_classes: usize, rng: &mut impl Rng) -> Result<Self> {
        let m = &config.model;
        let embedding = Embedding::new(vocab_size, m.embed_dim, rng);
        let rnn = BiRnn::new(m.embed_dim, m.hidden_dim, rng);
        let ctx_dim = m.contextual_dim.unwrap_or(rnn.output_dim());
        let mlp = LatentMlp::new(ctx_dim, m.mlp_hidden, m.latent_dim, rng);
        let flows = RadialFlowStack::new(num_classes, m.latent_dim, m.flow_depth, rng);
        let transmission = TransmissionParams::new(num_classes, m.projection_dim.unwrap_or(num_classes), m.gamma, rng)?;
        let bound = (6.0 / (m.latent_dim + num_classes) as f64).sqrt();
        let uniform = Uniform::new(-bound, bound).expect("non-empty range");
        let head = SoftmaxHead {
            w: Array2::from_shape_fn((num_classes, m.latent_dim), |_| uniform.sample(rng)),
            b: Array1::zeros(num_classes),
        };
        Ok(Self {
            embedding,
            rnn,
            mlp,
            flows,
            transmission,
            head,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.flows.num_classes()
    }

    pub fn forward(&self, spec: &ForwardSpec, input: &SentenceInput, mask: Option<Array2<f64>>) -> Result<Trace> {
        let l = input.tokens.len();
        if l == 0 {
            return Err(Error::InvalidInput("empty sentence".into()));
        }
        let (x, rnn_cache, mut ctx) = match input.contextual {
            Some(c) => {
                if c.nrows() != l || c.ncols() != self.mlp.input_dim() {
                    return Err(Error::InvalidParameter(format!(
                        "contextual embeddings are {:?}, expected ({l}, {})",
                        c.dim(),
                        self.mlp.input_dim()
                    )));
                }
                (None, None, c.to_owned())
            }
            None => {
                if let Some(&bad) = input.tokens.iter().find(|&&t| t >= self.embedding.table.nrows()) {
                    return Err(Error::InvalidInput(format!("token id {bad} outside the vocabulary")));
                }
                let x = self.embedding.forward(input.tokens);
                let (ctx, cache) = self.rnn.forward(x.view());
                (Some(x), Some(cache), ctx)
            }
        };
        if let Some(m) = &mask {
            ctx *= m;
        }
        let (z, mlp_cache) = self.mlp.forward(ctx.view());

        if !spec.variant.is_evidential() {
            let output = (z.dot(&self.head.w.t()) + &self.head.b)
                .as_standard_layout()
                .into_owned();
            return Ok(Trace {
                x,
                rnn_cache,
                ctx,
                mask,
                mlp_cache,
                z,
                beta_post: None,
                trans_cache: None,
                output,
            });
        }

        let c = self.num_classes();
        let n = spec.total_tokens();
        let mut beta = Array2::zeros((l, c));
        for (i, &tok) in input.tokens.iter().enumerate() {
            let prior = spec.priors.prior(tok).as_slice();
            for (k, &pk) in prior.iter().enumerate() {
                if pk > 0.0 {
                    beta[[i, k]] = n * self.flows.log_density(z.row(i), k).exp() * pk;
                }
            }
        }
        let (output, trans_cache) = match spec.variant {
            ModelVariant::Slpn => {
                let (agg, cache) = transmission::forward(beta.view(), &self.transmission, spec.softplus_on)?;
                (agg, Some(cache))
            }
            _ => (beta.clone(), None),
        };
        Ok(Trace {
            x,
            rnn_cache,
            ctx,
            mask,
            mlp_cache,
            z,
            beta_post: Some(beta),
            trans_cache,
            output,
        })
    }

    /// Accumulates parameter gradients for `∂L/∂output = d_out`.
    pub fn backward(
        &self,
        spec: &ForwardSpec,
        input: &SentenceInput,
        trace: &Trace,
        d_out: ArrayView2<f64>,
        grad: &mut Network,
    ) {
        let d_z = if spec.variant.is_evidential() {
            let beta = trace.beta_post.as_ref().expect("evidential trace");
            let d_post = match (&trace.trans_cache, spec.variant) {
                (Some(cache), ModelVariant::Slpn) => transmission::backward(
                    beta.view(),
                    &self.transmission,
                    spec.softplus_on,
                    cache,
                    d_out,
                    &mut grad.transmission,
                ),
                _ => d_out.to_owned(),
            };
            let mut d_z = Array2::zeros(trace.z.raw_dim());
            for i in 0..beta.nrows() {
                for k in 0..beta.ncols() {
                    // β = N exp(log p) P(k)  =>  ∂β/∂log p = β
                    let w = d_post[[i, k]] * beta[[i, k]];
                    if w != 0.0 {
                        let dz = self.flows.log_density_backward(trace.z.row(i), k, w, &mut grad.flows);
                        let mut row = d_z.row_mut(i);
                        row += &dz;
                    }
                }
            }
            d_z
        } else {
            grad.head.w += &d_out.t().dot(&trace.z);
            grad.head.b += &d_out.sum_axis(Axis(0));
            d_out.dot(&self.head.w)
        };

        let mut d_ctx = self
            .mlp
            .backward(trace.ctx.view(), &trace.mlp_cache, d_z.view(), &mut grad.mlp);
        if let Some(m) = &trace.mask {
            d_ctx *= m;
        }
        if let (Some(x), Some(cache)) = (&trace.x, &trace.rnn_cache) {
            let d_x = self.rnn.backward(x.view(), cache, d_ctx.view(), &mut grad.rnn);
            self.embedding.backward(input.tokens, d_x.view(), &mut grad.embedding);
        }
    }
}

/// Per-token evidential loss `ψ(α_0) - ψ(α_y) - λ H(Dir(α))` with
/// `α = β_agg + 1`, and its gradient with respect to `β_agg`. Concentrations
/// below the floor are clamped and pass no gradient.
pub(crate) fn evidential_token_loss(beta_row: &[f64], label: usize, lambda: f64) -> (f64, Vec<f64>) {
    let c = beta_row.len();
    let alpha: Vec<f64> = beta_row.iter().map(|&b| (b + 1.0).max(ALPHA_FLOOR)).collect();
    let a0: f64 = alpha.iter().sum();
    let mut loss = digamma(a0) - digamma(alpha[label]);
    let t0 = trigamma(a0);
    let mut grad = vec![t0; c];
    grad[label] -= trigamma(alpha[label]);
    if lambda != 0.0 {
        loss -= lambda * dirichlet_entropy_raw(&alpha);
        for (k, g) in grad.iter_mut().enumerate() {
            *g -= lambda * ((a0 - c as f64) * t0 - (alpha[k] - 1.0) * trigamma(alpha[k]));
        }
    }
    for (g, &b) in grad.iter_mut().zip(beta_row) {
        if b + 1.0 < ALPHA_FLOOR {
            *g = 0.0;
        }
    }
    (loss, grad)
}

/// Softmax cross-entropy for one row of logits and its gradient.
pub(crate) fn softmax_token_loss(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let p = softmax(logits);
    let loss = -p[label].max(f64::MIN_POSITIVE).ln();
    let mut grad = p;
    grad[label] -= 1.0;
    (loss, grad)
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / s).collect()
}

/// Summed loss over a sentence and `∂(sum)/∂output`.
pub(crate) fn sentence_loss(
    variant: ModelVariant,
    output: ArrayView2<f64>,
    labels: &[usize],
    lambda: f64,
) -> (f64, Array2<f64>) {
    let mut total = 0.0;
    let mut d_out = Array2::zeros(output.raw_dim());
    for (i, (row, &y)) in output.rows().into_iter().zip(labels).enumerate() {
        let row = row.to_vec();
        let (l, g) = if variant.is_evidential() {
            evidential_token_loss(&row, y, lambda)
        } else {
            softmax_token_loss(&row, y)
        };
        total += l;
        d_out.row_mut(i).assign(&Array1::from(g));
    }
    (total, d_out)
}

/// Token-averaged SLPN loss over a batch of aggregated evidence matrices:
/// mean expected cross-entropy minus `λ` times mean Dirichlet entropy.
pub fn slpn_loss(batch: &[(ArrayView2<f64>, &[usize])], lambda_reg: f64) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (s, (beta, labels)) in batch.iter().enumerate() {
        if beta.nrows() != labels.len() {
            return Err(Error::InvalidParameter(format!(
                "sentence {s}: {} rows but {} labels",
                beta.nrows(),
                labels.len()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= beta.ncols()) {
            return Err(Error::InvalidParameter(format!(
                "sentence {s}: label {y} out of range for {} classes",
                beta.ncols()
            )));
        }
        total += sentence_loss(ModelVariant::Slpn, *beta, labels, lambda_reg).0;
        count += labels.len();
    }
    if count == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidential::{dirichlet_entropy, expected_cross_entropy, DirichletParams};
    use ndarray::array;

    #[test]
    fn slpn_loss_examples() {
        let zero = array![[0.0, 0.0]];
        let l = slpn_loss(&[(zero.view(), &[0])], 0.0).unwrap();
        assert!((l - 1.0).abs() < 1e-10);

        let mut prev = f64::INFINITY;
        for b in [0.0, 0.5, 2.0, 10.0, 100.0] {
            let m = array![[b, 1.0]];
            let l = slpn_loss(&[(m.view(), &[0])], 0.0).unwrap();
            assert!(l < prev);
            prev = l;
        }

        // With the cross-entropy part held at its value, a more concentrated α
        // loses entropy and therefore raises the regularized loss.
        let lambda = 0.5;
        let flat = array![[0.0, 0.0]];
        let sharp = array![[4.0, 4.0]];
        let l_flat = slpn_loss(&[(flat.view(), &[0])], lambda).unwrap();
        let l_sharp = slpn_loss(&[(sharp.view(), &[0])], lambda).unwrap();
        let uce = |a: &[f64]| expected_cross_entropy(&DirichletParams::new(a.to_vec()).unwrap(), 0).unwrap();
        let h = |a: &[f64]| dirichlet_entropy(&DirichletParams::new(a.to_vec()).unwrap());
        assert!(h(&[5.0, 5.0]) < h(&[1.0, 1.0]));
        assert!((l_flat - (uce(&[1.0, 1.0]) - lambda * h(&[1.0, 1.0]))).abs() < 1e-9);
        assert!((l_sharp - (uce(&[5.0, 5.0]) - lambda * h(&[5.0, 5.0]))).abs() < 1e-9);
        assert!(l_sharp - uce(&[5.0, 5.0]) > l_flat - uce(&[1.0, 1.0]));
    }

    #[test]
    fn slpn_loss_errors() {
        let m = array![[0.0, 0.0]];
        assert!(slpn_loss(&[(m.view(), &[2])], 0.0).is_err());
        assert!(slpn_loss(&[(m.view(), &[0, 1])], 0.0).is_err());
    }

    #[test]
    fn token_loss_gradient() {
        let beta = [0.3, 4.0, 0.05, 12.5];
        for lambda in [0.0, 0.1] {
            let (_, g) = evidential_token_loss(&beta, 1, lambda);
            for k in 0..4 {
                let mut bp = beta;
                bp[k] += 1e-6;
                let mut bm = beta;
                bm[k] -= 1e-6;
                let fd = (evidential_token_loss(&bp, 1, lambda).0 - evidential_token_loss(&bm, 1, lambda).0) / 2e-6;
                assert!((fd - g[k]).abs() < 1e-5, "k={k} lambda={lambda}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn negative_evidence_is_clamped() {
        let (l, g) = evidential_token_loss(&[-3.0, 1.0], 0, 0.0);
        assert!(l.is_finite());
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn softmax_loss_gradient_sums_to_zero() {
        let (l, g) = softmax_token_loss(&[1.0, -2.0, 0.5], 2);
        assert!(l > 0.0);
        assert!(g.iter().sum::<f64>().abs() < 1e-15);
    }
}
