use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{softmax, SentenceInput};
use super::train::{dropout_mask, ModelState};
use crate::error::{Error, Result};
use crate::evidential::{
    argmax, expected_probability, shannon_entropy, DirichletParams, ProbabilityVector, UncertaintyReport,
};

/// Evidential prediction for one token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenPrediction {
    pub alpha: DirichletParams,
    pub probability: ProbabilityVector,
    pub uncertainty: UncertaintyReport,
    pub class: usize,
}

/// Per-token `α_agg`, expected aggregated probability, the five uncertainty
/// measures and the predicted class.
pub fn predict(model: &ModelState, input: &SentenceInput) -> Result<Vec<TokenPrediction>> {
    if !model.variant().is_evidential() {
        return Err(Error::InvalidConfig(
            "the dropout baseline has no Dirichlet output; use mc_dropout_predict".into(),
        ));
    }
    let out = model.output(input)?;
    out.rows()
        .into_iter()
        .map(|row| {
            let alpha = DirichletParams::from_evidence(&row.to_vec())?;
            let probability = expected_probability(&alpha);
            let uncertainty = UncertaintyReport::from_alpha(&alpha);
            let class = probability.argmax();
            Ok(TokenPrediction {
                alpha,
                probability,
                uncertainty,
                class,
            })
        })
        .collect()
}

/// Monte-Carlo dropout prediction for one token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McPrediction {
    pub mean: ProbabilityVector,
    /// Mean of the per-pass entropies.
    pub aleatoric: f64,
    /// Mutual information: entropy of the mean minus `aleatoric`.
    pub epistemic: f64,
    /// Entropy of the mean.
    pub entropy: f64,
    pub class: usize,
}

/// Mutual-information decomposition of a set of per-pass class distributions.
pub fn mc_decompose(passes: &[Vec<f64>]) -> Result<McPrediction> {
    let first = passes.first().ok_or_else(|| Error::InvalidInput("no passes".into()))?;
    let c = first.len();
    let mut mean = vec![0.0; c];
    let mut aleatoric = 0.0;
    for p in passes {
        if p.len() != c {
            return Err(Error::InvalidInput("passes disagree on the number of classes".into()));
        }
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x;
        }
        aleatoric += shannon_entropy(p);
    }
    let t = passes.len() as f64;
    mean.iter_mut().for_each(|m| *m /= t);
    aleatoric /= t;
    let entropy = shannon_entropy(&mean);
    let class = argmax(&mean);
    Ok(McPrediction {
        mean: ProbabilityVector::new(mean)?,
        aleatoric,
        epistemic: entropy - aleatoric,
        entropy,
        class,
    })
}

/// Runs `passes` forward passes with independent dropout masks on the
/// encoder output and decomposes the resulting predictive distributions.
/// For evidential variants each pass contributes its expected aggregated
/// probability; for the baseline, its softmax.
pub fn mc_dropout_predict(
    model: &ModelState,
    input: &SentenceInput,
    passes: usize,
    seed: u64,
) -> Result<Vec<McPrediction>> {
    let rate = model.config.dropout_rate;
    if rate <= 0.0 {
        return Err(Error::InvalidConfig("MC dropout needs dropout_rate > 0".into()));
    }
    if passes < 2 {
        return Err(Error::InvalidConfig(format!(
            "MC dropout needs at least 2 passes, got {passes}"
        )));
    }
    let spec = model.spec();
    let evidential = model.variant().is_evidential();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = input.tokens.len();
    let mut per_token: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(passes); l];
    for _ in 0..passes {
        let mask = dropout_mask(l, model.context_dim(), rate, &mut rng);
        let out = model.network.forward(&spec, input, Some(mask))?.output;
        for (i, row) in out.rows().into_iter().enumerate() {
            let p = if evidential {
                let alpha: Vec<f64> = row.iter().map(|b| b.max(0.0) + 1.0).collect();
                let a0: f64 = alpha.iter().sum();
                alpha.into_iter().map(|a| a / a0).collect()
            } else {
                softmax(&row.to_vec())
            };
            per_token[i].push(p);
        }
    }
    per_token.iter().map(|p| mc_decompose(p)).collect()
}
