use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::flow::RadialFlowStack;
use crate::error::{Error, Result};
use crate::evidential::ProbabilityVector;

/// Per-sentence `l × c` matrix of nonnegative pseudo-evidence counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceMatrix(pub Array2<f64>);

impl EvidenceMatrix {
    pub fn new(beta: Array2<f64>) -> Result<Self> {
        if let Some(bad) = beta.iter().find(|b| !b.is_finite() || **b < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "evidence entry {bad} is not a finite nonnegative count"
            )));
        }
        Ok(Self(beta))
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn num_tokens(&self) -> usize {
        self.0.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.0.ncols()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// `β_k = N · P(z | k; θ) · P(k)` for one token.
pub fn beta_post(z: ArrayView1<f64>, token_prior: &ProbabilityVector, n: f64, flows: &RadialFlowStack) -> Array1<f64> {
    Array1::from_iter(token_prior.as_slice().iter().enumerate().map(|(k, &pk)| {
        if pk == 0.0 {
            0.0
        } else {
            n * flows.log_density(z, k).exp() * pk
        }
    }))
}

/// Stacks [`beta_post`] rows for every token of a sentence.
pub fn beta_post_matrix(
    latents: ArrayView2<f64>,
    priors: &[&ProbabilityVector],
    n: f64,
    flows: &RadialFlowStack,
) -> Result<EvidenceMatrix> {
    if latents.nrows() == 0 {
        return Err(Error::InvalidInput("empty sentence".into()));
    }
    if priors.len() != latents.nrows() {
        return Err(Error::InvalidParameter(format!(
            "{} latent rows but {} token priors",
            latents.nrows(),
            priors.len()
        )));
    }
    let c = flows.num_classes();
    let mut beta = Array2::zeros((latents.nrows(), c));
    for (i, (z, prior)) in latents.rows().into_iter().zip(priors).enumerate() {
        beta.row_mut(i).assign(&beta_post(z, prior, n, flows));
    }
    Ok(EvidenceMatrix(beta))
}
