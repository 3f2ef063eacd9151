//! Closed-form Dirichlet mathematics: expected probabilities, the five
//! uncertainty measures and the two loss ingredients (expected cross-entropy
//! and Dirichlet entropy).
//!
//! All functions are pure. Entropies are in nats.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{digamma, ln_gamma};

/// Floor applied to concentration parameters before any digamma evaluation.
pub const ALPHA_FLOOR: f64 = 1.0 + 1e-12;

/// Tolerance for probability vectors summing to one.
pub const PROB_SUM_TOL: f64 = 1e-9;

/// Concentration parameters `α = β + 1` of a Dirichlet over `c` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletParams {
    alpha: Vec<f64>,
}

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "a Dirichlet needs at least 2 classes, got {}",
                alpha.len()
            )));
        }
        for (k, &a) in alpha.iter().enumerate() {
            if !a.is_finite() || a <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "alpha[{k}] = {a} is not a positive finite number"
                )));
            }
            if a < 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "alpha[{k}] = {a} is below the flat prior (1)"
                )));
            }
        }
        if !alpha.iter().sum::<f64>().is_finite() {
            return Err(Error::InvalidParameter("alpha_0 overflows".into()));
        }
        Ok(Self { alpha })
    }

    /// Adds the all-ones prior to an evidence row. Negative evidence (only
    /// reachable without the softplus on the transmitted values) is floored
    /// at zero.
    pub fn from_evidence(evidence: &[f64]) -> Result<Self> {
        if let Some(b) = evidence.iter().find(|b| b.is_nan()) {
            return Err(Error::InvalidParameter(format!("evidence contains {b}")));
        }
        Self::new(evidence.iter().map(|&b| b.max(0.0) + 1.0).collect())
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn num_classes(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha.iter().sum()
    }
}

/// A categorical distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVector {
    p: Vec<f64>,
}

impl ProbabilityVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidParameter("empty probability vector".into()));
        }
        if p.iter().any(|&x| !x.is_finite() || !(0.0..=1.0).contains(&x)) {
            return Err(Error::InvalidParameter(format!(
                "probability components must lie in [0, 1]: {p:?}"
            )));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidParameter(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self { p })
    }

    pub fn uniform(c: usize) -> Self {
        Self {
            p: vec![1.0 / c as f64; c],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.p)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.p
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// The five uncertainty measures for one Dirichlet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub vacuity: f64,
    pub dissonance: f64,
    pub aleatoric: f64,
    pub epistemic: f64,
    pub entropy: f64,
}

impl UncertaintyReport {
    pub fn from_alpha(alpha: &DirichletParams) -> Self {
        let p = expected_probability(alpha);
        Self {
            vacuity: vacuity(alpha),
            dissonance: dissonance(alpha),
            aleatoric: aleatoric(&p).expect("expected probabilities are never all zero"),
            epistemic: epistemic(alpha),
            entropy: entropy_uncertainty(&p),
        }
    }
}

/// `ᾱ / α_0`.
pub fn expected_probability(alpha: &DirichletParams) -> ProbabilityVector {
    let a0 = alpha.alpha0();
    ProbabilityVector {
        p: alpha.alpha.iter().map(|a| a / a0).collect(),
    }
}

/// `c / α_0`.
pub fn vacuity(alpha: &DirichletParams) -> f64 {
    // c * (1/α_0) keeps vacuity bit-for-bit proportional to epistemic.
    alpha.num_classes() as f64 * epistemic(alpha)
}

/// `1 / α_0`.
pub fn epistemic(alpha: &DirichletParams) -> f64 {
    1.0 / alpha.alpha0()
}

/// Balance-weighted belief mass that conflicts with other classes.
///
/// Terms with a zero denominator contribute nothing.
pub fn dissonance(alpha: &DirichletParams) -> f64 {
    let a0 = alpha.alpha0();
    let belief: Vec<f64> = alpha.alpha.iter().map(|a| (a - 1.0) / a0).collect();
    let mut total = 0.0;
    for (k, &bk) in belief.iter().enumerate() {
        if bk == 0.0 {
            continue;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (j, &bj) in belief.iter().enumerate() {
            if j == k {
                continue;
            }
            den += bj;
            let pair = bj + bk;
            if pair > 0.0 {
                num += bj * (1.0 - (bj - bk).abs() / pair);
            }
        }
        if den > 0.0 {
            total += bk * num / den;
        }
    }
    total
}

/// `1 / max_k p_k`.
pub fn aleatoric(p: &ProbabilityVector) -> Result<f64> {
    let max = p.p.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::InvalidParameter(
            "aleatoric uncertainty of an all-zero vector".into(),
        ));
    }
    Ok(1.0 / max)
}

/// Shannon entropy with `0 log 0 = 0`.
pub fn entropy_uncertainty(p: &ProbabilityVector) -> f64 {
    shannon_entropy(&p.p)
}

pub(crate) fn shannon_entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// `E_{p~Dir(α)}[-log p_label] = ψ(α_0) - ψ(α_label)`.
pub fn expected_cross_entropy(alpha: &DirichletParams, label: usize) -> Result<f64> {
    let c = alpha.num_classes();
    if label >= c {
        return Err(Error::InvalidParameter(format!(
            "label {label} out of range for {c} classes"
        )));
    }
    Ok(digamma(alpha.alpha0()) - digamma(alpha.alpha[label]))
}

/// Differential entropy of `Dir(α)`:
/// `log B(α) + (α_0 - c) ψ(α_0) - Σ_k (α_k - 1) ψ(α_k)`.
pub fn dirichlet_entropy(alpha: &DirichletParams) -> f64 {
    dirichlet_entropy_raw(alpha.alpha())
}

pub(crate) fn dirichlet_entropy_raw(alpha: &[f64]) -> f64 {
    let c = alpha.len() as f64;
    let a0: f64 = alpha.iter().sum();
    let log_beta = alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(a0);
    let tail: f64 = alpha.iter().map(|&a| (a - 1.0) * digamma(a)).sum();
    log_beta + (a0 - c) * digamma(a0) - tail
}
