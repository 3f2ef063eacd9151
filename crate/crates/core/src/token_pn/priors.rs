use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidential::ProbabilityVector;

/// A sentence as token ids with one class index per token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSequence {
    pub tokens: Vec<usize>,
    pub labels: Vec<usize>,
}

/// Per-token class distributions counted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenPriorTable {
    num_classes: usize,
    total_token_count: u64,
    counts: BTreeMap<usize, Vec<u64>>,
    #[serde(skip)]
    probs: BTreeMap<usize, ProbabilityVector>,
    #[serde(skip)]
    uniform: Option<ProbabilityVector>,
}

impl TokenPriorTable {
    fn from_counts(num_classes: usize, counts: BTreeMap<usize, Vec<u64>>) -> Self {
        let total_token_count = counts.values().flatten().sum();
        let mut table = Self {
            num_classes,
            total_token_count,
            counts,
            probs: BTreeMap::new(),
            uniform: None,
        };
        table.rebuild_cache();
        table
    }

    /// Recomputes the normalized vectors; needed after deserialization.
    pub fn rebuild_cache(&mut self) {
        self.probs = self
            .counts
            .iter()
            .map(|(&tok, c)| {
                let n: u64 = c.iter().sum();
                let p = c.iter().map(|&x| x as f64 / n as f64).collect();
                (tok, ProbabilityVector::new(p).expect("normalized counts"))
            })
            .collect();
        self.uniform = Some(ProbabilityVector::uniform(self.num_classes));
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// `N`: the number of labeled training tokens.
    pub fn total_token_count(&self) -> u64 {
        self.total_token_count
    }

    pub fn counts(&self, token: usize) -> Option<&[u64]> {
        self.counts.get(&token).map(Vec::as_slice)
    }

    /// `P(k | token)`; tokens never seen in training get the uniform vector.
    pub fn prior(&self, token: usize) -> &ProbabilityVector {
        self.probs
            .get(&token)
            .unwrap_or_else(|| self.uniform.as_ref().expect("cache built"))
    }

    pub fn vocabulary_size(&self) -> usize {
        self.counts.len()
    }
}

pub fn build_token_priors(corpus: &[LabeledSequence], num_classes: usize) -> Result<TokenPriorTable> {
    if num_classes < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 classes, got {num_classes}"
        )));
    }
    let mut counts: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for (s, seq) in corpus.iter().enumerate() {
        if seq.tokens.len() != seq.labels.len() {
            return Err(Error::InvalidInput(format!(
                "sentence {s}: tokens and labels differ in length"
            )));
        }
        for (&tok, &label) in seq.tokens.iter().zip(&seq.labels) {
            if label >= num_classes {
                return Err(Error::InvalidInput(format!(
                    "sentence {s}: label {label} out of range for {num_classes} classes"
                )));
            }
            counts.entry(tok).or_insert_with(|| vec![0; num_classes])[label] += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::InvalidInput(
            "cannot build token priors from an empty corpus".into(),
        ));
    }
    Ok(TokenPriorTable::from_counts(num_classes, counts))
}
