//! In-memory pipeline stages shared by the commands.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use slpn_core::evaluation::{DumpHeader, PredictionDump, SentenceRecord, TestSplit, TokenUncertainty};
use slpn_core::ner_data::{
    generate_synthetic_corpus, label_counts, leave_out_split, parse_conll, write_manifest, Sentence, SplitSpec, TagSet,
    Vocabulary,
};
use slpn_core::token_pn::parse_embedding_file;
use slpn_core::training::{
    mc_dropout_predict, predict, train, CorpusInfo, Dataset, ModelState, ModelVariant, SentenceInput, TrainingConfig,
};
use slpn_core::{Error, Result};

use crate::config::{EvaluationConfig, RunConfig};

/// The trainable configurations exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    TokenPn,
    Slpn,
    SlpnNoSoftplus,
    DropoutBaseline,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::TokenPn,
        Variant::Slpn,
        Variant::SlpnNoSoftplus,
        Variant::DropoutBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::TokenPn => "token_pn",
            Variant::Slpn => "slpn",
            Variant::SlpnNoSoftplus => "slpn-no-softplus",
            Variant::DropoutBaseline => "dropout-baseline",
        }
    }

    /// `base` with the model variant and softplus switch this name selects.
    pub fn apply(self, base: &TrainingConfig) -> TrainingConfig {
        let mut c = base.clone();
        let (variant, softplus_on) = match self {
            Variant::TokenPn => (ModelVariant::TokenPn, base.softplus_on),
            Variant::Slpn => (ModelVariant::Slpn, true),
            Variant::SlpnNoSoftplus => (ModelVariant::Slpn, false),
            Variant::DropoutBaseline => (ModelVariant::DropoutBaseline, base.softplus_on),
        };
        c.model_variant = variant;
        c.softplus_on = softplus_on;
        c
    }

    /// The name a training configuration corresponds to.
    pub fn of(config: &TrainingConfig) -> Self {
        match (config.model_variant, config.softplus_on) {
            (ModelVariant::TokenPn, _) => Variant::TokenPn,
            (ModelVariant::Slpn, true) => Variant::Slpn,
            (ModelVariant::Slpn, false) => Variant::SlpnNoSoftplus,
            (ModelVariant::DropoutBaseline, _) => Variant::DropoutBaseline,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slpn-no-softplus" | "slpn_no_softplus" => Ok(Variant::SlpnNoSoftplus),
            other => match other.parse::<ModelVariant>() {
                Ok(ModelVariant::TokenPn) => Ok(Variant::TokenPn),
                Ok(ModelVariant::Slpn) => Ok(Variant::Slpn),
                Ok(ModelVariant::DropoutBaseline) => Ok(Variant::DropoutBaseline),
                Err(_) => Err(Error::InvalidConfig(format!(
                    "unknown variant {other:?} (token_pn, slpn, slpn-no-softplus, dropout-baseline)"
                ))),
            },
        }
    }
}

/// Tagged sentences plus optional contextual embeddings aligned with them.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
    pub contextual: Option<Vec<Array2<f64>>>,
}

impl Corpus {
    pub fn new(sentences: Vec<Sentence>) -> Self {
        Self {
            sentences,
            contextual: None,
        }
    }

    /// The configured corpus file, or the synthetic corpus when none is set.
    pub fn load(config: &RunConfig) -> Result<Self> {
        let sentences = match &config.paths.corpus {
            Some(path) => parse_conll(path)?,
            None => generate_synthetic_corpus(&config.synthetic).0,
        };
        let contextual = match &config.paths.embeddings {
            None => None,
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                let blocks = parse_embedding_file(&text, path)?;
                if blocks.len() != sentences.len() {
                    return Err(Error::InvalidInput(format!(
                        "{}: {} embedding blocks for {} sentences",
                        path.display(),
                        blocks.len(),
                        sentences.len()
                    )));
                }
                for (i, (b, s)) in blocks.iter().zip(&sentences).enumerate() {
                    if b.embeddings.nrows() != s.len() {
                        return Err(Error::InvalidInput(format!(
                            "{}: block {i} has {} rows for a sentence of {} tokens",
                            path.display(),
                            b.embeddings.nrows(),
                            s.len()
                        )));
                    }
                }
                Some(blocks.into_iter().map(|b| b.embeddings).collect())
            }
        };
        Ok(Self { sentences, contextual })
    }

    fn select(&self, indices: &[usize]) -> Vec<&Sentence> {
        indices.iter().map(|&i| &self.sentences[i]).collect()
    }

    fn contextual_for(&self, indices: &[usize]) -> Option<Vec<Array2<f64>>> {
        self.contextual
            .as_ref()
            .map(|c| indices.iter().map(|&i| c[i].clone()).collect())
    }
}

/// Hex SHA-256 of the manifest text.
pub fn fingerprint(manifest: &str) -> String {
    Sha256::digest(manifest.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub fingerprint: String,
    pub label_counts: BTreeMap<String, usize>,
    pub in_domain_labels: Vec<String>,
    pub left_out_labels: Vec<String>,
    pub in_domain_sentences: usize,
    pub out_of_domain_sentences: usize,
    pub train: usize,
    pub val: usize,
    pub test_in: usize,
    pub test_out: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub split: SplitSpec,
    pub manifest: String,
    pub summary: SplitSummary,
}

pub fn prepare(corpus: &Corpus, m: usize, seed: u64) -> Result<Prepared> {
    let split = leave_out_split(&corpus.sentences, m, seed)?;
    let manifest = write_manifest(&split);
    let summary = SplitSummary {
        fingerprint: fingerprint(&manifest),
        label_counts: label_counts(&corpus.sentences),
        in_domain_labels: split.in_domain_labels.clone(),
        left_out_labels: split.left_out_labels.clone(),
        in_domain_sentences: split.train.len() + split.val.len() + split.test_in.len(),
        out_of_domain_sentences: split.test_out.len(),
        train: split.train.len(),
        val: split.val.len(),
        test_in: split.test_in.len(),
        test_out: split.test_out.len(),
    };
    Ok(Prepared {
        split,
        manifest,
        summary,
    })
}

/// Trains on the split's training sentences with a vocabulary built from them
/// and selects parameters on the validation sentences.
pub fn train_model(
    corpus: &Corpus,
    split: &SplitSpec,
    fingerprint: &str,
    config: &TrainingConfig,
) -> Result<ModelState> {
    let train_sentences = corpus.select(&split.train);
    let vocabulary = Vocabulary::build(train_sentences.iter().copied());
    let tagset = TagSet::new(&split.in_domain_labels);
    let mut config = config.clone();
    config.model.contextual_dim = corpus.contextual.as_ref().and_then(|c| c.first()).map(|m| m.ncols());

    let mut train_data = Dataset::from_sentences(train_sentences, &vocabulary, &tagset)?;
    train_data.contextual = corpus.contextual_for(&split.train);
    let mut val_data = Dataset::from_sentences(corpus.select(&split.val), &vocabulary, &tagset)?;
    val_data.contextual = corpus.contextual_for(&split.val);

    let mut model = train(&config, &train_data, &val_data)?;
    model.corpus = Some(CorpusInfo {
        vocabulary,
        tagset,
        left_out_labels: split.left_out_labels.clone(),
        fingerprint: fingerprint.to_string(),
    });
    Ok(model)
}

/// Predicts every test sentence (in-distribution first, then OOD) and
/// collects the records of a prediction dump.
pub fn predict_dump(
    model: &ModelState,
    corpus: &Corpus,
    split: &SplitSpec,
    eval: &EvaluationConfig,
) -> Result<PredictionDump> {
    let info = model
        .corpus
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("checkpoint carries no vocabulary or tag set".into()))?;
    let variant = Variant::of(&model.config);
    let header = DumpHeader::new(variant.name(), info.left_out_labels.clone(), info.fingerprint.clone());
    let mut records = Vec::with_capacity(split.test_in.len() + split.test_out.len());
    let parts = [
        (TestSplit::TestIn, &split.test_in),
        (TestSplit::TestOut, &split.test_out),
    ];
    for (which, indices) in parts {
        for &idx in indices {
            let sentence = &corpus.sentences[idx];
            let ids = info.vocabulary.ids(&sentence.tokens);
            let input = SentenceInput {
                tokens: &ids,
                contextual: corpus.contextual.as_ref().map(|c| c[idx].view()),
            };
            let (classes, uncertainty): (Vec<usize>, Vec<TokenUncertainty>) = if model.variant().is_evidential() {
                predict(model, &input)?
                    .iter()
                    .map(|p| (p.class, TokenUncertainty::from(&p.uncertainty)))
                    .unzip()
            } else {
                let seed = eval.mc_seed.wrapping_add(idx as u64);
                mc_dropout_predict(model, &input, model.config.mc_passes, seed)?
                    .iter()
                    .map(|p| {
                        let u = TokenUncertainty {
                            aleatoric: Some(p.aleatoric),
                            epistemic: Some(p.epistemic),
                            entropy: Some(p.entropy),
                            ..Default::default()
                        };
                        (p.class, u)
                    })
                    .unzip()
            };
            records.push(SentenceRecord {
                split: which,
                index: idx,
                tokens: sentence.tokens.clone(),
                gold: sentence.tags.clone(),
                pred: classes.iter().map(|&c| info.tagset.tag(c).clone()).collect(),
                uncertainty,
            });
        }
    }
    Ok(PredictionDump { header, records })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            assert_eq!(Variant::of(&v.apply(&TrainingConfig::default())), v);
        }
        assert!("bert".parse::<Variant>().is_err());
        assert!(!Variant::SlpnNoSoftplus.apply(&TrainingConfig::default()).softplus_on);
    }

    #[test]
    fn fingerprint_is_sha256() {
        assert_eq!(
            fingerprint(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
