use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ModelVariant, TrainingConfig};
use super::network::{sentence_loss, ForwardSpec, Network, SentenceInput};
use super::optim::Adam;
use crate::error::{Error, Result};
use crate::evidential::argmax;
use crate::ner_data::{Sentence, TagSet, Vocabulary};
use crate::params::Parameters;
use crate::token_pn::{build_token_priors, LabeledSequence, TokenPriorTable};

/// Labeled sentences over a fixed vocabulary and class set, optionally with
/// precomputed contextual embeddings (one `l × d` matrix per sentence).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vocab_size: usize,
    pub num_classes: usize,
    pub sentences: Vec<LabeledSequence>,
    pub contextual: Option<Vec<Array2<f64>>>,
}

impl Dataset {
    pub fn new(vocab_size: usize, num_classes: usize, sentences: Vec<LabeledSequence>) -> Self {
        Self {
            vocab_size,
            num_classes,
            sentences,
            contextual: None,
        }
    }

    /// Maps tokens and BIOES tags to ids. Fails on tags outside `tagset`.
    pub fn from_sentences<'a>(
        sentences: impl IntoIterator<Item = &'a Sentence>,
        vocabulary: &Vocabulary,
        tagset: &TagSet,
    ) -> Result<Self> {
        let sentences = sentences
            .into_iter()
            .map(|s| {
                Ok(LabeledSequence {
                    tokens: vocabulary.ids(&s.tokens),
                    labels: tagset.classes(&s.tags)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self::new(vocabulary.len(), tagset.num_classes(), sentences))
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(|s| s.tokens.len()).sum()
    }

    pub fn input(&self, index: usize) -> SentenceInput<'_> {
        SentenceInput {
            tokens: &self.sentences[index].tokens,
            contextual: self.contextual.as_ref().map(|c| c[index].view()),
        }
    }

    /// A dataset holding the given sentences only.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            vocab_size: self.vocab_size,
            num_classes: self.num_classes,
            sentences: indices.iter().map(|&i| self.sentences[i].clone()).collect(),
            contextual: self
                .contextual
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i].clone()).collect()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.sentences.iter().enumerate() {
            if s.tokens.is_empty() || s.tokens.len() != s.labels.len() {
                return Err(Error::InvalidInput(format!(
                    "sentence {i}: {} tokens, {} labels",
                    s.tokens.len(),
                    s.labels.len()
                )));
            }
            if let Some(&t) = s.tokens.iter().find(|&&t| t >= self.vocab_size) {
                return Err(Error::InvalidInput(format!(
                    "sentence {i}: token id {t} outside the vocabulary"
                )));
            }
            if let Some(&y) = s.labels.iter().find(|&&y| y >= self.num_classes) {
                return Err(Error::InvalidParameter(format!("sentence {i}: label {y} out of range")));
            }
        }
        if let Some(ctx) = &self.contextual {
            if ctx.len() != self.sentences.len() {
                return Err(Error::InvalidInput(
                    "one contextual matrix per sentence is required".into(),
                ));
            }
            let width = ctx.first().map_or(0, |m| m.ncols());
            for (i, (m, s)) in ctx.iter().zip(&self.sentences).enumerate() {
                if m.nrows() != s.tokens.len() || m.ncols() != width {
                    return Err(Error::InvalidInput(format!(
                        "sentence {i}: contextual matrix is {:?}",
                        m.dim()
                    )));
                }
            }
        }
        Ok(())
    }

    fn contextual_dim(&self) -> Option<usize> {
        self.contextual.as_ref().and_then(|c| c.first()).map(|m| m.ncols())
    }
}

/// Bookkeeping from a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub epochs_run: usize,
    /// Epoch whose parameters were kept (0 means the initialization).
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    /// Mean batch loss per epoch.
    pub loss_history: Vec<f64>,
    pub val_accuracy_history: Vec<f64>,
    pub val_loss_history: Vec<f64>,
}

/// Vocabulary, tag set and split provenance, attached by the pipeline so a
/// checkpoint is self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusInfo {
    pub vocabulary: Vocabulary,
    pub tagset: TagSet,
    pub left_out_labels: Vec<String>,
    pub fingerprint: String,
}

/// A trained model with everything needed for prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub config: TrainingConfig,
    pub network: Network,
    pub priors: TokenPriorTable,
    pub metadata: TrainingMetadata,
    pub corpus: Option<CorpusInfo>,
}

impl ModelState {
    /// A freshly initialized model with priors counted on `train`.
    pub fn initialize(config: &TrainingConfig, train: &Dataset) -> Result<Self> {
        config.validate()?;
        train.validate()?;
        if train.is_empty() {
            return Err(Error::InvalidInput("training data is empty".into()));
        }
        if config.model.contextual_dim != train.contextual_dim() {
            return Err(Error::InvalidConfig(format!(
                "model.contextual_dim is {:?} but the data carries {:?}",
                config.model.contextual_dim,
                train.contextual_dim()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let priors = build_token_priors(&train.sentences, train.num_classes)?;
        let network = Network::new(config, train.vocab_size, train.num_classes, &mut rng)?;
        Ok(Self {
            config: config.clone(),
            network,
            priors,
            metadata: TrainingMetadata {
                seed: config.seed,
                epochs_run: 0,
                best_epoch: 0,
                best_val_accuracy: 0.0,
                loss_history: Vec::new(),
                val_accuracy_history: Vec::new(),
                val_loss_history: Vec::new(),
            },
            corpus: None,
        })
    }

    pub fn variant(&self) -> ModelVariant {
        self.config.model_variant
    }

    pub fn num_classes(&self) -> usize {
        self.network.num_classes()
    }

    pub(crate) fn spec(&self) -> ForwardSpec<'_> {
        ForwardSpec {
            variant: self.config.model_variant,
            softplus_on: self.config.softplus_on,
            priors: &self.priors,
        }
    }

    /// Deterministic forward pass; returns `β_agg` (evidential variants) or
    /// logits (dropout baseline).
    pub fn output(&self, input: &SentenceInput) -> Result<Array2<f64>> {
        Ok(self.network.forward(&self.spec(), input, None)?.output)
    }

    /// Token-averaged training loss over a batch, without dropout.
    pub fn batch_loss(&self, data: &Dataset) -> Result<f64> {
        let spec = self.spec();
        let mut total = 0.0;
        for i in 0..data.len() {
            let trace = self.network.forward(&spec, &data.input(i), None)?;
            total += sentence_loss(
                spec.variant,
                trace.output.view(),
                &data.sentences[i].labels,
                self.config.lambda_reg,
            )
            .0;
        }
        Ok(total / data.num_tokens() as f64)
    }

    /// Loss and its gradient with respect to every parameter, without dropout.
    pub fn loss_and_gradient(&self, data: &Dataset) -> Result<(f64, Network)> {
        self.accumulate(data, &(0..data.len()).collect::<Vec<_>>(), None)
    }

    fn accumulate(
        &self,
        data: &Dataset,
        indices: &[usize],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Network)> {
        let spec = self.spec();
        let mut grad = self.network.zeros_like();
        let mut total = 0.0;
        let mut count = 0usize;
        for &i in indices {
            let input = data.input(i);
            let mask = rng
                .as_deref_mut()
                .map(|r| dropout_mask(input.tokens.len(), self.context_dim(), self.config.dropout_rate, r));
            let trace = self.network.forward(&spec, &input, mask)?;
            let labels = &data.sentences[i].labels;
            let (loss, d_out) = sentence_loss(spec.variant, trace.output.view(), labels, self.config.lambda_reg);
            self.network.backward(&spec, &input, &trace, d_out.view(), &mut grad);
            total += loss;
            count += labels.len();
        }
        let scale = 1.0 / count as f64;
        grad.visit_mut("", &mut |_, s| s.iter_mut().for_each(|g| *g *= scale));
        Ok((total * scale, grad))
    }

    pub(crate) fn context_dim(&self) -> usize {
        self.network.mlp.input_dim()
    }

    /// Predicted class per token: argmax of `β_agg` (equivalently of the
    /// expected aggregated probability) or of the logits.
    pub fn predict_classes(&self, input: &SentenceInput) -> Result<Vec<usize>> {
        let out = self.output(input)?;
        let evidential = self.variant().is_evidential();
        Ok(out
            .rows()
            .into_iter()
            .map(|r| {
                let row: Vec<f64> = if evidential {
                    r.iter().map(|b| b.max(0.0)).collect()
                } else {
                    r.to_vec()
                };
                argmax(&row)
            })
            .collect())
    }

    /// Token-level accuracy over a dataset.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        let mut correct = 0usize;
        let mut total = 0usize;
        for i in 0..data.len() {
            let pred = self.predict_classes(&data.input(i))?;
            correct += pred
                .iter()
                .zip(&data.sentences[i].labels)
                .filter(|(a, b)| a == b)
                .count();
            total += pred.len();
        }
        if total == 0 {
            return Err(Error::InvalidInput("no tokens to score".into()));
        }
        Ok(correct as f64 / total as f64)
    }
}

/// Inverted dropout mask: each unit is kept with probability `1 - rate` and
/// scaled by `1 / (1 - rate)`.
pub(crate) fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut impl Rng) -> Array2<f64> {
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_fn((rows, cols), |_| if rng.random::<f64>() < rate { 0.0 } else { keep })
}

/// Mini-batch training under the evidential loss (or cross-entropy for the
/// dropout baseline). Returns the parameters with the best validation token
/// accuracy, ties going to the lower validation loss.
pub fn train(config: &TrainingConfig, train_data: &Dataset, val_data: &Dataset) -> Result<ModelState> {
    let mut model = ModelState::initialize(config, train_data)?;
    val_data.validate()?;
    if val_data.is_empty() {
        return Err(Error::InvalidInput("validation data is empty".into()));
    }
    if val_data.num_classes != train_data.num_classes || val_data.contextual_dim() != train_data.contextual_dim() {
        return Err(Error::InvalidInput(
            "training and validation data disagree on shape".into(),
        ));
    }

    // Stream separate from parameter initialization.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut adam = Adam::new(model.network.num_parameters(), config.learning_rate);
    let use_dropout = config.model_variant == ModelVariant::DropoutBaseline && config.dropout_rate > 0.0;

    let mut best_network = model.network.clone();
    let mut best_accuracy = model.accuracy(val_data)?;
    let mut best_loss = model.batch_loss(val_data)?;
    let mut best_epoch = 0;
    let mut order: Vec<usize> = (0..train_data.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let (loss, grad) = model.accumulate(train_data, chunk, use_dropout.then_some(&mut rng))?;
            if !loss.is_finite() || !grad.all_finite() {
                return Err(Error::TrainingFailure { epoch, batch: b, loss });
            }
            adam.step(&mut model.network, &grad);
            if !model.network.all_finite() {
                return Err(Error::TrainingFailure { epoch, batch: b, loss });
            }
            epoch_loss += loss;
            batches += 1;
        }
        model.metadata.loss_history.push(epoch_loss / batches as f64);
        let accuracy = model.accuracy(val_data)?;
        let val_loss = model.batch_loss(val_data)?;
        model.metadata.val_accuracy_history.push(accuracy);
        model.metadata.val_loss_history.push(val_loss);
        // ties in accuracy go to the lower validation loss
        if accuracy > best_accuracy || (accuracy == best_accuracy && val_loss < best_loss) {
            best_accuracy = accuracy;
            best_loss = val_loss;
            best_epoch = epoch;
            best_network = model.network.clone();
        }
    }

    model.network = best_network;
    model.metadata.epochs_run = config.epochs;
    model.metadata.best_epoch = best_epoch;
    model.metadata.best_val_accuracy = best_accuracy;
    Ok(model)
}
