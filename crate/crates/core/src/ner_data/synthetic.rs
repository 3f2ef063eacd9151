//! Seeded synthetic NER corpora. Every semantic label owns a disjoint token
//! sub-vocabulary; "O" tokens come from a shared filler vocabulary.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tags::{encode_bioes, Entity, Sentence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub labels: Vec<String>,
    /// The label planted as rare; it only appears in a `planted_ood_fraction`
    /// share of sentences.
    pub rare_label: String,
    pub entity_vocab_size: usize,
    pub filler_vocab_size: usize,
    pub sentences: usize,
    pub planted_ood_fraction: f64,
    pub min_filler: usize,
    pub max_filler: usize,
    pub max_entities: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            labels: ["ACT", "DIR", "GEN", "LOC", "ORG", "PER"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            rare_label: "GEN".into(),
            entity_vocab_size: 30,
            filler_vocab_size: 60,
            sentences: 2000,
            planted_ood_fraction: 0.12,
            min_filler: 3,
            max_filler: 9,
            max_entities: 3,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticHints {
    pub rare_label: String,
    /// Sentences that received the rare label.
    pub rare_sentences: Vec<usize>,
}

pub fn entity_token(label: &str, i: usize) -> String {
    format!("{}_{i}", label.to_lowercase())
}

pub fn filler_token(i: usize) -> String {
    format!("w{i}")
}

pub fn generate_synthetic_corpus(spec: &SyntheticSpec) -> (Vec<Sentence>, SyntheticHints) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let common: Vec<&String> = spec.labels.iter().filter(|l| **l != spec.rare_label).collect();
    let rare_present = spec.labels.contains(&spec.rare_label);

    let mut sentences = Vec::with_capacity(spec.sentences);
    let mut rare_sentences = Vec::new();
    for idx in 0..spec.sentences {
        let n_ent = rng.random_range(1..=spec.max_entities.max(1));
        let mut labels: Vec<&str> = (0..n_ent)
            .map(|_| common.choose(&mut rng).expect("at least one common label").as_str())
            .collect();
        if rare_present && rng.random::<f64>() < spec.planted_ood_fraction {
            let slot = rng.random_range(0..labels.len());
            labels[slot] = spec.rare_label.as_str();
            rare_sentences.push(idx);
        }

        let n_filler = rng.random_range(spec.min_filler..=spec.max_filler.max(spec.min_filler));
        // Fillers are distributed over n_ent + 1 gaps; inner gaps get at least
        // one token so adjacent entities never touch.
        let mut gaps = vec![0usize; n_ent + 1];
        for g in gaps.iter_mut().take(n_ent).skip(1) {
            *g = 1;
        }
        let reserved: usize = gaps.iter().sum();
        for _ in reserved..n_filler.max(reserved) {
            let g = rng.random_range(0..gaps.len());
            gaps[g] += 1;
        }

        let mut tokens = Vec::new();
        let mut entities = Vec::new();
        for (slot, gap) in gaps.iter().enumerate() {
            for _ in 0..*gap {
                tokens.push(filler_token(rng.random_range(0..spec.filler_vocab_size)));
            }
            if slot < n_ent {
                let label = labels[slot];
                let len = rng.random_range(1..=3);
                let start = tokens.len();
                for _ in 0..len {
                    tokens.push(entity_token(label, rng.random_range(0..spec.entity_vocab_size)));
                }
                entities.push(Entity::new(start, start + len - 1, label));
            }
        }
        let tags = encode_bioes(&entities, tokens.len()).expect("generated spans are disjoint");
        sentences.push(Sentence { tokens, tags });
    }
    (
        sentences,
        SyntheticHints {
            rare_label: spec.rare_label.clone(),
            rare_sentences,
        },
    )
}
