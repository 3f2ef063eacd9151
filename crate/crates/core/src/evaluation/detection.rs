use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{aupr, auroc};
use super::partition::EntityPartition;
use crate::error::{Error, Result};
use crate::evidential::UncertaintyReport;
use crate::ner_data::Entity;

/// The five uncertainty measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Vacuity,
    Dissonance,
    Aleatoric,
    Epistemic,
    Entropy,
}

impl Measure {
    pub const ALL: [Measure; 5] = [
        Measure::Vacuity,
        Measure::Dissonance,
        Measure::Aleatoric,
        Measure::Epistemic,
        Measure::Entropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Vacuity => "vacuity",
            Measure::Dissonance => "dissonance",
            Measure::Aleatoric => "aleatoric",
            Measure::Epistemic => "epistemic",
            Measure::Entropy => "entropy",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Measure::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown uncertainty measure {s:?}")))
    }
}

/// Per-token values of the measures a predictor provides.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenUncertainty {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vacuity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dissonance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aleatoric: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epistemic: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy: Option<f64>,
}

impl TokenUncertainty {
    pub fn get(&self, measure: Measure) -> Option<f64> {
        match measure {
            Measure::Vacuity => self.vacuity,
            Measure::Dissonance => self.dissonance,
            Measure::Aleatoric => self.aleatoric,
            Measure::Epistemic => self.epistemic,
            Measure::Entropy => self.entropy,
        }
    }
}

impl From<&UncertaintyReport> for TokenUncertainty {
    fn from(r: &UncertaintyReport) -> Self {
        Self {
            vacuity: Some(r.vacuity),
            dissonance: Some(r.dissonance),
            aleatoric: Some(r.aleatoric),
            epistemic: Some(r.epistemic),
            entropy: Some(r.entropy),
        }
    }
}

/// How token values combine into one entity value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Max,
}

impl FromStr for Aggregation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "max" => Ok(Aggregation::Max),
            other => Err(Error::InvalidConfig(format!(
                "unknown aggregation {other:?} (mean or max)"
            ))),
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Mean => "mean",
            Aggregation::Max => "max",
        })
    }
}

pub fn entity_uncertainty(values: &[f64], span: &Entity, mode: Aggregation) -> Result<f64> {
    if span.end < span.start || span.end >= values.len() {
        return Err(Error::InvalidInput(format!(
            "span ({}, {}) outside a sentence of {} tokens",
            span.start,
            span.end,
            values.len()
        )));
    }
    let vals = &values[span.start..=span.end];
    Ok(match mode {
        Aggregation::Mean => vals.iter().sum::<f64>() / vals.len() as f64,
        Aggregation::Max => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// A sentence's entity partition together with its token uncertainties.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSentence {
    pub partition: EntityPartition,
    pub tokens: Vec<TokenUncertainty>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureScores {
    pub auroc: f64,
    pub aupr: f64,
}

/// AUROC/AUPR per available measure for one detection subtask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub measures: BTreeMap<Measure, MeasureScores>,
    pub positive_count: usize,
    pub negative_count: usize,
}

impl DetectionResult {
    pub fn get(&self, measure: Measure) -> Option<MeasureScores> {
        self.measures.get(&measure).copied()
    }
}

fn detect(
    sentences: &[ScoredSentence],
    mode: Aggregation,
    select: impl Fn(&EntityPartition) -> Vec<(&Entity, bool)>,
) -> Result<DetectionResult> {
    let mut labels = Vec::new();
    let mut spans = Vec::new();
    for (s, sentence) in sentences.iter().enumerate() {
        for (entity, positive) in select(&sentence.partition) {
            labels.push(positive);
            spans.push((s, entity));
        }
    }
    let positive_count = labels.iter().filter(|&&l| l).count();
    let negative_count = labels.len() - positive_count;
    if positive_count == 0 || negative_count == 0 {
        return Err(Error::UndefinedMetric(format!(
            "detection needs both classes ({positive_count} positive, {negative_count} negative)"
        )));
    }
    let mut measures = BTreeMap::new();
    'measures: for measure in Measure::ALL {
        let mut scores = Vec::with_capacity(spans.len());
        for &(s, entity) in &spans {
            let values: Option<Vec<f64>> = sentences[s].tokens.iter().map(|t| t.get(measure)).collect();
            match values {
                Some(v) => scores.push(entity_uncertainty(&v, entity, mode)?),
                None => continue 'measures,
            }
        }
        measures.insert(
            measure,
            MeasureScores {
                auroc: auroc(&scores, &labels)?,
                aupr: aupr(&scores, &labels)?,
            },
        );
    }
    Ok(DetectionResult {
        measures,
        positive_count,
        negative_count,
    })
}

/// OOD detection over `shared + unique_gt`: positive when the ground-truth
/// label was left out of training.
pub fn ood_eval(sentences: &[ScoredSentence], mode: Aggregation) -> Result<DetectionResult> {
    detect(sentences, mode, |p| {
        p.shared
            .iter()
            .chain(&p.unique_gt)
            .map(|f| (&f.entity, f.ood))
            .collect()
    })
}

/// Wrong-span detection over `shared + unique_gt + unique_pred`: positive for
/// the unmatched predictions.
pub fn ws_eval(sentences: &[ScoredSentence], mode: Aggregation) -> Result<DetectionResult> {
    detect(sentences, mode, |p| {
        p.shared
            .iter()
            .chain(&p.unique_gt)
            .map(|f| (&f.entity, false))
            .chain(p.unique_pred.iter().map(|e| (e, true)))
            .collect()
    })
}

/// Count-weighted combination of the OOD and WS scores.
pub fn weighted_score(ms_ood: f64, ms_ws: f64, n_shared: usize, n_ws: usize) -> Result<f64> {
    if n_shared + n_ws == 0 {
        return Err(Error::InvalidInput(
            "weighted score needs a positive total count".into(),
        ));
    }
    if n_ws == 0 {
        return Ok(ms_ood);
    }
    if n_shared == 0 {
        return Ok(ms_ws);
    }
    Ok((n_shared as f64 * ms_ood + n_ws as f64 * ms_ws) / (n_shared + n_ws) as f64)
}

/// Micro-averaged entity-level scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NerScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

/// Exact span-and-label matching, one entity list per sentence. With no gold
/// and no predicted entities every score is 1.
pub fn ner_scores(gold: &[Vec<Entity>], pred: &[Vec<Entity>]) -> Result<NerScores> {
    if gold.len() != pred.len() {
        return Err(Error::InvalidInput(format!(
            "{} gold sentences but {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    let mut correct = 0;
    for (g, p) in gold.iter().zip(pred) {
        correct += p.iter().filter(|e| g.contains(e)).count();
    }
    let n_gold: usize = gold.iter().map(Vec::len).sum();
    let n_pred: usize = pred.iter().map(Vec::len).sum();
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    let precision = if n_pred == 0 && n_gold > 0 {
        0.0
    } else {
        ratio(correct, n_pred)
    };
    let recall = if n_gold == 0 && n_pred > 0 {
        0.0
    } else {
        ratio(correct, n_gold)
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(NerScores {
        precision,
        recall,
        f1,
        gold: n_gold,
        predicted: n_pred,
        correct,
    })
}

pub fn ner_f1(gold: &[Vec<Entity>], pred: &[Vec<Entity>]) -> Result<f64> {
    Ok(ner_scores(gold, pred)?.f1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::partition_entities;

    #[test]
    fn entity_uncertainty_examples() {
        let v = [0.1, 0.2, 0.4, 0.7];
        let e = Entity::new(1, 2, "X");
        assert!((entity_uncertainty(&v, &e, Aggregation::Mean).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(entity_uncertainty(&v, &e, Aggregation::Max).unwrap(), 0.4);
        assert_eq!(
            entity_uncertainty(&v, &Entity::new(3, 3, "X"), Aggregation::Mean).unwrap(),
            0.7
        );
        assert!(entity_uncertainty(&v, &Entity::new(3, 4, "X"), Aggregation::Mean).is_err());
    }

    #[test]
    fn weighted_score_examples() {
        let s = weighted_score(81.29, 60.60, 3060, 502).unwrap();
        assert!((s - 78.37).abs() < 0.01);
        assert_eq!(weighted_score(0.7, 0.1, 10, 0).unwrap(), 0.7);
        assert!((weighted_score(0.42, 0.42, 7, 3).unwrap() - 0.42).abs() < 1e-15);
        assert!(weighted_score(0.5, 0.5, 0, 0).is_err());
    }

    #[test]
    fn ner_f1_examples() {
        let gold = vec![vec![Entity::new(0, 0, "A"), Entity::new(2, 3, "B")]];
        assert_eq!(ner_f1(&gold, &gold).unwrap(), 1.0);
        assert_eq!(ner_f1(&gold, &[vec![]]).unwrap(), 0.0);
        let pred = vec![vec![Entity::new(0, 0, "A"), Entity::new(2, 2, "B")]];
        let s = ner_scores(&gold, &pred).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
        assert_eq!(ner_f1(&[vec![]], &[vec![]]).unwrap(), 1.0);
    }

    fn tokens(values: &[f64]) -> Vec<TokenUncertainty> {
        values
            .iter()
            .map(|&v| TokenUncertainty {
                vacuity: Some(v),
                entropy: Some(-v),
                ..Default::default()
            })
            .collect()
    }

    #[test]
    fn ood_detection_uses_ground_truth_entities() {
        // token values: OOD spans get 0.9, ID spans 0.1
        let gt = vec![
            Entity::new(0, 0, "ID"),
            Entity::new(2, 3, "OUT"),
            Entity::new(5, 5, "ID"),
        ];
        let pred = vec![Entity::new(0, 0, "ID"), Entity::new(3, 4, "ID")];
        let partition = partition_entities(&gt, &pred, |l| l == "OUT").unwrap();
        let s = ScoredSentence {
            partition,
            tokens: tokens(&[0.1, 0.5, 0.9, 0.9, 0.5, 0.1]),
        };
        let r = ood_eval(std::slice::from_ref(&s), Aggregation::Mean).unwrap();
        assert_eq!((r.positive_count, r.negative_count), (1, 2));
        assert_eq!(r.get(Measure::Vacuity).unwrap().auroc, 1.0);
        assert_eq!(r.get(Measure::Entropy).unwrap().auroc, 0.0);
        assert!(r.get(Measure::Dissonance).is_none());

        // partial-overlap prediction (3, 4) is the only wrong span
        let w = ws_eval(std::slice::from_ref(&s), Aggregation::Mean).unwrap();
        assert_eq!((w.positive_count, w.negative_count), (1, 3));
        // (3,4) mean 0.7 versus 0.1, 0.9, 0.1
        assert!((w.get(Measure::Vacuity).unwrap().auroc - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_subtasks_are_undefined() {
        let gt = vec![Entity::new(0, 0, "ID")];
        let partition = partition_entities(&gt, &gt, |_| false).unwrap();
        let s = ScoredSentence {
            partition,
            tokens: tokens(&[0.3]),
        };
        assert!(matches!(
            ood_eval(std::slice::from_ref(&s), Aggregation::Mean),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(matches!(
            ws_eval(&[s], Aggregation::Mean),
            Err(Error::UndefinedMetric(_))
        ));
    }
}
