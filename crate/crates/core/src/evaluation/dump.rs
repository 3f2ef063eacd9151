//! Line-oriented prediction dumps and their evaluation.
//!
//! A dump is JSON lines: a header object first, then one record per test
//! sentence. The header carries `schema` and `version`; readers reject any
//! other combination.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::detection::{
    ner_scores, ood_eval, weighted_score, ws_eval, Aggregation, DetectionResult, Measure, MeasureScores, NerScores,
    ScoredSentence, TokenUncertainty,
};
use super::partition::partition_entities;
use crate::error::{Error, Result};
use crate::ner_data::{decode_bioes, Tag};

pub const DUMP_SCHEMA: &str = "slpn-predictions";
pub const DUMP_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub schema: String,
    pub version: u32,
    pub variant: String,
    pub left_out_labels: Vec<String>,
    pub fingerprint: String,
}

impl DumpHeader {
    pub fn new(variant: impl Into<String>, left_out_labels: Vec<String>, fingerprint: impl Into<String>) -> Self {
        Self {
            schema: DUMP_SCHEMA.into(),
            version: DUMP_VERSION,
            variant: variant.into(),
            left_out_labels,
            fingerprint: fingerprint.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestSplit {
    TestIn,
    TestOut,
}

/// Gold and predicted tags with per-token uncertainties for one sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub split: TestSplit,
    /// Sentence index in the source corpus.
    pub index: usize,
    pub tokens: Vec<String>,
    pub gold: Vec<Tag>,
    pub pred: Vec<Tag>,
    pub uncertainty: Vec<TokenUncertainty>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionDump {
    pub header: DumpHeader,
    pub records: Vec<SentenceRecord>,
}

pub fn write_dump(dump: &PredictionDump) -> Result<String> {
    let mut out = serde_json::to_string(&dump.header)?;
    out.push('\n');
    for r in &dump.records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_dump(text: &str, origin: impl AsRef<Path>) -> Result<PredictionDump> {
    let origin = origin.as_ref();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty prediction dump".into()))?;
    let header: DumpHeader = serde_json::from_str(first).map_err(|e| parse_err(1, e.to_string()))?;
    if header.schema != DUMP_SCHEMA || header.version != DUMP_VERSION {
        return Err(Error::SchemaMismatch {
            expected: format!("{DUMP_SCHEMA} v{DUMP_VERSION}"),
            found: format!("{} v{}", header.schema, header.version),
        });
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let r: SentenceRecord = serde_json::from_str(line).map_err(|e| parse_err(i + 1, e.to_string()))?;
        let n = r.tokens.len();
        if r.gold.len() != n || r.pred.len() != n || r.uncertainty.len() != n {
            return Err(parse_err(i + 1, format!("record {} has inconsistent lengths", r.index)));
        }
        records.push(r);
    }
    Ok(PredictionDump { header, records })
}

/// Entity-set sizes, mirroring the columns of the entity-size table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityCounts {
    /// `shared + unique_gt + unique_pred`.
    pub total: usize,
    pub shared: usize,
    pub unique_pred: usize,
    pub unique_gt: usize,
    /// `shared + unique_gt`.
    pub ground_truth: usize,
    pub shared_ood: usize,
    pub unique_gt_ood: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub variant: String,
    pub fingerprint: String,
    pub aggregation: Aggregation,
    pub counts: EntityCounts,
    /// `None` when the subtask is undefined; the reason is in `notes`.
    pub ood: Option<DetectionResult>,
    pub ws: Option<DetectionResult>,
    pub weighted: BTreeMap<Measure, MeasureScores>,
    /// Entity-level scores over in-distribution test sentences.
    pub ner: NerScores,
    pub notes: Vec<String>,
}

/// Partitions every record, runs both detection subtasks, combines them and
/// scores NER on the in-distribution test sentences.
pub fn evaluate_dump(dump: &PredictionDump, mode: Aggregation) -> Result<EvaluationReport> {
    let left_out = &dump.header.left_out_labels;
    let mut scored = Vec::with_capacity(dump.records.len());
    let mut counts = EntityCounts::default();
    let mut gold_in = Vec::new();
    let mut pred_in = Vec::new();
    for r in &dump.records {
        let gold = decode_bioes(&r.gold);
        let pred = decode_bioes(&r.pred);
        let partition = partition_entities(&gold, &pred, |l| left_out.iter().any(|x| x == l))?;
        counts.shared += partition.shared.len();
        counts.unique_gt += partition.unique_gt.len();
        counts.unique_pred += partition.unique_pred.len();
        counts.shared_ood += partition.shared.iter().filter(|f| f.ood).count();
        counts.unique_gt_ood += partition.unique_gt.iter().filter(|f| f.ood).count();
        if r.split == TestSplit::TestIn {
            gold_in.push(gold);
            pred_in.push(pred);
        }
        scored.push(ScoredSentence {
            partition,
            tokens: r.uncertainty.clone(),
        });
    }
    counts.ground_truth = counts.shared + counts.unique_gt;
    counts.total = counts.ground_truth + counts.unique_pred;

    let mut notes = Vec::new();
    let mut attempt = |name: &str, result: Result<DetectionResult>| match result {
        Ok(r) => Ok(Some(r)),
        Err(Error::UndefinedMetric(msg)) => {
            notes.push(format!("{name} undefined: {msg}"));
            Ok(None)
        }
        Err(e) => Err(e),
    };
    let ood = attempt("OOD detection", ood_eval(&scored, mode))?;
    let ws = attempt("WS detection", ws_eval(&scored, mode))?;

    let mut weighted = BTreeMap::new();
    if let Some(ood) = &ood {
        for (&m, o) in &ood.measures {
            let combined = match ws.as_ref().and_then(|w| w.get(m)) {
                Some(w) => MeasureScores {
                    auroc: weighted_score(o.auroc, w.auroc, counts.shared, counts.unique_pred)?,
                    aupr: weighted_score(o.aupr, w.aupr, counts.shared, counts.unique_pred)?,
                },
                None if counts.unique_pred == 0 => *o,
                None => continue,
            };
            weighted.insert(m, combined);
        }
    }

    Ok(EvaluationReport {
        variant: dump.header.variant.clone(),
        fingerprint: dump.header.fingerprint.clone(),
        aggregation: mode,
        counts,
        ood,
        ws,
        weighted,
        ner: ner_scores(&gold_in, &pred_in)?,
        notes,
    })
}
