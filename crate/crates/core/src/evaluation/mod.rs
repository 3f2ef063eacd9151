//! Entity-level evaluation: the three-way partition of ground-truth and
//! predicted entities, OOD and wrong-span (WS) detection by AUROC/AUPR over
//! each uncertainty measure, the count-weighted combined score, and NER F1.

mod detection;
mod dump;
mod metrics;
mod partition;

pub use detection::{
    entity_uncertainty, ner_f1, ner_scores, ood_eval, weighted_score, ws_eval, Aggregation, DetectionResult, Measure,
    MeasureScores, NerScores, ScoredSentence, TokenUncertainty,
};
pub use dump::{
    evaluate_dump, parse_dump, write_dump, DumpHeader, EntityCounts, EvaluationReport, PredictionDump, SentenceRecord,
    TestSplit, DUMP_SCHEMA, DUMP_VERSION,
};
pub use metrics::{aupr, auroc};
pub use partition::{partition_entities, EntityPartition, FlavoredEntity};
