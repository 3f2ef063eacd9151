//! The operator commands. Each reads and writes files under the configured
//! working directory:
//!
//! ```text
//! workdir/
//!   manifest.txt
//!   summary.json
//!   runs/{variant}-s{seed}/
//!     checkpoint.json  loss.csv  predictions.jsonl  report.json  report.txt
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use slpn_core::evaluation::{evaluate_dump, parse_dump, write_dump, EvaluationReport, Measure};
use slpn_core::ner_data::{parse_manifest, write_conll, SplitSpec};
use slpn_core::training::{load_checkpoint, save_checkpoint, ModelState};
use slpn_core::{Error, Result};

use crate::config::{ReportFormat, RunConfig};
use crate::pipeline::{fingerprint, predict_dump, prepare, train_model, Corpus, SplitSummary, Variant};

/// File locations inside a working directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workdir {
    pub root: PathBuf,
}

impl Workdir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.txt")
    }

    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.json")
    }

    pub fn run_dir(&self, variant: Variant, seed: u64) -> PathBuf {
        self.root.join("runs").join(format!("{variant}-s{seed}"))
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Splits the corpus and writes the manifest and its summary.
pub fn cmd_prepare(config: &RunConfig) -> Result<SplitSummary> {
    let corpus = Corpus::load(config)?;
    let prepared = prepare(&corpus, config.split.m, config.split.seed)?;
    let dir = Workdir::new(&config.paths.workdir);
    write(&dir.manifest(), &prepared.manifest)?;
    write(
        &dir.summary(),
        &(serde_json::to_string_pretty(&prepared.summary)? + "\n"),
    )?;
    Ok(prepared.summary)
}

/// The corpus and split recorded by an earlier `prepare`.
pub fn load_prepared(config: &RunConfig) -> Result<(Corpus, SplitSpec, SplitSummary)> {
    let dir = Workdir::new(&config.paths.workdir);
    let manifest_path = dir.manifest();
    if !manifest_path.exists() {
        return Err(Error::InvalidInput(format!(
            "no split manifest at {}; run `prepare` first",
            manifest_path.display()
        )));
    }
    let manifest = read(&manifest_path)?;
    let summary: SplitSummary = serde_json::from_str(&read(&dir.summary())?)?;
    if fingerprint(&manifest) != summary.fingerprint {
        return Err(Error::InvalidInput(format!(
            "{} does not match the fingerprint in {}",
            manifest_path.display(),
            dir.summary().display()
        )));
    }
    let mut split = parse_manifest(&manifest)?;
    split.in_domain_labels = summary.in_domain_labels.clone();
    split.left_out_labels = summary.left_out_labels.clone();
    let corpus = Corpus::load(config)?;
    let n = corpus.sentences.len();
    if let Some(&bad) = [&split.train, &split.val, &split.test_in, &split.test_out]
        .iter()
        .flat_map(|s| s.iter())
        .find(|&&i| i >= n)
    {
        return Err(Error::InvalidInput(format!(
            "manifest index {bad} is out of range for a corpus of {n} sentences"
        )));
    }
    Ok((corpus, split, summary))
}

pub fn loss_csv(model: &ModelState) -> String {
    let m = &model.metadata;
    let mut out = String::from("epoch,loss,val_accuracy,val_loss\n");
    for (i, loss) in m.loss_history.iter().enumerate() {
        let acc = m.val_accuracy_history.get(i).copied().unwrap_or(f64::NAN);
        let val_loss = m.val_loss_history.get(i).copied().unwrap_or(f64::NAN);
        let _ = writeln!(out, "{},{loss},{acc},{val_loss}", i + 1);
    }
    out
}

/// Trains one variant on the prepared split and writes its checkpoint and
/// loss curve. Returns the run directory.
pub fn cmd_train(config: &RunConfig, variant: Variant) -> Result<PathBuf> {
    let (corpus, split, summary) = load_prepared(config)?;
    let training = variant.apply(&config.training);
    training.validate()?;
    let model = train_model(&corpus, &split, &summary.fingerprint, &training)?;
    let run = Workdir::new(&config.paths.workdir).run_dir(variant, training.seed);
    let checkpoint = run.join("checkpoint.json");
    if let Some(parent) = checkpoint.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    save_checkpoint(&model, &checkpoint)?;
    write(&run.join("loss.csv"), &loss_csv(&model))?;
    Ok(run)
}

/// Predicts the test sentences with a checkpoint (by default the one of
/// `variant` at the configured seed), writes the prediction dump and then
/// evaluates the dump as written.
pub fn cmd_eval(config: &RunConfig, variant: Variant, checkpoint: Option<&Path>) -> Result<EvaluationReport> {
    let (corpus, split, summary) = load_prepared(config)?;
    let run = Workdir::new(&config.paths.workdir).run_dir(variant, config.training.seed);
    let checkpoint = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run.join("checkpoint.json"));
    let model = load_checkpoint(&checkpoint)?;
    let recorded = model
        .corpus
        .as_ref()
        .map(|c| c.fingerprint.as_str())
        .unwrap_or_default();
    if recorded != summary.fingerprint {
        return Err(Error::InvalidInput(format!(
            "{} was trained on corpus {recorded:?}, the workdir holds {:?}",
            checkpoint.display(),
            summary.fingerprint
        )));
    }
    let out_dir = checkpoint.parent().map(Path::to_path_buf).unwrap_or(run);
    let dump_path = out_dir.join("predictions.jsonl");
    write(
        &dump_path,
        &write_dump(&predict_dump(&model, &corpus, &split, &config.evaluation)?)?,
    )?;
    let dump = parse_dump(&read(&dump_path)?, &dump_path)?;
    let report = evaluate_dump(&dump, config.evaluation.aggregation)?;
    if config.report.format != ReportFormat::Text {
        write(
            &out_dir.join("report.json"),
            &(serde_json::to_string_pretty(&report)? + "\n"),
        )?;
    }
    if config.report.format != ReportFormat::Json {
        write(&out_dir.join("report.txt"), &render_report(&report))?;
    }
    Ok(report)
}

/// Writes the configured synthetic corpus in CoNLL form.
pub fn cmd_synth(config: &RunConfig, out: &Path) -> Result<usize> {
    let corpus = Corpus::load(&RunConfig {
        paths: Default::default(),
        ..config.clone()
    })?;
    write(out, &write_conll(&corpus.sentences))?;
    Ok(corpus.sentences.len())
}

fn percent(value: Option<f64>) -> String {
    value.map_or_else(|| "-".to_string(), |v| format!("{:.2}", 100.0 * v))
}

/// Human-readable report: entity counts, per-measure detection scores (in
/// percent) and NER scores.
pub fn render_report(report: &EvaluationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "variant      {}", report.variant);
    let _ = writeln!(out, "corpus       {}", report.fingerprint);
    let _ = writeln!(out, "aggregation  {}", report.aggregation);
    let c = &report.counts;
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:>8} {:>8} {:>12} {:>10} {:>13}",
        "total", "shared", "unique_pred", "unique_gt", "ground_truth"
    );
    let _ = writeln!(
        out,
        "{:>8} {:>8} {:>12} {:>10} {:>13}",
        c.total, c.shared, c.unique_pred, c.unique_gt, c.ground_truth
    );
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<11} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "measure", "OOD-AUROC", "OOD-AUPR", "WS-AUROC", "WS-AUPR", "W-AUROC", "W-AUPR"
    );
    for m in Measure::ALL {
        let ood = report.ood.as_ref().and_then(|r| r.get(m));
        let ws = report.ws.as_ref().and_then(|r| r.get(m));
        let w = report.weighted.get(&m);
        if ood.is_none() && ws.is_none() && w.is_none() {
            continue;
        }
        let _ = writeln!(
            out,
            "{:<11} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
            m.name(),
            percent(ood.map(|s| s.auroc)),
            percent(ood.map(|s| s.aupr)),
            percent(ws.map(|s| s.auroc)),
            percent(ws.map(|s| s.aupr)),
            percent(w.map(|s| s.auroc)),
            percent(w.map(|s| s.aupr)),
        );
    }
    let n = &report.ner;
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "NER F1 {} (precision {}, recall {}; {} gold, {} predicted, {} correct)",
        percent(Some(n.f1)),
        percent(Some(n.precision)),
        percent(Some(n.recall)),
        n.gold,
        n.predicted,
        n.correct
    );
    for note in &report.notes {
        let _ = writeln!(out, "note: {note}");
    }
    out
}

/// Named scalar columns of a report, higher being better for all of them.
pub fn report_metrics(report: &EvaluationReport) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    out.insert("ner_f1".to_string(), report.ner.f1);
    for (task, result) in [("ood", &report.ood), ("ws", &report.ws)] {
        if let Some(r) = result {
            for (m, s) in &r.measures {
                out.insert(format!("{task}_auroc.{m}"), s.auroc);
                out.insert(format!("{task}_aupr.{m}"), s.aupr);
            }
        }
    }
    for (m, s) in &report.weighted {
        out.insert(format!("weighted_auroc.{m}"), s.auroc);
        out.insert(format!("weighted_aupr.{m}"), s.aupr);
    }
    out
}

/// Per-variant means over the runs of that variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub runs: usize,
    /// Mean over the runs that define the metric.
    pub means: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub fingerprint: String,
    pub variants: Vec<VariantSummary>,
    /// Metric name to the variant with the highest mean.
    pub best: BTreeMap<String, String>,
}

impl Comparison {
    pub fn mean(&self, variant: &str, metric: &str) -> Option<f64> {
        self.variants
            .iter()
            .find(|v| v.variant == variant)?
            .means
            .get(metric)
            .copied()
    }
}

/// Groups reports by variant and averages every metric over the group.
/// Refuses fewer than two reports or reports on different corpora.
pub fn compare_reports(reports: &[EvaluationReport]) -> Result<Comparison> {
    if reports.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "report-compare needs at least 2 reports, got {}",
            reports.len()
        )));
    }
    let fingerprint = reports[0].fingerprint.clone();
    if let Some(other) = reports.iter().find(|r| r.fingerprint != fingerprint) {
        return Err(Error::InvalidInput(format!(
            "reports come from different corpora ({fingerprint} and {})",
            other.fingerprint
        )));
    }
    let mut groups: Vec<(String, Vec<BTreeMap<String, f64>>)> = Vec::new();
    for r in reports {
        let metrics = report_metrics(r);
        match groups.iter_mut().find(|(v, _)| *v == r.variant) {
            Some((_, runs)) => runs.push(metrics),
            None => groups.push((r.variant.clone(), vec![metrics])),
        }
    }
    let variants: Vec<VariantSummary> = groups
        .into_iter()
        .map(|(variant, runs)| {
            let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
            for run in &runs {
                for (k, v) in run {
                    let e = sums.entry(k.clone()).or_default();
                    e.0 += v;
                    e.1 += 1;
                }
            }
            let means = sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
            VariantSummary {
                variant,
                runs: runs.len(),
                means,
            }
        })
        .collect();
    let mut best = BTreeMap::new();
    for v in &variants {
        for (k, &value) in &v.means {
            let current = best
                .get(k)
                .and_then(|b: &String| variants.iter().find(|x| &x.variant == b))
                .and_then(|x| x.means.get(k));
            if current.is_none_or(|&c| value > c) {
                best.insert(k.clone(), v.variant.clone());
            }
        }
    }
    Ok(Comparison {
        fingerprint,
        variants,
        best,
    })
}

/// Metrics as rows, variants as columns, in percent. The best mean in each
/// row carries a `*`; the lower block lists each mean's gap to that best.
pub fn render_comparison(c: &Comparison) -> String {
    let metrics: Vec<&String> = c.best.keys().collect();
    let width = metrics.iter().map(|m| m.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let _ = writeln!(out, "corpus {}", c.fingerprint);
    let header = |out: &mut String, title: &str| {
        let _ = write!(out, "{title:<width$}");
        for v in &c.variants {
            let _ = write!(out, " {:>18}", format!("{} (n={})", v.variant, v.runs));
        }
        let _ = writeln!(out);
    };
    let _ = writeln!(out);
    header(&mut out, "mean");
    for m in &metrics {
        let _ = write!(out, "{m:<width$}");
        for v in &c.variants {
            let flag = if c.best.get(*m) == Some(&v.variant) { "*" } else { " " };
            let _ = write!(out, " {:>17}{flag}", percent(v.means.get(*m).copied()));
        }
        let _ = writeln!(out);
    }
    let _ = writeln!(out);
    header(&mut out, "gap to best");
    for m in &metrics {
        let top = c.mean(&c.best[*m], m);
        let _ = write!(out, "{m:<width$}");
        for v in &c.variants {
            let gap = v.means.get(*m).zip(top).map(|(x, t)| x - t);
            let _ = write!(out, " {:>18}", percent(gap));
        }
        let _ = writeln!(out);
    }
    out
}

pub fn cmd_report_compare(paths: &[PathBuf]) -> Result<String> {
    if paths.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "report-compare needs at least 2 reports, got {}",
            paths.len()
        )));
    }
    let reports = paths
        .iter()
        .map(|p| Ok(serde_json::from_str(&read(p)?)?))
        .collect::<Result<Vec<EvaluationReport>>>()?;
    Ok(render_comparison(&compare_reports(&reports)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use slpn_core::evaluation::{Aggregation, DetectionResult, EntityCounts, MeasureScores, NerScores};

    fn report(variant: &str, fingerprint: &str, vacuity: f64, f1: f64) -> EvaluationReport {
        let scores = MeasureScores {
            auroc: vacuity,
            aupr: vacuity / 2.0,
        };
        let ood = DetectionResult {
            measures: [(Measure::Vacuity, scores)].into(),
            positive_count: 3,
            negative_count: 4,
        };
        EvaluationReport {
            variant: variant.into(),
            fingerprint: fingerprint.into(),
            aggregation: Aggregation::Mean,
            counts: EntityCounts::default(),
            ood: Some(ood),
            ws: None,
            weighted: [(Measure::Vacuity, scores)].into(),
            ner: NerScores {
                precision: f1,
                recall: f1,
                f1,
                gold: 1,
                predicted: 1,
                correct: 1,
            },
            notes: vec![],
        }
    }

    #[test]
    fn identical_reports_have_zero_gaps() {
        let r = report("slpn", "abc", 0.8, 0.9);
        let c = compare_reports(&[r.clone(), r]).unwrap();
        assert_eq!(c.variants.len(), 1);
        assert_eq!(c.variants[0].runs, 2);
        assert_eq!(c.mean("slpn", "weighted_auroc.vacuity"), Some(0.8));
        let text = render_comparison(&c);
        assert!(text
            .lines()
            .skip_while(|l| !l.starts_with("gap"))
            .skip(1)
            .all(|l| l.trim_end().ends_with("0.00")));
    }

    #[test]
    fn means_and_best_per_metric() {
        let c = compare_reports(&[
            report("slpn", "abc", 0.8, 0.9),
            report("slpn", "abc", 0.6, 0.9),
            report("token_pn", "abc", 0.65, 0.95),
        ])
        .unwrap();
        assert!((c.mean("slpn", "ood_auroc.vacuity").unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(c.best["ood_auroc.vacuity"], "slpn");
        assert_eq!(c.best["ner_f1"], "token_pn");
    }

    #[test]
    fn refuses_single_or_mismatched_reports() {
        assert!(compare_reports(&[report("slpn", "abc", 0.8, 0.9)]).is_err());
        assert!(compare_reports(&[report("slpn", "abc", 0.8, 0.9), report("slpn", "xyz", 0.8, 0.9)]).is_err());
    }

    #[test]
    fn rendered_report_is_in_percent() {
        let text = render_report(&report("slpn", "abc", 0.8125, 1.0));
        assert!(text.contains("81.25"));
        assert!(text.contains("NER F1 100.00"));
    }
}
