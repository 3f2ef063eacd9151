use std::fs;
use std::path::Path;
use std::process::Command;

use slpn_cli::commands::{cmd_eval, cmd_prepare, cmd_report_compare, cmd_train, Workdir};
use slpn_cli::config::RunConfig;
use slpn_cli::pipeline::Variant;
use slpn_core::evaluation::{evaluate_dump, parse_dump, weighted_score, Aggregation};
use slpn_core::ner_data::SyntheticSpec;
use slpn_core::training::load_checkpoint;
use slpn_core::Error;

fn quick_config(workdir: &Path) -> RunConfig {
    let mut config = RunConfig::default();
    config.paths.workdir = workdir.to_path_buf();
    config.synthetic = SyntheticSpec {
        sentences: 300,
        ..SyntheticSpec::default()
    };
    config.training.epochs = 2;
    config.training.learning_rate = 1e-2;
    config
}

#[test]
fn prepare_is_idempotent_and_rejects_large_m() {
    let dir = tempfile::tempdir().unwrap();
    let config = quick_config(dir.path());
    let first = cmd_prepare(&config).unwrap();
    let manifest = fs::read(Workdir::new(dir.path()).manifest()).unwrap();
    assert!(first.test_out > 0);
    assert_eq!(first.left_out_labels, vec!["GEN".to_string()]);
    assert_eq!(cmd_prepare(&config).unwrap(), first);
    assert_eq!(fs::read(Workdir::new(dir.path()).manifest()).unwrap(), manifest);

    let mut too_many = config.clone();
    too_many.split.m = 6;
    assert!(matches!(cmd_prepare(&too_many), Err(Error::InvalidParameter(_))));
}

#[test]
fn training_needs_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_train(&quick_config(dir.path()), Variant::Slpn).unwrap_err();
    assert!(err.to_string().contains("prepare"), "{err}");
}

#[test]
fn train_and_eval_produce_consistent_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = quick_config(dir.path());
    cmd_prepare(&config).unwrap();
    let run = cmd_train(&config, Variant::SlpnNoSoftplus).unwrap();
    let model = load_checkpoint(&run.join("checkpoint.json")).unwrap();
    assert!(!model.config.softplus_on);
    let curve = fs::read_to_string(run.join("loss.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + config.training.epochs);

    let report = cmd_eval(&config, Variant::SlpnNoSoftplus, None).unwrap();
    let c = report.counts;
    assert_eq!(c.total, c.shared + c.unique_gt + c.unique_pred);
    let ood = report.ood.as_ref().unwrap();
    for (m, w) in &report.weighted {
        let o = ood.get(*m).unwrap();
        let expected = match report.ws.as_ref().and_then(|ws| ws.get(*m)) {
            Some(ws) => weighted_score(o.auroc, ws.auroc, c.shared, c.unique_pred).unwrap(),
            None => o.auroc,
        };
        assert!((w.auroc - expected).abs() < 0.01);
    }
    let stored: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(stored["variant"], "slpn-no-softplus");
    assert!(fs::read_to_string(run.join("report.txt")).unwrap().contains("NER F1"));

    let text = cmd_report_compare(&[run.join("report.json"), run.join("report.json")]).unwrap();
    assert!(text.contains("slpn-no-softplus (n=2)"));
}

#[test]
fn gold_predictions_score_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let config = quick_config(dir.path());
    cmd_prepare(&config).unwrap();
    cmd_train(&config, Variant::TokenPn).unwrap();
    cmd_eval(&config, Variant::TokenPn, None).unwrap();
    let path = Workdir::new(dir.path())
        .run_dir(Variant::TokenPn, 0)
        .join("predictions.jsonl");
    let mut dump = parse_dump(&fs::read_to_string(&path).unwrap(), &path).unwrap();
    for r in &mut dump.records {
        r.pred = r.gold.clone();
    }
    let report = evaluate_dump(&dump, Aggregation::Mean).unwrap();
    assert_eq!(report.ner.f1, 1.0);
    assert_eq!(report.counts.unique_pred, 0);
}

#[test]
fn dump_version_mismatch_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let config = quick_config(dir.path());
    cmd_prepare(&config).unwrap();
    cmd_train(&config, Variant::TokenPn).unwrap();
    cmd_eval(&config, Variant::TokenPn, None).unwrap();
    let path = Workdir::new(dir.path())
        .run_dir(Variant::TokenPn, 0)
        .join("predictions.jsonl");
    let text = fs::read_to_string(&path)
        .unwrap()
        .replacen("\"version\":1", "\"version\":9", 1);
    assert!(matches!(parse_dump(&text, &path), Err(Error::SchemaMismatch { .. })));
}

#[test]
fn binary_reports_errors_through_exit_status() {
    let bin = env!("CARGO_BIN_EXE_slpn");
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(bin)
        .args(["--workdir"])
        .arg(dir.path())
        .arg("train")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let out = Command::new(bin)
        .args(["report-compare", "only-one.json"])
        .output()
        .unwrap();
    assert!(!out.status.success());

    let out = Command::new(bin).args(["--show-config", "--m", "2"]).output().unwrap();
    assert!(out.status.success());
    let shown = RunConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(shown.split.m, 2);
}
