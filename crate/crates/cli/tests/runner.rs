use std::path::PathBuf;

use approx::assert_abs_diff_eq;
use noisytree_cli::config::ExperimentConfig;
use noisytree_cli::runner::{
    emit_csv, load_local, parse_results_csv, render_csv, render_summary_csv, run_experiment,
    sort_records, summarize, ResultRecord, RunFailure, RESULT_HEADER, SUMMARY_HEADER,
};

fn record(correction: &str, eta: f64, fold: usize, f1: f64) -> ResultRecord {
    ResultRecord {
        dataset: "iris".into(),
        model: "decision_tree".into(),
        correction: correction.into(),
        eta,
        fold,
        f1_weighted: f1,
        seed: 7,
        wall_time_ms: 0,
    }
}

#[test]
fn empty_record_list_renders_header_only() {
    assert_eq!(render_csv(&[]), format!("{RESULT_HEADER}\n"));
}

#[test]
fn one_record_renders_fields_in_declared_order() {
    let text = render_csv(&[record("none", 0.1, 3, 0.9466666)]);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), RESULT_HEADER);
    assert_eq!(
        lines.next().unwrap(),
        "iris,decision_tree,none,0.100000,3,0.946667,7,0"
    );
    assert!(lines.next().is_none());
    assert!(text.ends_with('\n') && !text.contains('\r'));
}

#[test]
fn csv_round_trips_through_the_parser() {
    let records = vec![
        record("none", 0.0, 0, 1.0),
        record("forward", 0.2, 1, 0.75),
        record("backward", 0.4, 9, 0.5),
    ];
    let parsed = parse_results_csv(&render_csv(&records)).unwrap();
    assert_eq!(parsed.len(), 3);
    for (a, b) in records.iter().zip(&parsed) {
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.correction, b.correction);
        assert_abs_diff_eq!(a.eta, b.eta, epsilon = 1e-9);
        assert_abs_diff_eq!(a.f1_weighted, b.f1_weighted, epsilon = 1e-6);
        assert_eq!(a.fold, b.fold);
        assert_eq!(a.seed, b.seed);
    }
}

#[test]
fn parser_rejects_malformed_inputs() {
    assert!(matches!(
        parse_results_csv("wrong,header\n"),
        Err(RunFailure::Runtime(_))
    ));
    let short = format!("{RESULT_HEADER}\niris,decision_tree,none\n");
    assert!(parse_results_csv(&short).is_err());
    let bad_float = format!("{RESULT_HEADER}\niris,dt,none,x,0,0.5,7,0\n");
    assert!(parse_results_csv(&bad_float).is_err());
}

#[test]
fn records_sort_by_the_declared_key() {
    let mut records = vec![
        record("none", 0.2, 1, 0.5),
        record("backward", 0.0, 0, 0.5),
        record("none", 0.2, 0, 0.5),
        record("forward", 0.4, 0, 0.5),
        record("none", 0.0, 0, 0.5),
    ];
    sort_records(&mut records);
    let keys: Vec<(String, f64, usize)> = records
        .iter()
        .map(|r| (r.correction.clone(), r.eta, r.fold))
        .collect();
    assert_eq!(
        keys,
        vec![
            ("backward".to_string(), 0.0, 0),
            ("forward".to_string(), 0.4, 0),
            ("none".to_string(), 0.0, 0),
            ("none".to_string(), 0.2, 0),
            ("none".to_string(), 0.2, 1),
        ]
    );
}

#[test]
fn summarize_reduces_each_cell_to_mean_and_std() {
    let records = vec![
        record("none", 0.1, 0, 0.8),
        record("none", 0.1, 1, 1.0),
        record("none", 0.3, 0, 0.9),
    ];
    let rows = summarize(&records);
    assert_eq!(rows.len(), 2);
    assert_abs_diff_eq!(rows[0].f1_mean, 0.9, epsilon = 1e-12);
    assert_abs_diff_eq!(rows[0].f1_std, 0.1414213562373095, epsilon = 1e-9);
    assert_eq!(rows[0].n_folds, 2);
    assert_eq!(rows[1].n_folds, 1);
    assert_abs_diff_eq!(rows[1].f1_std, 0.0, epsilon = 1e-15);

    // Grouping loses no records.
    assert_eq!(rows.iter().map(|r| r.n_folds).sum::<usize>(), records.len());
}

#[test]
fn identical_scores_summarize_to_zero_std() {
    let records: Vec<ResultRecord> = (0..10).map(|f| record("none", 0.0, f, 0.9)).collect();
    let rows = summarize(&records);
    assert_eq!(rows.len(), 1);
    assert_abs_diff_eq!(rows[0].f1_mean, 0.9, epsilon = 1e-12);
    assert_eq!(rows[0].f1_std, 0.0);
    assert_eq!(rows[0].n_folds, 10);
}

#[test]
fn summary_csv_shape() {
    let rows = summarize(&[record("none", 0.1, 0, 0.75)]);
    let text = render_summary_csv(&rows);
    assert_eq!(
        text,
        format!("{SUMMARY_HEADER}\niris,decision_tree,none,0.100000,0.750000,0.000000,1\n")
    );
}

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

#[test]
fn local_loader_reads_arff_and_csv() {
    let iris = load_local(&data_dir().join("61.arff")).unwrap();
    assert_eq!((iris.n(), iris.m(), iris.c()), (150, 4, 3));

    // Round-trip the parsed dataset through its CSV form.
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("iris.csv");
    std::fs::write(&csv_path, iris.to_csv()).unwrap();
    let again = load_local(&csv_path).unwrap();
    assert_eq!((again.n(), again.m(), again.c()), (150, 4, 3));

    assert!(load_local(&data_dir().join("absent.arff")).is_err());
    let odd = dir.path().join("odd.xyz");
    std::fs::write(&odd, "x").unwrap();
    let err = load_local(&odd).unwrap_err();
    assert!(err.contains("extension"), "{err}");
}

fn tiny_config(dir: &std::path::Path, etas: &[f64]) -> ExperimentConfig {
    let doc = serde_json::json!({
        "datasets": [
            { "openml_id": 61, "name": "iris", "expected_n": 150, "expected_m": 4, "expected_c": 3 }
        ],
        "models": ["decision_tree"],
        "corrections": ["none", "forward", "backward"],
        "criterion": "gini_mse",
        "etas": etas,
        "folds": 5,
        "seed": 42,
        "n_trees": 5,
        "cache_dir": data_dir(),
        "output_path": dir.join("out.csv")
    });
    ExperimentConfig::from_json(&doc.to_string()).unwrap()
}

#[test]
fn grid_produces_one_record_per_cell_per_fold() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), &[0.0, 0.2]);
    let out = dir.path().join("out.csv");
    let summary = run_experiment(&config, &out, Some(2), false).unwrap();
    // 1 dataset x 1 model x 3 corrections x 2 etas x 5 folds.
    assert_eq!(summary.records, 30);

    let records = parse_results_csv(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(records.len(), 30);
    let mut sorted = records.clone();
    sort_records(&mut sorted);
    assert_eq!(records, sorted, "final file is sorted");

    // Streaming scratch file is cleaned up; metadata sidecar exists.
    assert!(!dir.path().join("out.csv.partial").exists());
    let meta: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out.csv.meta.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(meta["records"], 30);
    assert!(meta["rng_algorithm"].as_str().unwrap().contains("chacha8"));
}

#[test]
fn forward_rows_equal_none_rows_through_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), &[0.0, 0.1, 0.3]);
    let out = dir.path().join("out.csv");
    run_experiment(&config, &out, Some(2), false).unwrap();
    let records = parse_results_csv(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let rows = |correction: &str| -> Vec<(u64, usize, f64)> {
        records
            .iter()
            .filter(|r| r.correction == correction)
            .map(|r| (r.eta.to_bits(), r.fold, r.f1_weighted))
            .collect()
    };
    assert_eq!(rows("forward"), rows("none"));
}

#[test]
fn worker_count_does_not_change_the_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), &[0.0, 0.2]);
    let one = dir.path().join("one.csv");
    let four = dir.path().join("four.csv");
    run_experiment(&config, &one, Some(1), false).unwrap();
    run_experiment(&config, &four, Some(4), false).unwrap();
    assert_eq!(
        std::fs::read(&one).unwrap(),
        std::fs::read(&four).unwrap(),
        "records must not depend on scheduling"
    );
}

#[test]
fn emit_creates_missing_parent_directories() {
    let dir = tempfile::tempdir().unwrap();
    let nested = dir.path().join("a/b/out.csv");
    emit_csv(&[record("none", 0.0, 0, 1.0)], &nested).unwrap();
    assert!(nested.exists());
}
