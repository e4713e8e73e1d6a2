//! Micro-sweep behavior: ratio-100 aliasing, resume skipping, and failure
//! isolation — on a model small enough to train in seconds.

use std::fs;

use ffnlab::corpus::synthetic_text;
use ffnlab::runner::{run_analysis, run_sweep, ExperimentSpec, RunStatus};
use ffnlab_core::analysis::TaskFilter;
use ffnlab_core::model::ModelConfig;
use ffnlab_core::placement::Position;
use ffnlab_core::schedule::Scheduler;
use ffnlab_core::train::TrainConfig;

fn micro_spec(dir: &std::path::Path) -> ExperimentSpec {
    let corpus = dir.join("corpus.txt");
    fs::write(&corpus, synthetic_text(3, 6_000)).unwrap();
    let tasks = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tasks");
    ExperimentSpec {
        preset: None,
        model: Some(ModelConfig::uniform(4, 16, 2, 2, 259, 128, 56)),
        positions: vec![Position::Middle],
        ratios: vec![50, 100],
        train: TrainConfig {
            total_steps: 12,
            warmup_steps: 2,
            peak_lr: 1e-3,
            scheduler: Scheduler::Cosine,
            wsd_decay_fraction: 0.1,
            batch_size: 2,
            seq_len: 16,
            weight_decay: 0.1,
            grad_clip_norm: 1.0,
            seed: 3,
            checkpoint_interval: 0,
        },
        corpus,
        tasks,
        out: dir.join("out"),
        seed: 3,
        tokenizer: None,
        raw_likelihood: false,
    }
}

#[test]
fn ratio_100_is_aliased_to_the_baseline_and_reruns_skip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = micro_spec(dir.path());
    let manifest = run_sweep(&spec, 1).unwrap();

    let status_of = |id: &str| manifest.runs.iter().find(|r| r.id == id).unwrap().status;
    assert_eq!(status_of("baseline"), RunStatus::Complete);
    assert_eq!(status_of("middle_50"), RunStatus::Complete);
    assert_eq!(status_of("middle_100"), RunStatus::Aliased);

    // The aliased report carries the baseline numbers verbatim.
    let baseline = fs::read_to_string(spec.out.join("reports/baseline.json")).unwrap();
    let aliased = fs::read_to_string(spec.out.join("reports/middle_100.json")).unwrap();
    assert_eq!(baseline.replace("baseline", "middle_100"), aliased);

    // Analysis sees the ratio-100 row at exactly zero RI.
    let analysis = run_analysis(
        &spec.out.join("reports"),
        &spec.out.join("plans"),
        &spec.out.join("analysis"),
        &TaskFilter::default(),
    )
    .unwrap();
    for row in analysis.table.rows.iter().filter(|r| r.config == "middle_100") {
        assert_eq!(row.ri_percent, 0.0);
    }

    // A second sweep over the same directory skips completed runs.
    let manifest = run_sweep(&spec, 1).unwrap();
    let status_of = |id: &str| manifest.runs.iter().find(|r| r.id == id).unwrap().status;
    assert_eq!(status_of("baseline"), RunStatus::Skipped);
    assert_eq!(status_of("middle_50"), RunStatus::Skipped);
}

#[test]
fn duplicate_ratio_100_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = micro_spec(dir.path());
    spec.ratios = vec![100, 100];
    assert!(spec.validate().is_err());
}

#[test]
fn a_ratio_expanding_no_layer_is_rejected_up_front() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = micro_spec(dir.path());
    // Ratio 10 of 4 layers expands zero layers; planning refuses the cell
    // before any training starts.
    spec.ratios = vec![10];
    assert!(run_sweep(&spec, 1).is_err());
}

#[test]
fn a_failing_run_is_recorded_and_the_sweep_continues() {
    let dir = tempfile::tempdir().unwrap();
    let spec = micro_spec(dir.path());
    // Block the middle_50 report path with a directory so that run (and
    // only that run) aborts at its final write.
    fs::create_dir_all(spec.out.join("reports/middle_50.json")).unwrap();
    let manifest = run_sweep(&spec, 1).unwrap();
    let entry = |id: &str| manifest.runs.iter().find(|r| r.id == id).unwrap();
    assert_eq!(entry("baseline").status, RunStatus::Complete);
    assert_eq!(entry("middle_50").status, RunStatus::Failed);
    assert!(entry("middle_50").error.is_some());
    assert_eq!(entry("middle_100").status, RunStatus::Aliased);
    // The manifest itself still lands on disk.
    assert!(spec.out.join("manifest.json").exists());
}

#[test]
fn analysis_without_deactivating_configs_skips_importance_with_a_notice() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = micro_spec(dir.path());
    spec.ratios = vec![100]; // only the baseline-shaped alias
    run_sweep(&spec, 1).unwrap();
    let analysis = run_analysis(
        &spec.out.join("reports"),
        &spec.out.join("plans"),
        &spec.out.join("analysis"),
        &TaskFilter::default(),
    )
    .unwrap();
    assert!(analysis.importance.is_none());
    assert!(analysis.warnings.iter().any(|w| w.contains("importance skipped")));
    assert!(spec.out.join("analysis/report.csv").exists());
    assert!(!spec.out.join("analysis/importance.csv").exists());
    assert!(!spec.out.join("analysis/plots/importance.svg").exists());
}
