//! Experiment orchestration: single training runs, the placement sweep
//! (baseline first, experimental configurations after, optionally in
//! parallel), evaluation of final checkpoints, and the analysis pass.
//!
//! Every output is deterministic for a fixed spec and seed: no timestamps,
//! stable orderings, and per-run isolation.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use ffnlab_core::analysis::{
    average_ri, build_ri_table, layer_importance, below_chance_tasks, ImportanceVector, RiTable,
    TaskFilter,
};
use ffnlab_core::batch::{BatchConfig, BatchStream};
use ffnlab_core::checkpoint::verify_resume;
use ffnlab_core::eval::{evaluate_report, EvalReport, EvalTask, LikelihoodNorm, ModelScorer};
use ffnlab_core::model::{ModelConfig, ModelParams};
use ffnlab_core::placement::{build_plan, expanded_count, PlacementConfig, PlacementPlan, Position};
use ffnlab_core::presets::model_preset;
use ffnlab_core::tokenizer::{Tokenizer, TokenizerSpec};
use ffnlab_core::train::{train_step, TrainConfig, TrainState};
use ffnlab_core::CoreError;

use crate::corpus::load_documents;
use crate::report::{read_reports, write_importance_csv, write_json, write_loss_csv, write_ri_csv};
use crate::store::{load_train_checkpoint, save_model_checkpoint, save_train_checkpoint};
use crate::tasks::load_tasks;
use crate::{plot, LabError, Result};

/// Sweep description (the `sweep --spec` file).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    pub positions: Vec<Position>,
    pub ratios: Vec<u32>,
    pub train: TrainConfig,
    pub corpus: PathBuf,
    pub tasks: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    #[serde(default)]
    pub tokenizer: Option<TokenizerSpec>,
    #[serde(default)]
    pub raw_likelihood: bool,
}

impl ExperimentSpec {
    pub fn base_config(&self) -> Result<ModelConfig> {
        let cfg = match (&self.preset, &self.model) {
            (Some(name), None) => model_preset(name)?,
            (None, Some(cfg)) => cfg.clone(),
            _ => {
                return Err(LabError::Config(
                    "spec needs exactly one of `preset` or `model`".into(),
                ))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn likelihood(&self) -> LikelihoodNorm {
        if self.raw_likelihood {
            LikelihoodNorm::Raw
        } else {
            LikelihoodNorm::PerToken
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base_config()?;
        self.train.validate()?;
        if self.positions.is_empty() || self.ratios.is_empty() {
            return Err(LabError::Config("positions and ratios must be non-empty".into()));
        }
        let hundreds = self.ratios.iter().filter(|&&r| r == 100).count();
        if hundreds > 1 {
            return Err(LabError::Config(
                "ratio 100 may appear at most once; it reuses the baseline run".into(),
            ));
        }
        Ok(())
    }
}

/// One planned run of a sweep.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub plan: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Skipped,
    Failed,
    /// Ratio-100 configuration served by the baseline run.
    Aliased,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Manifest {
    pub spec: ExperimentSpec,
    pub runs: Vec<ManifestEntry>,
}

fn tokenizer_of(spec: Option<&TokenizerSpec>) -> Tokenizer {
    match spec {
        Some(s) => Tokenizer::from_spec(s.clone()),
        None => Tokenizer::byte_level(),
    }
}

fn check_vocab(cfg: &ModelConfig, tokenizer: &Tokenizer) -> Result<()> {
    if cfg.vocab_size != tokenizer.vocab_size() {
        return Err(LabError::Config(format!(
            "model vocab_size {} does not match tokenizer vocabulary {}",
            cfg.vocab_size,
            tokenizer.vocab_size()
        )));
    }
    Ok(())
}

/// Trains a model from scratch (or a resumed state) to `total_steps`,
/// writing periodic training checkpoints, a final model checkpoint, and the
/// loss log.
pub fn run_training(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    tokenizer: &Tokenizer,
    documents: &[Vec<u32>],
    out_dir: &Path,
    mut state: TrainState<f32>,
) -> Result<TrainState<f32>> {
    fs::create_dir_all(out_dir)?;
    let mut stream = BatchStream::new(
        documents.to_vec(),
        tokenizer.eos_id(),
        BatchConfig {
            seq_len: train_cfg.seq_len,
            batch_size: train_cfg.batch_size,
            seed: train_cfg.seed,
        },
    )?;
    stream.seek(state.step);
    while state.step < train_cfg.total_steps {
        let batch = stream.next_batch();
        train_step(&mut state, model_cfg, train_cfg, &batch)?;
        if train_cfg.checkpoint_interval > 0
            && state.step.is_multiple_of(train_cfg.checkpoint_interval)
            && state.step < train_cfg.total_steps
        {
            let path = out_dir.join(format!("train-{:06}.ckpt", state.step));
            save_train_checkpoint(&path, model_cfg, tokenizer.spec(), train_cfg, &state)?;
        }
    }
    write_loss_csv(&out_dir.join("loss.csv"), &state.loss_history)?;
    save_train_checkpoint(
        &out_dir.join("train-final.ckpt"),
        model_cfg,
        tokenizer.spec(),
        train_cfg,
        &state,
    )?;
    save_model_checkpoint(&out_dir.join("model.ckpt"), model_cfg, tokenizer.spec(), &state.params)?;
    Ok(state)
}

/// Resumes from a training checkpoint file. Data order is a pure function
/// of (corpus, seed, step), so the resumed run replays the exact remaining
/// batch sequence. With `branch = true` the stored training configuration
/// may differ from `train_cfg` (the WSD branching workflow); the model
/// configuration must always match.
pub fn resume_with_documents(
    ckpt: &Path,
    train_cfg: &TrainConfig,
    documents: &[Vec<u32>],
    out_dir: &Path,
    branch: bool,
) -> Result<TrainState<f32>> {
    let bytes = fs::read(ckpt)
        .map_err(|e| LabError::Config(format!("cannot read checkpoint {}: {e}", ckpt.display())))?;
    let (header, _) = ffnlab_core::checkpoint::read_header(&bytes)?;
    let (model_cfg, tok_spec, _stored_cfg, state) = load_train_checkpoint(ckpt)?;
    let gate = if branch { None } else { Some(train_cfg) };
    verify_resume(&header, &model_cfg, gate)?;
    let tokenizer = Tokenizer::from_spec(tok_spec);
    check_vocab(&model_cfg, &tokenizer)?;
    run_training(&model_cfg, train_cfg, &tokenizer, documents, out_dir, state)
}

/// Evaluates frozen weights on a task set.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_params(
    model_cfg: &ModelConfig,
    params: &ModelParams<f32>,
    tokenizer: &Tokenizer,
    tasks: &[EvalTask],
    norm: LikelihoodNorm,
    model_id: &str,
    checkpoint_step: Option<u64>,
    seed: Option<u64>,
) -> Result<EvalReport> {
    let scorer = ModelScorer { cfg: model_cfg, params };
    Ok(evaluate_report(&scorer, tokenizer, tasks, norm, model_id, checkpoint_step, seed)?)
}

struct RunJob {
    id: String,
    model_cfg: ModelConfig,
}

/// Runs the full sweep: plans, baseline, experimental runs (up to `jobs` in
/// parallel), ratio-100 aliases, evaluation reports, and the manifest.
/// Completed runs (report + checkpoint already present) are skipped.
pub fn run_sweep(spec: &ExperimentSpec, jobs: usize) -> Result<Manifest> {
    spec.validate()?;
    let base = spec.base_config()?;
    let mut train_cfg = spec.train.clone();
    train_cfg.seed = spec.seed;
    train_cfg.validate()?;
    let tokenizer = tokenizer_of(spec.tokenizer.as_ref());
    check_vocab(&base, &tokenizer)?;

    let out = &spec.out;
    fs::create_dir_all(out.join("plans"))?;
    fs::create_dir_all(out.join("runs"))?;
    fs::create_dir_all(out.join("reports"))?;

    let raw_docs = load_documents(&spec.corpus)?;
    let documents: Vec<Vec<u32>> = raw_docs.iter().map(|d| tokenizer.encode(d)).collect();
    let tasks = load_tasks(&spec.tasks)?;
    for task in &tasks {
        task.validate(&tokenizer).map_err(LabError::Core)?;
    }

    // Plans: the baseline plus every (position, ratio) cell. Ratio 100
    // reuses the baseline weights rather than training again.
    let baseline_plan = build_plan(&PlacementConfig {
        position: Position::Baseline,
        ratio_percent: 100,
        base: base.clone(),
    })?;
    write_json(&out.join("plans/baseline.json"), &baseline_plan)?;
    let mut experimental: Vec<PlacementPlan> = Vec::new();
    let mut aliases: Vec<String> = Vec::new();
    for &position in &spec.positions {
        for &ratio in &spec.ratios {
            if position == Position::Baseline {
                continue;
            }
            let plan = build_plan(&PlacementConfig { position, ratio_percent: ratio, base: base.clone() })?;
            write_json(&out.join(format!("plans/{}.json", plan.config_id)), &plan)?;
            if ratio == 100 {
                aliases.push(plan.config_id.clone());
            } else {
                if expanded_count(base.n_layers, ratio)? == 0 {
                    return Err(LabError::Config(format!(
                        "ratio {ratio}% expands no layer of the {}-layer baseline",
                        base.n_layers
                    )));
                }
                experimental.push(plan);
            }
        }
    }

    let mut entries: Vec<ManifestEntry> = Vec::new();

    // Baseline always runs (or is reused) first; a failed baseline aborts
    // the sweep since nothing can be compared against it.
    let baseline_report_path = out.join("reports/baseline.json");
    let baseline_done = baseline_report_path.exists() && out.join("runs/baseline/model.ckpt").exists();
    let baseline_report = if baseline_done {
        entries.push(ManifestEntry {
            id: "baseline".into(),
            status: RunStatus::Skipped,
            error: None,
            plan: "plans/baseline.json".into(),
            checkpoint: Some("runs/baseline/model.ckpt".into()),
            report: Some("reports/baseline.json".into()),
        });
        crate::report::read_report(&baseline_report_path)?
    } else {
        let state = TrainState::<f32>::init(&base, spec.seed).map_err(LabError::Core)?;
        let state = run_training(
            &base,
            &train_cfg,
            &tokenizer,
            &documents,
            &out.join("runs/baseline"),
            state,
        )?;
        let report = evaluate_params(
            &base,
            &state.params,
            &tokenizer,
            &tasks,
            spec.likelihood(),
            "baseline",
            Some(state.step),
            Some(spec.seed),
        )?;
        write_json(&baseline_report_path, &report)?;
        entries.push(ManifestEntry {
            id: "baseline".into(),
            status: RunStatus::Complete,
            error: None,
            plan: "plans/baseline.json".into(),
            checkpoint: Some("runs/baseline/model.ckpt".into()),
            report: Some("reports/baseline.json".into()),
        });
        report
    };

    // Experimental runs, executed by a small worker pool. Each run is fully
    // isolated; results land in per-run directories.
    let queue: Mutex<VecDeque<RunJob>> = Mutex::new(
        experimental
            .iter()
            .map(|plan| RunJob { id: plan.config_id.clone(), model_cfg: plan.model_config() })
            .collect(),
    );
    let results: Mutex<Vec<ManifestEntry>> = Mutex::new(Vec::new());
    let workers = jobs.max(1).min(experimental.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let job = match queue.lock().unwrap().pop_front() {
                    Some(job) => job,
                    None => return,
                };
                let entry = run_one(
                    spec,
                    &train_cfg,
                    &tokenizer,
                    &documents,
                    &tasks,
                    &job,
                );
                results.lock().unwrap().push(entry);
            });
        }
    });
    let mut experiment_entries = results.into_inner().unwrap();
    experiment_entries.sort_by(|a, b| a.id.cmp(&b.id));
    entries.extend(experiment_entries);

    // Ratio-100 rows reuse the baseline results verbatim.
    for id in aliases {
        let mut aliased = baseline_report.clone();
        aliased.model_id = id.clone();
        write_json(&out.join(format!("reports/{id}.json")), &aliased)?;
        entries.push(ManifestEntry {
            id: id.clone(),
            status: RunStatus::Aliased,
            error: None,
            plan: format!("plans/{id}.json"),
            checkpoint: Some("runs/baseline/model.ckpt".into()),
            report: Some(format!("reports/{id}.json")),
        });
    }

    // Failed runs are recorded in the manifest rather than propagated; the
    // caller decides whether a partial sweep is acceptable.
    let manifest = Manifest { spec: spec.clone(), runs: entries };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn run_one(
    spec: &ExperimentSpec,
    train_cfg: &TrainConfig,
    tokenizer: &Tokenizer,
    documents: &[Vec<u32>],
    tasks: &[EvalTask],
    job: &RunJob,
) -> ManifestEntry {
    let out = &spec.out;
    let id = &job.id;
    let run_dir = out.join("runs").join(id);
    let report_path = out.join(format!("reports/{id}.json"));
    let entry = |status: RunStatus, error: Option<String>| ManifestEntry {
        id: id.clone(),
        status,
        error,
        plan: format!("plans/{id}.json"),
        checkpoint: Some(format!("runs/{id}/model.ckpt")),
        report: Some(format!("reports/{id}.json")),
    };
    if report_path.exists() && run_dir.join("model.ckpt").exists() {
        return entry(RunStatus::Skipped, None);
    }
    let outcome = (|| -> Result<()> {
        let state = TrainState::<f32>::init(&job.model_cfg, spec.seed).map_err(LabError::Core)?;
        let state =
            run_training(&job.model_cfg, train_cfg, tokenizer, documents, &run_dir, state)?;
        let report = evaluate_params(
            &job.model_cfg,
            &state.params,
            tokenizer,
            tasks,
            spec.likelihood(),
            id,
            Some(state.step),
            Some(spec.seed),
        )?;
        write_json(&report_path, &report)?;
        Ok(())
    })();
    match outcome {
        Ok(()) => entry(RunStatus::Complete, None),
        Err(e) => entry(RunStatus::Failed, Some(e.to_string())),
    }
}

/// Analysis outputs (also returned to callers for assertions).
pub struct AnalysisOutput {
    pub table: RiTable,
    pub averages: BTreeMap<String, f64>,
    pub importance: Option<ImportanceVector>,
    pub warnings: Vec<String>,
    pub excluded_tasks: Vec<String>,
}

#[derive(serde::Serialize)]
struct Summary<'a> {
    baseline: &'a [ffnlab_core::eval::TaskResult],
    average_ri: &'a BTreeMap<String, f64>,
    excluded_tasks: &'a [String],
    importance: Option<&'a ImportanceVector>,
    warnings: &'a [String],
}

/// Builds the RI table, averages, and layer importance from report and plan
/// directories, then writes CSVs, the JSON summary, and SVG plots.
pub fn run_analysis(
    reports_dir: &Path,
    plans_dir: &Path,
    out_dir: &Path,
    filter: &TaskFilter,
) -> Result<AnalysisOutput> {
    let reports = read_reports(reports_dir)?;
    let baseline = reports
        .iter()
        .find(|r| r.model_id == "baseline")
        .cloned()
        .ok_or_else(|| LabError::Config("no baseline report found".into()))?;
    let experiments: Vec<(String, EvalReport)> = reports
        .into_iter()
        .filter(|r| r.model_id != "baseline")
        .map(|r| (r.model_id.clone(), r))
        .collect();
    if experiments.is_empty() {
        return Err(LabError::Config("no experimental reports to analyze".into()));
    }

    let mut plans: BTreeMap<String, PlacementPlan> = BTreeMap::new();
    if plans_dir.is_dir() {
        for entry in fs::read_dir(plans_dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|ext| ext == "json") {
                let raw = fs::read_to_string(&path)?;
                let plan: PlacementPlan = serde_json::from_str(&raw)?;
                plans.insert(plan.config_id.clone(), plan);
            }
        }
    }

    let table = build_ri_table(&baseline, &experiments)?;
    let averages = average_ri(&table, filter)?;
    let mut warnings = Vec::new();
    let excluded: Vec<String> = below_chance_tasks(&table)
        .into_iter()
        .chain(filter.exclude.iter().cloned())
        .collect();
    for task in &excluded {
        warnings.push(format!("task {task} excluded from averages"));
    }

    // Importance needs at least one configuration with deactivated layers.
    let deactivated: BTreeMap<String, Vec<usize>> = averages
        .keys()
        .filter_map(|id| plans.get(id).map(|p| (id.clone(), p.deactivated_indices())))
        .collect();
    let n_layers = plans
        .values()
        .next()
        .map(|p| p.layer_specs.len())
        .unwrap_or_default();
    let importance = if n_layers == 0 {
        warnings.push("no plans supplied; importance skipped".into());
        None
    } else {
        match layer_importance(&averages, &deactivated, n_layers) {
            Ok(iv) => Some(iv),
            Err(CoreError::Config(msg)) => {
                warnings.push(format!("importance skipped: {msg}"));
                None
            }
            Err(e) => return Err(e.into()),
        }
    };

    fs::create_dir_all(out_dir.join("plots"))?;
    write_ri_csv(&out_dir.join("report.csv"), &table)?;
    if let Some(iv) = &importance {
        write_importance_csv(&out_dir.join("importance.csv"), iv)?;
        let svg = plot::importance_bars(iv, "standardized FFN importance per layer");
        crate::store::write_atomic(&out_dir.join("plots/importance.svg"), svg.as_bytes())?;
    }

    // One RI-vs-ratio chart per task, a line per position.
    for task in table.tasks() {
        let mut by_position: BTreeMap<String, Vec<(u32, f64)>> = BTreeMap::new();
        for row in table.rows.iter().filter(|r| r.task == task) {
            if let Some((pos, ratio)) = row.config.rsplit_once('_') {
                if let Ok(ratio) = ratio.parse::<u32>() {
                    by_position.entry(pos.to_string()).or_default().push((ratio, row.ri_percent));
                }
            }
        }
        if by_position.is_empty() {
            continue;
        }
        let mut series: Vec<(String, Vec<(u32, f64)>)> = by_position.into_iter().collect();
        for (_, points) in series.iter_mut() {
            points.sort_by_key(|&(r, _)| r);
        }
        let svg = plot::ri_lines(&task, &series);
        let safe: String = task
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        crate::store::write_atomic(&out_dir.join(format!("plots/ri_{safe}.svg")), svg.as_bytes())?;
    }

    let mut all_warnings = warnings.clone();
    if let Some(iv) = &importance {
        all_warnings.extend(iv.warnings.clone());
    }
    let summary = Summary {
        baseline: &table.baseline,
        average_ri: &averages,
        excluded_tasks: &excluded,
        importance: importance.as_ref(),
        warnings: &all_warnings,
    };
    write_json(&out_dir.join("summary.json"), &summary)?;

    Ok(AnalysisOutput { table, averages, importance, warnings: all_warnings, excluded_tasks: excluded })
}
