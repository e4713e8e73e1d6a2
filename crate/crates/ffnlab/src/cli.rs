//! Command-line front end: plan, train, sweep, eval, analyze.

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use ffnlab_core::analysis::TaskFilter;
use ffnlab_core::eval::LikelihoodNorm;
use ffnlab_core::model::{count_params, ModelConfig};
use ffnlab_core::placement::{build_plan, PlacementConfig, PlacementPlan, Position};
use ffnlab_core::presets::{model_preset, preset_list};
use ffnlab_core::tokenizer::{Tokenizer, TokenizerSpec};
use ffnlab_core::train::{TrainConfig, TrainState};

use crate::corpus::load_documents;
use crate::report::write_json;
use crate::runner::{
    evaluate_params, resume_with_documents, run_analysis, run_sweep, run_training, ExperimentSpec,
    RunStatus,
};
use crate::store::load_scorer_checkpoint;
use crate::tasks::load_tasks;
use crate::{LabError, Result};

#[derive(Parser)]
#[command(
    name = "ffnlab",
    version,
    about = "A desk-scale laboratory for redistributing transformer FFN capacity across layers: \
             plan parameter-parity placements, pretrain, evaluate, and analyze."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Emit placement plans (expanded block, parity-solved FFN dimension, parameter delta) as JSON
    Plan(PlanArgs),
    /// Train one model from a run configuration file
    Train(TrainArgs),
    /// Run the full placement sweep: baseline, experimental configs, evaluation reports
    Sweep(SweepArgs),
    /// Evaluate a checkpoint on task files
    Eval(EvalArgs),
    /// Build RI tables, layer importance, and plots from reports and plans
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
pub struct PlanArgs {
    /// Architecture preset name (see error output for the list)
    #[arg(long, conflicts_with = "model_config")]
    pub preset: Option<String>,
    /// Explicit baseline ModelConfig JSON file
    #[arg(long)]
    pub model_config: Option<PathBuf>,
    /// Placement position: first | middle | final
    #[arg(long)]
    pub position: Option<String>,
    /// Percentage of layers that keep (and enlarge) their FFN
    #[arg(long)]
    pub ratio: Option<u32>,
    /// Emit every position × ratio plan plus the baseline
    #[arg(long)]
    pub all: bool,
    /// Output directory for plan JSON files
    #[arg(long, env = "FFNLAB_OUT", default_value = ".")]
    pub out: PathBuf,
    /// Also print a per-layer table for each plan
    #[arg(long)]
    pub table: bool,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Run configuration JSON: {"model": ..., "train": ..., "tokenizer"?: ...}
    #[arg(long)]
    pub config: PathBuf,
    /// Corpus file or directory
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory (checkpoints, loss.csv)
    #[arg(long, env = "FFNLAB_OUT")]
    pub out: PathBuf,
    /// Resume from a training checkpoint
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Allow the resumed run to adopt a new schedule (checkpoint branching)
    #[arg(long, requires = "resume")]
    pub branch: bool,
}

#[derive(Args)]
pub struct SweepArgs {
    /// ExperimentSpec JSON file
    #[arg(long)]
    pub spec: PathBuf,
    /// Override the experiment file's output root
    #[arg(long, env = "FFNLAB_OUT")]
    pub out: Option<PathBuf>,
    /// Concurrent training runs
    #[arg(long, env = "FFNLAB_THREADS", default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Model or training checkpoint
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Task file (.jsonl) or directory of task files
    #[arg(long)]
    pub tasks: PathBuf,
    /// Report output path
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
    /// Identifier recorded in the report
    #[arg(long, default_value = "model")]
    pub model_id: String,
    /// Score choices by raw summed log-likelihood instead of per-token mean
    #[arg(long)]
    pub raw_likelihood: bool,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Directory of evaluation report JSON files (must include baseline)
    #[arg(long)]
    pub reports: PathBuf,
    /// Directory of placement plan JSON files
    #[arg(long)]
    pub plans: PathBuf,
    /// Output directory (report.csv, importance.csv, summary.json, plots/)
    #[arg(long, env = "FFNLAB_OUT", default_value = "analysis")]
    pub out: PathBuf,
    /// Comma-separated task names to include (default: all)
    #[arg(long, value_delimiter = ',')]
    pub tasks_include: Vec<String>,
    /// Comma-separated task names to exclude
    #[arg(long, value_delimiter = ',')]
    pub tasks_exclude: Vec<String>,
}

/// `train --config` file shape.
#[derive(serde::Deserialize)]
pub struct TrainRunConfig {
    pub model: ModelSection,
    pub train: TrainConfig,
    #[serde(default)]
    pub tokenizer: Option<TokenizerSpec>,
}

#[derive(serde::Deserialize)]
#[serde(untagged)]
pub enum ModelSection {
    Preset { preset: String, position: Option<String>, ratio: Option<u32> },
    PlanFile { plan: PathBuf },
    Explicit(ModelConfig),
}

fn parse_position(s: &str) -> Result<Position> {
    match s {
        "first" => Ok(Position::First),
        "middle" => Ok(Position::Middle),
        "final" => Ok(Position::Final),
        "baseline" => Ok(Position::Baseline),
        other => Err(LabError::Config(format!(
            "unknown position '{other}' (expected first, middle, final, or baseline)"
        ))),
    }
}

impl ModelSection {
    pub fn resolve(&self) -> Result<ModelConfig> {
        match self {
            ModelSection::Preset { preset, position, ratio } => {
                let base = model_preset(preset)?;
                match (position, ratio) {
                    (None, None) => Ok(base),
                    (Some(pos), Some(ratio)) => {
                        let plan = build_plan(&PlacementConfig {
                            position: parse_position(pos)?,
                            ratio_percent: *ratio,
                            base,
                        })?;
                        Ok(plan.model_config())
                    }
                    (None, Some(100)) => Ok(base),
                    _ => Err(LabError::Config(
                        "preset placement needs both `position` and `ratio`".into(),
                    )),
                }
            }
            ModelSection::PlanFile { plan } => {
                let raw = fs::read_to_string(plan).map_err(|e| {
                    LabError::Config(format!("cannot read plan {}: {e}", plan.display()))
                })?;
                let plan: PlacementPlan = serde_json::from_str(&raw)?;
                Ok(plan.model_config())
            }
            ModelSection::Explicit(cfg) => Ok(cfg.clone()),
        }
    }
}

fn load_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let raw = fs::read_to_string(path)
        .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&raw)?)
}

fn plan_summary_line(plan: &PlacementPlan) -> String {
    let block = match (plan.expanded_indices.first(), plan.expanded_indices.last()) {
        (Some(a), Some(b)) => format!("{a}..{b}"),
        _ => "-".into(),
    };
    let rel = plan.param_delta.unsigned_abs() as f64 / plan.baseline_params as f64;
    format!(
        "{:<12} expanded {:<8} ffn_dim {:<7} delta {:>8} ({:.3e} of baseline)",
        plan.config_id, block, plan.ffn_dim_expanded, plan.param_delta, rel
    )
}

pub fn cmd_plan(args: &PlanArgs) -> Result<()> {
    let base = match (&args.preset, &args.model_config) {
        (Some(name), None) => model_preset(name).map_err(|e| {
            LabError::Config(format!("{e}"))
        })?,
        (None, Some(path)) => {
            let cfg: ModelConfig = load_json(path)?;
            cfg.validate()?;
            cfg
        }
        _ => {
            return Err(LabError::Config(format!(
                "pass exactly one of --preset or --model-config; presets: {}",
                preset_list()
            )))
        }
    };
    fs::create_dir_all(&args.out)?;

    let mut cells: Vec<(Position, u32)> = Vec::new();
    if args.all {
        cells.push((Position::Baseline, 100));
        for position in [Position::First, Position::Middle, Position::Final] {
            for ratio in [10, 30, 50, 70, 90] {
                cells.push((position, ratio));
            }
        }
    } else {
        let ratio = args.ratio.ok_or_else(|| {
            LabError::Config("pass --ratio (and --position), or --all".into())
        })?;
        let position = match &args.position {
            Some(p) => parse_position(p)?,
            None if ratio == 100 => Position::Baseline,
            None => {
                return Err(LabError::Config(
                    "pass --position first|middle|final (omit only with --ratio 100)".into(),
                ))
            }
        };
        cells.push((position, ratio));
    }

    println!(
        "baseline non-embedding parameters: {}",
        count_params(&base, false)
    );
    for (position, ratio) in cells {
        let plan = build_plan(&PlacementConfig { position, ratio_percent: ratio, base: base.clone() })?;
        let path = args.out.join(format!("{}.json", plan.config_id));
        write_json(&path, &plan)?;
        println!("{}", plan_summary_line(&plan));
        if plan.ratio_percent == 100 {
            println!("  note: ratio 100 equals the baseline architecture; reuse the baseline run");
        }
        if args.table {
            for spec in &plan.layer_specs {
                println!("  layer {:>3}  {:<12} ffn_dim {}", spec.index, format!("{:?}", spec.kind), spec.ffn_dim);
            }
        }
    }
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let run_cfg: TrainRunConfig = load_json(&args.config)?;
    let model_cfg = run_cfg.model.resolve()?;
    model_cfg.validate()?;
    run_cfg.train.validate()?;
    let tokenizer = match &run_cfg.tokenizer {
        Some(spec) => Tokenizer::from_spec(spec.clone()),
        None => Tokenizer::byte_level(),
    };
    let docs = load_documents(&args.corpus)?;
    let documents: Vec<Vec<u32>> = docs.iter().map(|d| tokenizer.encode(d)).collect();

    let state = match &args.resume {
        Some(ckpt) => {
            return resume_with_documents(ckpt, &run_cfg.train, &documents, &args.out, args.branch)
                .map(|state| {
                    println!(
                        "resumed to step {} (final loss {:.4})",
                        state.step,
                        state.loss_history.last().map(|r| r.loss).unwrap_or(f64::NAN)
                    );
                })
        }
        None => TrainState::<f32>::init(&model_cfg, run_cfg.train.seed).map_err(LabError::Core)?,
    };
    let state =
        run_training(&model_cfg, &run_cfg.train, &tokenizer, &documents, &args.out, state)?;
    println!(
        "trained {} steps; final loss {:.4}; outputs in {}",
        state.step,
        state.loss_history.last().map(|r| r.loss).unwrap_or(f64::NAN),
        args.out.display()
    );
    Ok(())
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let mut spec: ExperimentSpec = load_json(&args.spec)?;
    if let Some(out) = &args.out {
        spec.out = out.clone();
    }
    let manifest = run_sweep(&spec, args.jobs)?;
    let mut failed = 0usize;
    for entry in &manifest.runs {
        let status = match entry.status {
            RunStatus::Complete => "complete",
            RunStatus::Skipped => "skipped (already done)",
            RunStatus::Failed => {
                failed += 1;
                "FAILED"
            }
            RunStatus::Aliased => "aliased to baseline",
        };
        match &entry.error {
            Some(err) => println!("{:<12} {status}: {err}", entry.id),
            None => println!("{:<12} {status}", entry.id),
        }
    }
    println!("manifest: {}", spec.out.join("manifest.json").display());
    if failed > 0 {
        return Err(LabError::Aborted(format!("{failed} run(s) failed; see manifest")));
    }
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let (model_cfg, tok_spec, params) = load_scorer_checkpoint(&args.checkpoint)?;
    let tokenizer = Tokenizer::from_spec(tok_spec);
    let tasks = load_tasks(&args.tasks)?;
    let norm = if args.raw_likelihood { LikelihoodNorm::Raw } else { LikelihoodNorm::PerToken };
    let report =
        evaluate_params(&model_cfg, &params, &tokenizer, &tasks, norm, &args.model_id, None, None)?;
    for result in &report.results {
        let metric = match result.metric {
            ffnlab_core::eval::MetricKind::Accuracy => "accuracy",
            ffnlab_core::eval::MetricKind::Perplexity => "perplexity",
        };
        let chance = result
            .chance_level
            .map(|c| format!(" (chance {c:.3}{})", if result.below_chance { ", BELOW" } else { "" }))
            .unwrap_or_default();
        println!("{:<20} {metric:<11} {:>10.4}{chance}", result.task, result.value);
    }
    write_json(&args.out, &report)?;
    println!("report: {}", args.out.display());
    Ok(())
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let filter = TaskFilter {
        include: if args.tasks_include.is_empty() {
            None
        } else {
            Some(args.tasks_include.iter().cloned().collect::<BTreeSet<_>>())
        },
        exclude: args.tasks_exclude.iter().cloned().collect(),
    };
    let output = run_analysis(&args.reports, &args.plans, &args.out, &filter)?;
    println!("average relative improvement (%):");
    let mut ranked: Vec<(&String, &f64)> = output.averages.iter().collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(a.1).unwrap_or(std::cmp::Ordering::Equal));
    for (config, ri) in ranked {
        println!("  {config:<12} {ri:>8.3}");
    }
    for warning in &output.warnings {
        println!("warning: {warning}");
    }
    println!("outputs in {}", args.out.display());
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Plan(args) => cmd_plan(args),
        Command::Train(args) => cmd_train(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Analyze(args) => cmd_analyze(args),
    }
}
