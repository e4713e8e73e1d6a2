//! Task evaluation: perplexity under teacher forcing, multiple-choice by
//! (length-normalized) choice log-likelihood, and teacher-forced
//! token-match accuracy for knowledge QA.
//!
//! Everything is written against the [`ScoringModel`] trait so the
//! protocols can be exercised with hand-built models; [`ModelScorer`]
//! adapts the transformer. Metric arithmetic is f64 throughout and items
//! reduce in order, so reports are deterministic.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;

use crate::elem::Elem;
use crate::error::{CoreError, Result};
use crate::graph::Graph;
use crate::model::{bind, forward, ModelConfig, ModelParams};
use crate::tokenizer::Tokenizer;

/// Anything that maps a token prefix to next-token logits.
pub trait ScoringModel {
    fn vocab_size(&self) -> usize;
    /// Row-major `[tokens.len(), vocab_size]` logits.
    fn logits(&self, tokens: &[u32]) -> Result<Vec<f64>>;
}

/// Frozen transformer weights as a [`ScoringModel`].
pub struct ModelScorer<'a, E: Elem> {
    pub cfg: &'a ModelConfig,
    pub params: &'a ModelParams<E>,
}

impl<'a, E: Elem> ScoringModel for ModelScorer<'a, E> {
    fn vocab_size(&self) -> usize {
        self.cfg.vocab_size
    }

    fn logits(&self, tokens: &[u32]) -> Result<Vec<f64>> {
        let mut graph = Graph::new();
        let bound = bind(&mut graph, self.cfg, self.params, false);
        let out = forward(&mut graph, self.cfg, &bound, tokens)?;
        Ok(graph.value(out).data().iter().map(|&v| Elem::as_f64(v)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Perplexity,
    MultipleChoice,
    KnowledgeQa,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(untagged)]
pub enum TaskItem {
    Choice { context: String, choices: Vec<String>, answer_index: usize },
    Qa { question: String, answer: String },
    Text { text: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalTask {
    pub name: String,
    pub kind: TaskKind,
    pub items: Vec<TaskItem>,
}

impl EvalTask {
    pub fn validate(&self, tokenizer: &Tokenizer) -> Result<()> {
        if self.items.is_empty() {
            return Err(CoreError::Config(format!("task {} has no items", self.name)));
        }
        for (i, item) in self.items.iter().enumerate() {
            let at = |msg: &str| CoreError::Config(format!("task {} item {i}: {msg}", self.name));
            match (self.kind, item) {
                (TaskKind::Perplexity, TaskItem::Text { text }) => {
                    if tokenizer.encode(text).len() < 2 {
                        return Err(at("text must tokenize to at least 2 tokens"));
                    }
                }
                (TaskKind::MultipleChoice, TaskItem::Choice { choices, answer_index, .. }) => {
                    if choices.len() < 2 {
                        return Err(at("need at least 2 choices"));
                    }
                    if *answer_index >= choices.len() {
                        return Err(at("answer_index out of range"));
                    }
                    if choices.iter().any(|c| tokenizer.encode(c).is_empty()) {
                        return Err(at("every choice must tokenize to at least 1 token"));
                    }
                }
                (TaskKind::KnowledgeQa, TaskItem::Qa { question, answer }) => {
                    if tokenizer.encode(answer).is_empty() {
                        return Err(at("answer must tokenize to at least 1 token"));
                    }
                    if question.is_empty() {
                        return Err(at("question must be non-empty"));
                    }
                }
                _ => return Err(at("item shape does not match the task kind")),
            }
        }
        Ok(())
    }

    /// Chance-level accuracy, defined for choice tasks only.
    pub fn chance_level(&self) -> Option<f64> {
        if self.kind != TaskKind::MultipleChoice {
            return None;
        }
        let mut total = 0.0;
        for item in &self.items {
            if let TaskItem::Choice { choices, .. } = item {
                total += 1.0 / choices.len() as f64;
            }
        }
        Some(total / self.items.len() as f64)
    }
}

/// How choice likelihoods are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum LikelihoodNorm {
    /// Mean log-likelihood per choice token (default).
    #[default]
    PerToken,
    /// Raw summed log-likelihood.
    Raw,
}


#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    Perplexity,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TaskResult {
    pub task: String,
    pub kind: TaskKind,
    pub metric: MetricKind,
    pub value: f64,
    pub items: usize,
    pub chance_level: Option<f64>,
    pub below_chance: bool,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalReport {
    pub model_id: String,
    pub checkpoint_step: Option<u64>,
    pub seed: Option<u64>,
    pub results: Vec<TaskResult>,
}

fn log_softmax_row(row: &[f64]) -> Vec<f64> {
    let mut max = row[0];
    for &v in row {
        if v > max {
            max = v;
        }
    }
    let mut sum = 0.0;
    for &v in row {
        sum += Float::exp(v - max);
    }
    let lse = max + Float::ln(sum);
    row.iter().map(|&v| v - lse).collect()
}

/// Log-probabilities of `tokens[1..]` under the model, teacher-forced.
fn continuation_logprobs<M: ScoringModel>(model: &M, tokens: &[u32]) -> Result<Vec<f64>> {
    let vocab = model.vocab_size();
    let logits = model.logits(&tokens[..tokens.len() - 1])?;
    let mut out = Vec::with_capacity(tokens.len() - 1);
    for (pos, &next) in tokens[1..].iter().enumerate() {
        if next as usize >= vocab {
            return Err(CoreError::Index { what: "token", index: next as usize, bound: vocab });
        }
        let row = &logits[pos * vocab..(pos + 1) * vocab];
        out.push(log_softmax_row(row)[next as usize]);
    }
    Ok(out)
}

/// `exp(total NLL / total predicted tokens)` over all texts.
pub fn perplexity<M: ScoringModel>(
    model: &M,
    tokenizer: &Tokenizer,
    texts: &[&str],
) -> Result<f64> {
    if texts.is_empty() {
        return Err(CoreError::Config("perplexity over an empty task".into()));
    }
    let mut total_nll = 0.0;
    let mut total_tokens = 0usize;
    for text in texts {
        let ids = tokenizer.encode(text);
        if ids.len() < 2 {
            return Err(CoreError::Config(format!(
                "text {text:?} tokenizes to fewer than 2 tokens"
            )));
        }
        for lp in continuation_logprobs(model, &ids)? {
            total_nll -= lp;
            total_tokens += 1;
        }
    }
    Ok(Float::exp(total_nll / total_tokens as f64))
}

/// Index of the highest-scoring choice; ties resolve to the lowest index.
pub fn multiple_choice<M: ScoringModel>(
    model: &M,
    tokenizer: &Tokenizer,
    context: &str,
    choices: &[String],
    norm: LikelihoodNorm,
) -> Result<usize> {
    if choices.len() < 2 {
        return Err(CoreError::Contract("multiple_choice needs at least 2 choices".into()));
    }
    let context_ids = tokenizer.encode(context);
    let mut best: Option<(usize, f64)> = None;
    for (i, choice) in choices.iter().enumerate() {
        let choice_ids = tokenizer.encode(choice);
        let mut full = context_ids.clone();
        full.extend_from_slice(&choice_ids);
        // Position of the first scorable choice token: every choice token
        // needs a predecessor.
        let first = context_ids.len().max(1);
        let logprobs = continuation_logprobs(model, &full)?;
        let scored = &logprobs[first - 1..];
        let sum: f64 = scored.iter().sum();
        let score = match norm {
            LikelihoodNorm::PerToken => sum / scored.len() as f64,
            LikelihoodNorm::Raw => sum,
        };
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((i, score));
        }
    }
    Ok(best.expect("at least two choices").0)
}

pub fn multiple_choice_accuracy<M: ScoringModel>(
    model: &M,
    tokenizer: &Tokenizer,
    items: &[TaskItem],
    norm: LikelihoodNorm,
) -> Result<f64> {
    let mut correct = 0usize;
    for item in items {
        let TaskItem::Choice { context, choices, answer_index } = item else {
            return Err(CoreError::Contract("non-choice item in a choice task".into()));
        };
        if multiple_choice(model, tokenizer, context, choices, norm)? == *answer_index {
            correct += 1;
        }
    }
    Ok(correct as f64 / items.len() as f64)
}

/// Teacher-forced token-match accuracy: the model greedily proposes one
/// token per answer position while the gold prefix (never the model's own
/// output) is fed back, and the item score is the matched fraction of the
/// full answer. The task score is the mean over items.
pub fn knowledge_accuracy<M: ScoringModel>(
    model: &M,
    tokenizer: &Tokenizer,
    items: &[TaskItem],
) -> Result<f64> {
    if items.is_empty() {
        return Err(CoreError::Config("knowledge task has no items".into()));
    }
    let vocab = model.vocab_size();
    let mut total = 0.0;
    for item in items {
        let TaskItem::Qa { question, answer } = item else {
            return Err(CoreError::Contract("non-QA item in a knowledge task".into()));
        };
        let question_ids = tokenizer.encode(question);
        let answer_ids = tokenizer.encode(answer);
        let mut matched = 0usize;
        let mut prompt = question_ids.clone();
        for &gold in &answer_ids {
            let logits = model.logits(&prompt)?;
            let last = &logits[(prompt.len() - 1) * vocab..prompt.len() * vocab];
            let mut arg = 0usize;
            for (j, &v) in last.iter().enumerate() {
                if v > last[arg] {
                    arg = j;
                }
            }
            if arg as u32 == gold {
                matched += 1;
            }
            prompt.push(gold);
        }
        total += matched as f64 / answer_ids.len() as f64;
    }
    Ok(total / items.len() as f64)
}

/// Runs one task end to end and annotates chance level.
pub fn evaluate_task<M: ScoringModel>(
    model: &M,
    tokenizer: &Tokenizer,
    task: &EvalTask,
    norm: LikelihoodNorm,
) -> Result<TaskResult> {
    task.validate(tokenizer)?;
    let (metric, value) = match task.kind {
        TaskKind::Perplexity => {
            let texts: Vec<&str> = task
                .items
                .iter()
                .map(|item| match item {
                    TaskItem::Text { text } => text.as_str(),
                    _ => unreachable!("validated"),
                })
                .collect();
            (MetricKind::Perplexity, perplexity(model, tokenizer, &texts)?)
        }
        TaskKind::MultipleChoice => (
            MetricKind::Accuracy,
            multiple_choice_accuracy(model, tokenizer, &task.items, norm)?,
        ),
        TaskKind::KnowledgeQa => {
            (MetricKind::Accuracy, knowledge_accuracy(model, tokenizer, &task.items)?)
        }
    };
    let chance_level = task.chance_level();
    let below_chance = chance_level.is_some_and(|c| value + 1e-12 < c);
    Ok(TaskResult {
        task: task.name.clone(),
        kind: task.kind,
        metric,
        value,
        items: task.items.len(),
        chance_level,
        below_chance,
    })
}

/// Evaluates every task against one model.
pub fn evaluate_report<M: ScoringModel>(
    model: &M,
    tokenizer: &Tokenizer,
    tasks: &[EvalTask],
    norm: LikelihoodNorm,
    model_id: &str,
    checkpoint_step: Option<u64>,
    seed: Option<u64>,
) -> Result<EvalReport> {
    let mut results = Vec::with_capacity(tasks.len());
    for task in tasks {
        results.push(evaluate_task(model, tokenizer, task, norm)?);
    }
    Ok(EvalReport { model_id: model_id.into(), checkpoint_step, seed, results })
}
