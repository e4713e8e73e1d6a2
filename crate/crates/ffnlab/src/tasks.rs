//! Evaluation task files: JSON-lines, one item per line. The task kind is
//! inferred from the item fields (`text` -> perplexity, `choices` ->
//! multiple choice, `question`/`answer` -> knowledge QA) and the task name
//! from the file stem.

use std::fs;
use std::path::Path;

use ffnlab_core::eval::{EvalTask, TaskItem, TaskKind};

use crate::{LabError, Result};

fn kind_of(item: &TaskItem) -> TaskKind {
    match item {
        TaskItem::Text { .. } => TaskKind::Perplexity,
        TaskItem::Choice { .. } => TaskKind::MultipleChoice,
        TaskItem::Qa { .. } => TaskKind::KnowledgeQa,
    }
}

/// Parses one JSONL task file.
pub fn load_task(path: &Path) -> Result<EvalTask> {
    let raw = fs::read_to_string(path)
        .map_err(|e| LabError::Config(format!("cannot read task {}: {e}", path.display())))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "task".into());
    let mut items = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item: TaskItem = serde_json::from_str(line).map_err(|e| {
            LabError::Config(format!("{}:{}: bad task item: {e}", path.display(), i + 1))
        })?;
        items.push(item);
    }
    let Some(first) = items.first() else {
        return Err(LabError::Config(format!("{} holds no items", path.display())));
    };
    let kind = kind_of(first);
    if let Some(bad) = items.iter().position(|item| kind_of(item) != kind) {
        return Err(LabError::Config(format!(
            "{}: item {} does not match the task kind {:?}",
            path.display(),
            bad + 1,
            kind
        )));
    }
    Ok(EvalTask { name, kind, items })
}

/// Loads a task file, or every `*.jsonl` under a directory (sorted by
/// name).
pub fn load_tasks(path: &Path) -> Result<Vec<EvalTask>> {
    if !path.is_dir() {
        return Ok(vec![load_task(path)?]);
    }
    let mut files: Vec<_> = fs::read_dir(path)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "jsonl"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(LabError::Config(format!("no .jsonl task files under {}", path.display())));
    }
    files.iter().map(|f| load_task(f)).collect()
}
