//! Corpus loading: plain-text files (one document per file), JSON-lines
//! files with a `"text"` field, or directories of either. Document order is
//! lexicographic by file name so runs are reproducible.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{LabError, Result};

#[derive(serde::Deserialize)]
struct TextLine {
    text: String,
}

/// Loads documents from a file or directory.
pub fn load_documents(path: &Path) -> Result<Vec<String>> {
    if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        let mut docs = Vec::new();
        for file in files {
            docs.extend(load_documents(&file)?);
        }
        if docs.is_empty() {
            return Err(LabError::Config(format!("no documents under {}", path.display())));
        }
        return Ok(docs);
    }
    let raw = fs::read_to_string(path)
        .map_err(|e| LabError::Config(format!("cannot read corpus {}: {e}", path.display())))?;
    if path.extension().is_some_and(|ext| ext == "jsonl") {
        let mut docs = Vec::new();
        for (i, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TextLine = serde_json::from_str(line).map_err(|e| {
                LabError::Config(format!("{}:{}: bad JSON line: {e}", path.display(), i + 1))
            })?;
            docs.push(parsed.text);
        }
        if docs.is_empty() {
            return Err(LabError::Config(format!("{} holds no documents", path.display())));
        }
        Ok(docs)
    } else {
        Ok(vec![raw])
    }
}

/// Deterministic synthetic English-like text of roughly `target_bytes`
/// bytes, for smoke corpora and tests.
pub fn synthetic_text(seed: u64, target_bytes: usize) -> String {
    const SUBJECTS: [&str; 8] = [
        "the engine", "a small model", "the planner", "every layer", "the tokenizer",
        "this corpus", "the scheduler", "a checkpoint",
    ];
    const VERBS: [&str; 8] =
        ["keeps", "finds", "builds", "moves", "stores", "reads", "writes", "checks"];
    const OBJECTS: [&str; 8] = [
        "a clean gradient",
        "the next token",
        "its own state",
        "a longer context",
        "the loss curve",
        "a parity budget",
        "the middle block",
        "an even split",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::with_capacity(target_bytes + 64);
    while out.len() < target_bytes {
        let s = SUBJECTS[rng.gen_range(0..SUBJECTS.len())];
        let v = VERBS[rng.gen_range(0..VERBS.len())];
        let o = OBJECTS[rng.gen_range(0..OBJECTS.len())];
        out.push_str(s);
        out.push(' ');
        out.push_str(v);
        out.push(' ');
        out.push_str(o);
        if rng.gen_bool(0.2) {
            out.push_str(" again");
        }
        out.push_str(". ");
        if rng.gen_bool(0.1) {
            out.push('\n');
        }
    }
    out
}

/// Splits synthetic text into sentence documents (used by tests to get a
/// multi-document corpus from one string).
pub fn sentences(text: &str) -> Vec<String> {
    text.split(". ").filter(|s| !s.trim().is_empty()).map(|s| format!("{s}.")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_text_is_deterministic_and_sized() {
        let a = synthetic_text(5, 2000);
        let b = synthetic_text(5, 2000);
        assert_eq!(a, b);
        assert!(a.len() >= 2000);
        assert!(a.is_ascii());
    }

    #[test]
    fn jsonl_and_plain_files_load() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.txt"), "plain doc").unwrap();
        fs::write(dir.path().join("a.jsonl"), "{\"text\":\"one\"}\n{\"text\":\"two\"}\n").unwrap();
        let docs = load_documents(dir.path()).unwrap();
        assert_eq!(docs, vec!["one".to_string(), "two".into(), "plain doc".into()]);
    }

    #[test]
    fn empty_dir_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_documents(dir.path()).is_err());
    }
}
