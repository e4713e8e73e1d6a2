//! Checkpoint files on disk. Writes are atomic (temp file + rename) and the
//! codec in `ffnlab_core::checkpoint` guarantees bit-exact round-trips.

use std::fs;
use std::path::Path;

use ffnlab_core::checkpoint::{
    decode_model, decode_train, encode_model, encode_train, read_header, CheckpointHeader,
    CheckpointKind,
};
use ffnlab_core::model::{ModelConfig, ModelParams};
use ffnlab_core::tokenizer::TokenizerSpec;
use ffnlab_core::train::{TrainConfig, TrainState};

use crate::{LabError, Result};

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_model_checkpoint(
    path: &Path,
    cfg: &ModelConfig,
    tokenizer: &TokenizerSpec,
    params: &ModelParams<f32>,
) -> Result<()> {
    write_atomic(path, &encode_model(cfg, tokenizer, params))
}

pub fn save_train_checkpoint(
    path: &Path,
    cfg: &ModelConfig,
    tokenizer: &TokenizerSpec,
    train_cfg: &TrainConfig,
    state: &TrainState<f32>,
) -> Result<()> {
    write_atomic(path, &encode_train(cfg, tokenizer, train_cfg, state))
}

pub fn load_header(path: &Path) -> Result<CheckpointHeader> {
    let bytes = fs::read(path)
        .map_err(|e| LabError::Config(format!("cannot read checkpoint {}: {e}", path.display())))?;
    Ok(read_header(&bytes)?.0)
}

pub fn load_train_checkpoint(
    path: &Path,
) -> Result<(ModelConfig, TokenizerSpec, TrainConfig, TrainState<f32>)> {
    let bytes = fs::read(path)
        .map_err(|e| LabError::Config(format!("cannot read checkpoint {}: {e}", path.display())))?;
    Ok(decode_train::<f32>(&bytes)?)
}

/// Loads frozen weights from either a model or a training checkpoint.
pub fn load_scorer_checkpoint(
    path: &Path,
) -> Result<(ModelConfig, TokenizerSpec, ModelParams<f32>)> {
    let bytes = fs::read(path)
        .map_err(|e| LabError::Config(format!("cannot read checkpoint {}: {e}", path.display())))?;
    let (header, _) = read_header(&bytes)?;
    match header.kind {
        CheckpointKind::Model => Ok(decode_model::<f32>(&bytes)?),
        CheckpointKind::Train => {
            let (cfg, tok, _, state) = decode_train::<f32>(&bytes)?;
            Ok((cfg, tok, state.params))
        }
    }
}
