//! Checkpoint container: a JSON header (config, tensor manifest, hashes)
//! followed by the raw little-endian tensor buffers.
//!
//! Layout: `b"FFNLAB01"` magic, a little-endian u64 header length, the
//! header JSON, then the payload. The header stores a SHA-256 of the
//! payload, a hash of the model configuration (resume refuses a mismatch),
//! and — for training checkpoints — the optimizer moments, step, and loss
//! history. Round-trips are bit-exact.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::elem::{Dtype, Elem};
use crate::error::{CoreError, Result};
use crate::model::{FfnParams, LayerParams, ModelConfig, ModelParams};
use crate::optim::AdamWState;
use crate::tensor::Tensor;
use crate::tokenizer::TokenizerSpec;
use crate::train::{LossRecord, TrainConfig, TrainState};

pub const MAGIC: &[u8; 8] = b"FFNLAB01";

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Model,
    Train,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the payload.
    pub offset: u64,
    pub precision: Dtype,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainSection {
    pub step: u64,
    pub seed: u64,
    pub train_config: TrainConfig,
    pub train_config_hash: String,
    pub loss_history: Vec<LossRecord>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CheckpointHeader {
    pub kind: CheckpointKind,
    pub model_config: ModelConfig,
    pub model_config_hash: String,
    pub tokenizer: TokenizerSpec,
    pub tensors: Vec<TensorEntry>,
    pub payload_sha256: String,
    pub train: Option<TrainSection>,
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Stable hash of a model configuration (canonical JSON digest).
pub fn model_config_hash(cfg: &ModelConfig) -> String {
    sha256_hex(serde_json::to_string(cfg).expect("config serializes").as_bytes())
}

pub fn train_config_hash(cfg: &TrainConfig) -> String {
    sha256_hex(serde_json::to_string(cfg).expect("config serializes").as_bytes())
}

fn encode_container<E: Elem>(
    kind: CheckpointKind,
    model_config: &ModelConfig,
    tokenizer: &TokenizerSpec,
    train: Option<TrainSection>,
    tensors: &[(String, &Tensor<E>)],
) -> Vec<u8> {
    let mut payload = Vec::new();
    let mut entries = Vec::with_capacity(tensors.len());
    for (name, tensor) in tensors {
        entries.push(TensorEntry {
            name: name.clone(),
            shape: tensor.shape().to_vec(),
            offset: payload.len() as u64,
            precision: E::DTYPE,
        });
        for &v in tensor.data() {
            v.write_le(&mut payload);
        }
    }
    let header = CheckpointHeader {
        kind,
        model_config: model_config.clone(),
        model_config_hash: model_config_hash(model_config),
        tokenizer: tokenizer.clone(),
        tensors: entries,
        payload_sha256: sha256_hex(&payload),
        train,
    };
    let header_json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(MAGIC.len() + 8 + header_json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    out.extend_from_slice(&payload);
    out
}

/// Parses and validates the header; verifies the payload checksum.
pub fn read_header(bytes: &[u8]) -> Result<(CheckpointHeader, &[u8])> {
    if bytes.len() < MAGIC.len() + 8 || &bytes[..8] != MAGIC {
        return Err(CoreError::Format("not a checkpoint (bad magic)".into()));
    }
    let mut len_bytes = [0u8; 8];
    len_bytes.copy_from_slice(&bytes[8..16]);
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let header_end = 16usize.checked_add(header_len).ok_or_else(|| {
        CoreError::Format("header length overflows".into())
    })?;
    if bytes.len() < header_end {
        return Err(CoreError::Format("truncated header".into()));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[16..header_end])
        .map_err(|e| CoreError::Format(format!("bad header JSON: {e}")))?;
    let payload = &bytes[header_end..];
    let actual = sha256_hex(payload);
    if actual != header.payload_sha256 {
        return Err(CoreError::Checksum { expected: header.payload_sha256.clone(), actual });
    }
    Ok((header, payload))
}

fn extract_tensors<E: Elem>(
    header: &CheckpointHeader,
    payload: &[u8],
) -> Result<BTreeMap<String, Tensor<E>>> {
    let mut out = BTreeMap::new();
    for entry in &header.tensors {
        if entry.precision != E::DTYPE {
            return Err(CoreError::Format(format!(
                "tensor {} stored as {} but {} requested",
                entry.name,
                entry.precision.name(),
                E::DTYPE.name()
            )));
        }
        let numel: usize = entry.shape.iter().product();
        let size = E::DTYPE.size_bytes();
        let start = entry.offset as usize;
        let end = start + numel * size;
        if end > payload.len() {
            return Err(CoreError::Format(format!("tensor {} overruns payload", entry.name)));
        }
        let mut data = Vec::with_capacity(numel);
        for i in 0..numel {
            data.push(E::read_le(&payload[start + i * size..]));
        }
        out.insert(entry.name.clone(), Tensor::new(entry.shape.clone(), data)?);
    }
    Ok(out)
}

fn take_tensor<E: Elem>(
    map: &mut BTreeMap<String, Tensor<E>>,
    name: &str,
    shape: &[usize],
) -> Result<Tensor<E>> {
    let tensor = map
        .remove(name)
        .ok_or_else(|| CoreError::Format(format!("checkpoint is missing tensor {name}")))?;
    if tensor.shape() != shape {
        return Err(CoreError::Format(format!(
            "tensor {name} has shape {:?}, config implies {shape:?}",
            tensor.shape()
        )));
    }
    Ok(tensor)
}

fn params_from_map<E: Elem>(
    cfg: &ModelConfig,
    map: &mut BTreeMap<String, Tensor<E>>,
    prefix: &str,
) -> Result<ModelParams<E>> {
    let d = cfg.hidden_dim;
    let kv = cfg.kv_dim();
    let n = |field: &str| format!("{prefix}{field}");
    let embedding = take_tensor(map, &n("embedding"), &[cfg.vocab_size, d])?;
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for (i, spec) in cfg.layer_specs.iter().enumerate() {
        let ln = |field: &str| format!("{prefix}layer{i:02}.{field}");
        let attn_norm_gain = take_tensor(map, &ln("attn_norm"), &[d])?;
        let w_query = take_tensor(map, &ln("w_query"), &[d, d])?;
        let w_key = take_tensor(map, &ln("w_key"), &[kv, d])?;
        let w_value = take_tensor(map, &ln("w_value"), &[kv, d])?;
        let w_output = take_tensor(map, &ln("w_output"), &[d, d])?;
        let ffn = if spec.has_ffn() {
            Some(FfnParams {
                norm_gain: take_tensor(map, &ln("ffn_norm"), &[d])?,
                w_gate: take_tensor(map, &ln("w_gate"), &[spec.ffn_dim, d])?,
                w_up: take_tensor(map, &ln("w_up"), &[spec.ffn_dim, d])?,
                w_down: take_tensor(map, &ln("w_down"), &[d, spec.ffn_dim])?,
            })
        } else {
            None
        };
        layers.push(LayerParams { attn_norm_gain, w_query, w_key, w_value, w_output, ffn });
    }
    let final_norm_gain = take_tensor(map, &n("final_norm"), &[d])?;
    let unembedding = take_tensor(map, &n("unembedding"), &[cfg.vocab_size, d])?;
    Ok(ModelParams { embedding, layers, final_norm_gain, unembedding })
}

/// Serializes frozen model weights (the artifact `eval` consumes).
pub fn encode_model<E: Elem>(
    cfg: &ModelConfig,
    tokenizer: &TokenizerSpec,
    params: &ModelParams<E>,
) -> Vec<u8> {
    let tensors: Vec<(String, &Tensor<E>)> =
        params.tensors().into_iter().map(|(name, _, t)| (name, t)).collect();
    encode_container(CheckpointKind::Model, cfg, tokenizer, None, &tensors)
}

pub fn decode_model<E: Elem>(bytes: &[u8]) -> Result<(ModelConfig, TokenizerSpec, ModelParams<E>)> {
    let (header, payload) = read_header(bytes)?;
    header.model_config.validate()?;
    let mut map = extract_tensors(&header, payload)?;
    let params = params_from_map(&header.model_config, &mut map, "")?;
    Ok((header.model_config, header.tokenizer, params))
}

/// Serializes the full training state (weights + optimizer moments).
pub fn encode_train<E: Elem>(
    cfg: &ModelConfig,
    tokenizer: &TokenizerSpec,
    train_cfg: &TrainConfig,
    state: &TrainState<E>,
) -> Vec<u8> {
    let mut tensors: Vec<(String, &Tensor<E>)> =
        state.params.tensors().into_iter().map(|(name, _, t)| (name, t)).collect();
    let names: Vec<String> = state.params.tensors().iter().map(|(n, _, _)| n.clone()).collect();
    for (i, name) in names.iter().enumerate() {
        tensors.push((format!("adam_m.{name}"), &state.opt.m[i]));
        tensors.push((format!("adam_v.{name}"), &state.opt.v[i]));
    }
    let train = TrainSection {
        step: state.step,
        seed: state.seed,
        train_config: train_cfg.clone(),
        train_config_hash: train_config_hash(train_cfg),
        loss_history: state.loss_history.clone(),
    };
    encode_container(CheckpointKind::Train, cfg, tokenizer, Some(train), &tensors)
}

pub fn decode_train<E: Elem>(
    bytes: &[u8],
) -> Result<(ModelConfig, TokenizerSpec, TrainConfig, TrainState<E>)> {
    let (header, payload) = read_header(bytes)?;
    header.model_config.validate()?;
    let section = header
        .train
        .clone()
        .ok_or_else(|| CoreError::Format("not a training checkpoint".into()))?;
    let mut map = extract_tensors(&header, payload)?;
    let params = params_from_map(&header.model_config, &mut map, "")?;
    let mut m = Vec::new();
    let mut v = Vec::new();
    for (name, _, t) in params.tensors() {
        m.push(take_tensor(&mut map, &format!("adam_m.{name}"), t.shape())?);
        v.push(take_tensor(&mut map, &format!("adam_v.{name}"), t.shape())?);
    }
    let state = TrainState {
        step: section.step,
        params,
        opt: AdamWState { m, v },
        seed: section.seed,
        loss_history: section.loss_history,
    };
    Ok((header.model_config, header.tokenizer, section.train_config, state))
}

/// Resume gate: the stored model config hash must match, and — unless the
/// caller is deliberately branching onto a new schedule — the training
/// config hash as well.
pub fn verify_resume(
    header: &CheckpointHeader,
    model_cfg: &ModelConfig,
    train_cfg: Option<&TrainConfig>,
) -> Result<()> {
    if header.model_config_hash != model_config_hash(model_cfg) {
        return Err(CoreError::Config(
            "resume refused: checkpoint was written for a different model configuration".into(),
        ));
    }
    if let Some(tc) = train_cfg {
        let section = header
            .train
            .as_ref()
            .ok_or_else(|| CoreError::Config("resume refused: not a training checkpoint".into()))?;
        if section.train_config_hash != train_config_hash(tc) {
            return Err(CoreError::Config(
                "resume refused: training configuration hash mismatch (pass a branch flag to \
                 adopt a new schedule)"
                    .into(),
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LayerKind;
    use crate::model::LayerSpec;
    use crate::schedule::Scheduler;
    use alloc::vec;

    fn cfg() -> ModelConfig {
        let mut cfg = ModelConfig::uniform(2, 8, 2, 2, 17, 16, 12);
        cfg.layer_specs[1] = LayerSpec { index: 2, kind: LayerKind::Deactivated, ffn_dim: 0 };
        cfg.n_layers = 2;
        cfg
    }

    fn tcfg() -> TrainConfig {
        TrainConfig {
            total_steps: 50,
            warmup_steps: 5,
            peak_lr: 1e-3,
            scheduler: Scheduler::Wsd,
            wsd_decay_fraction: 0.2,
            batch_size: 2,
            seq_len: 8,
            weight_decay: 0.1,
            grad_clip_norm: 1.0,
            seed: 3,
            checkpoint_interval: 10,
        }
    }

    #[test]
    fn model_checkpoint_roundtrip_is_bit_exact() {
        let cfg = cfg();
        let params = ModelParams::<f32>::init(&cfg, 5).unwrap();
        let bytes = encode_model(&cfg, &TokenizerSpec::Byte, &params);
        let (cfg2, tok, params2) = decode_model::<f32>(&bytes).unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(tok, TokenizerSpec::Byte);
        assert_eq!(params2, params);
        // Re-encoding yields identical bytes.
        assert_eq!(encode_model(&cfg2, &tok, &params2), bytes);
    }

    #[test]
    fn train_checkpoint_roundtrip_preserves_state() {
        let cfg = cfg();
        let tc = tcfg();
        let mut state = TrainState::<f32>::init(&cfg, 3).unwrap();
        state.step = 7;
        state.loss_history.push(LossRecord { step: 7, lr: 1e-3, loss: 2.5, grad_norm: 0.7 });
        let bytes = encode_train(&cfg, &TokenizerSpec::Byte, &tc, &state);
        let (cfg2, _, tc2, state2) = decode_train::<f32>(&bytes).unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(tc2, tc);
        assert_eq!(state2.step, 7);
        assert_eq!(state2.params, state.params);
        assert_eq!(state2.opt, state.opt);
        assert_eq!(state2.loss_history, state.loss_history);
    }

    #[test]
    fn corrupt_payload_is_a_checksum_error() {
        let cfg = cfg();
        let params = ModelParams::<f32>::init(&cfg, 5).unwrap();
        let mut bytes = encode_model(&cfg, &TokenizerSpec::Byte, &params);
        let last = bytes.len() - 1;
        bytes[last] ^= 0x40;
        assert!(matches!(decode_model::<f32>(&bytes), Err(CoreError::Checksum { .. })));
    }

    #[test]
    fn wrong_magic_and_wrong_dtype_are_format_errors() {
        let cfg = cfg();
        let params = ModelParams::<f32>::init(&cfg, 5).unwrap();
        let bytes = encode_model(&cfg, &TokenizerSpec::Byte, &params);
        assert!(matches!(decode_model::<f64>(&bytes), Err(CoreError::Format(_))));
        let mut broken = bytes.clone();
        broken[0] = b'X';
        assert!(matches!(decode_model::<f32>(&broken), Err(CoreError::Format(_))));
    }

    #[test]
    fn resume_refuses_mismatched_config_hashes() {
        let cfg = cfg();
        let tc = tcfg();
        let state = TrainState::<f32>::init(&cfg, 3).unwrap();
        let bytes = encode_train(&cfg, &TokenizerSpec::Byte, &tc, &state);
        let (header, _) = read_header(&bytes).unwrap();

        verify_resume(&header, &cfg, Some(&tc)).unwrap();

        let mut other_model = cfg.clone();
        other_model.max_seq_len = 32;
        assert!(verify_resume(&header, &other_model, Some(&tc)).is_err());

        let mut other_train = tc.clone();
        other_train.total_steps = 60;
        assert!(verify_resume(&header, &cfg, Some(&other_train)).is_err());
        // Branching onto a new schedule skips the training-config gate.
        verify_resume(&header, &cfg, None).unwrap();
    }

    #[test]
    fn manifest_records_shapes_offsets_and_precision() {
        let cfg = cfg();
        let params = ModelParams::<f64>::init(&cfg, 5).unwrap();
        let bytes = encode_model(&cfg, &TokenizerSpec::Byte, &params);
        let (header, payload) = read_header(&bytes).unwrap();
        assert_eq!(header.kind, CheckpointKind::Model);
        let mut expected_offset = 0u64;
        for entry in &header.tensors {
            assert_eq!(entry.precision, Dtype::F64);
            assert_eq!(entry.offset, expected_offset);
            let numel: usize = entry.shape.iter().product();
            expected_offset += (numel * 8) as u64;
        }
        assert_eq!(expected_offset as usize, payload.len());
        assert_eq!(header.tensors[0].name, "embedding");
        assert_eq!(header.tensors[0].shape, vec![17, 8]);
    }
}
