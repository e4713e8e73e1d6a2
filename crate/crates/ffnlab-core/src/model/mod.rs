//! LLaMA-style decoder: token embedding, pre-normalized attention + FFN
//! layers, final normalization, untied output projection.
//!
//! Each layer carries its own [`LayerSpec`]: a `Standard` layer has the
//! baseline SwiGLU FFN, an `Expanded` layer the same FFN at a larger
//! intermediate dimension, and a `Deactivated` layer no FFN at all (the
//! pre-FFN normalization gain is removed together with the FFN, leaving
//! attention only).

mod forward;

pub use forward::{attention, bind, ffn_forward, forward, layer_forward, BoundFfn, BoundLayer, BoundModel};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::elem::Elem;
use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

/// Epsilon inside the RMS normalization root.
pub const RMS_NORM_EPS: f64 = 1e-6;
/// Standard deviation of the Gaussian projection init.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Standard,
    Expanded,
    Deactivated,
}

/// One transformer layer's FFN setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LayerSpec {
    /// 1-based position in the stack.
    pub index: usize,
    pub kind: LayerKind,
    /// FFN intermediate dimension; zero iff deactivated.
    pub ffn_dim: usize,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            LayerKind::Deactivated => self.ffn_dim == 0,
            _ => self.ffn_dim > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(CoreError::Config(format!(
                "layer {}: kind {:?} inconsistent with ffn_dim {}",
                self.index, self.kind, self.ffn_dim
            )))
        }
    }

    pub fn has_ffn(&self) -> bool {
        self.kind != LayerKind::Deactivated
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub hidden_dim: usize,
    pub n_heads: usize,
    pub n_kv_heads: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub layer_specs: Vec<LayerSpec>,
    #[serde(default = "default_rope_base")]
    pub rope_base: f64,
}

fn default_rope_base() -> f64 {
    10_000.0
}

impl ModelConfig {
    /// All-standard architecture with a uniform FFN dimension.
    pub fn uniform(
        n_layers: usize,
        hidden_dim: usize,
        n_heads: usize,
        n_kv_heads: usize,
        vocab_size: usize,
        max_seq_len: usize,
        ffn_dim: usize,
    ) -> Self {
        let layer_specs = (1..=n_layers)
            .map(|index| LayerSpec { index, kind: LayerKind::Standard, ffn_dim })
            .collect();
        ModelConfig {
            n_layers,
            hidden_dim,
            n_heads,
            n_kv_heads,
            vocab_size,
            max_seq_len,
            layer_specs,
            rope_base: default_rope_base(),
        }
    }

    /// Same architecture with different layer specs.
    pub fn with_layer_specs(&self, layer_specs: Vec<LayerSpec>) -> Self {
        let mut cfg = self.clone();
        cfg.n_layers = layer_specs.len();
        cfg.layer_specs = layer_specs;
        cfg
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.n_heads
    }

    /// Total width of the key/value projections.
    pub fn kv_dim(&self) -> usize {
        self.head_dim() * self.n_kv_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.hidden_dim == 0 || self.vocab_size == 0 || self.max_seq_len == 0
        {
            return Err(CoreError::Config("all model dimensions must be positive".into()));
        }
        if self.n_heads == 0 || !self.hidden_dim.is_multiple_of(self.n_heads) {
            return Err(CoreError::Config(format!(
                "hidden_dim {} must be divisible by n_heads {}",
                self.hidden_dim, self.n_heads
            )));
        }
        if self.n_kv_heads == 0 || !self.n_heads.is_multiple_of(self.n_kv_heads) {
            return Err(CoreError::Config(format!(
                "n_heads {} must be divisible by n_kv_heads {}",
                self.n_heads, self.n_kv_heads
            )));
        }
        if !self.head_dim().is_multiple_of(2) {
            return Err(CoreError::Config(format!(
                "head dimension {} must be even for the rotary encoding",
                self.head_dim()
            )));
        }
        if self.layer_specs.len() != self.n_layers {
            return Err(CoreError::Config(format!(
                "{} layer specs for {} layers",
                self.layer_specs.len(),
                self.n_layers
            )));
        }
        for (i, spec) in self.layer_specs.iter().enumerate() {
            if spec.index != i + 1 {
                return Err(CoreError::Config(format!(
                    "layer spec at position {} carries index {}",
                    i + 1,
                    spec.index
                )));
            }
            spec.validate()?;
        }
        if !(self.rope_base.is_finite() && self.rope_base > 0.0) {
            return Err(CoreError::Config("rope_base must be positive".into()));
        }
        Ok(())
    }
}

/// Exact learnable-scalar count for a configuration.
///
/// With `include_embeddings = false` the embedding and unembedding tables
/// are excluded; model-size labels in this crate are non-embedding counts.
pub fn count_params(cfg: &ModelConfig, include_embeddings: bool) -> u64 {
    let d = cfg.hidden_dim as u64;
    let kv = cfg.kv_dim() as u64;
    let mut total = 0u64;
    for spec in &cfg.layer_specs {
        total += d * d * 2 + kv * d * 2 + d; // q, o, k, v projections + attention norm gain
        if spec.has_ffn() {
            total += 3 * d * spec.ffn_dim as u64 + d; // gate, up, down + FFN norm gain
        }
    }
    total += d; // final norm gain
    if include_embeddings {
        total += 2 * cfg.vocab_size as u64 * d;
    }
    total
}

/// Which decay bucket a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamClass {
    /// Embedding / unembedding tables.
    Embedding,
    /// Projection matrices.
    Matrix,
    /// Normalization gains.
    Gain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfnParams<E: Elem> {
    pub norm_gain: Tensor<E>,
    pub w_gate: Tensor<E>,
    pub w_up: Tensor<E>,
    pub w_down: Tensor<E>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<E: Elem> {
    pub attn_norm_gain: Tensor<E>,
    pub w_query: Tensor<E>,
    pub w_key: Tensor<E>,
    pub w_value: Tensor<E>,
    pub w_output: Tensor<E>,
    pub ffn: Option<FfnParams<E>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<E: Elem> {
    pub embedding: Tensor<E>,
    pub layers: Vec<LayerParams<E>>,
    pub final_norm_gain: Tensor<E>,
    pub unembedding: Tensor<E>,
}

impl<E: Elem> ModelParams<E> {
    /// Gaussian(0, 0.02) projections, unit normalization gains; the draw
    /// order is the enumeration order, so init is reproducible per seed.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.hidden_dim;
        let kv = cfg.kv_dim();
        let embedding = Tensor::randn(alloc::vec![cfg.vocab_size, d], INIT_STD, &mut rng);
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for spec in &cfg.layer_specs {
            let attn_norm_gain = Tensor::full(alloc::vec![d], E::one());
            let w_query = Tensor::randn(alloc::vec![d, d], INIT_STD, &mut rng);
            let w_key = Tensor::randn(alloc::vec![kv, d], INIT_STD, &mut rng);
            let w_value = Tensor::randn(alloc::vec![kv, d], INIT_STD, &mut rng);
            let w_output = Tensor::randn(alloc::vec![d, d], INIT_STD, &mut rng);
            let ffn = spec.has_ffn().then(|| FfnParams {
                norm_gain: Tensor::full(alloc::vec![d], E::one()),
                w_gate: Tensor::randn(alloc::vec![spec.ffn_dim, d], INIT_STD, &mut rng),
                w_up: Tensor::randn(alloc::vec![spec.ffn_dim, d], INIT_STD, &mut rng),
                w_down: Tensor::randn(alloc::vec![d, spec.ffn_dim], INIT_STD, &mut rng),
            });
            layers.push(LayerParams { attn_norm_gain, w_query, w_key, w_value, w_output, ffn });
        }
        let final_norm_gain = Tensor::full(alloc::vec![d], E::one());
        let unembedding = Tensor::randn(alloc::vec![cfg.vocab_size, d], INIT_STD, &mut rng);
        Ok(ModelParams { embedding, layers, final_norm_gain, unembedding })
    }

    /// Deterministic (name, class, tensor) walk in a fixed order shared by
    /// the optimizer, gradient collection, and checkpoint manifests.
    pub fn tensors(&self) -> Vec<(String, ParamClass, &Tensor<E>)> {
        let mut out = Vec::new();
        out.push(("embedding".into(), ParamClass::Embedding, &self.embedding));
        for (i, layer) in self.layers.iter().enumerate() {
            let p = |field: &str| format!("layer{i:02}.{field}");
            out.push((p("attn_norm"), ParamClass::Gain, &layer.attn_norm_gain));
            out.push((p("w_query"), ParamClass::Matrix, &layer.w_query));
            out.push((p("w_key"), ParamClass::Matrix, &layer.w_key));
            out.push((p("w_value"), ParamClass::Matrix, &layer.w_value));
            out.push((p("w_output"), ParamClass::Matrix, &layer.w_output));
            if let Some(ffn) = &layer.ffn {
                out.push((p("ffn_norm"), ParamClass::Gain, &ffn.norm_gain));
                out.push((p("w_gate"), ParamClass::Matrix, &ffn.w_gate));
                out.push((p("w_up"), ParamClass::Matrix, &ffn.w_up));
                out.push((p("w_down"), ParamClass::Matrix, &ffn.w_down));
            }
        }
        out.push(("final_norm".into(), ParamClass::Gain, &self.final_norm_gain));
        out.push(("unembedding".into(), ParamClass::Embedding, &self.unembedding));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, ParamClass, &mut Tensor<E>)> {
        let mut out: Vec<(String, ParamClass, &mut Tensor<E>)> = Vec::new();
        out.push(("embedding".into(), ParamClass::Embedding, &mut self.embedding));
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let p = |field: &str| format!("layer{i:02}.{field}");
            out.push((p("attn_norm"), ParamClass::Gain, &mut layer.attn_norm_gain));
            out.push((p("w_query"), ParamClass::Matrix, &mut layer.w_query));
            out.push((p("w_key"), ParamClass::Matrix, &mut layer.w_key));
            out.push((p("w_value"), ParamClass::Matrix, &mut layer.w_value));
            out.push((p("w_output"), ParamClass::Matrix, &mut layer.w_output));
            if let Some(ffn) = &mut layer.ffn {
                out.push((p("ffn_norm"), ParamClass::Gain, &mut ffn.norm_gain));
                out.push((p("w_gate"), ParamClass::Matrix, &mut ffn.w_gate));
                out.push((p("w_up"), ParamClass::Matrix, &mut ffn.w_up));
                out.push((p("w_down"), ParamClass::Matrix, &mut ffn.w_down));
            }
        }
        out.push(("final_norm".into(), ParamClass::Gain, &mut self.final_norm_gain));
        out.push(("unembedding".into(), ParamClass::Embedding, &mut self.unembedding));
        out
    }

    /// Total scalar count by enumeration (cross-check for `count_params`).
    pub fn param_count(&self, include_embeddings: bool) -> u64 {
        self.tensors()
            .iter()
            .filter(|(_, class, _)| include_embeddings || *class != ParamClass::Embedding)
            .map(|(_, _, t)| t.numel() as u64)
            .sum()
    }
}
