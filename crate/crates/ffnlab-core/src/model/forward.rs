//! Graph construction for the decoder forward pass.

use alloc::vec::Vec;

use num_traits::Float;

use crate::elem::Elem;
use crate::error::{CoreError, Result};
use crate::graph::{Graph, Var};
use crate::model::{LayerSpec, ModelConfig, ModelParams, RMS_NORM_EPS};

#[derive(Debug, Clone)]
pub struct BoundFfn {
    pub norm: Var,
    pub gate: Var,
    pub up: Var,
    pub down: Var,
}

#[derive(Debug, Clone)]
pub struct BoundLayer {
    pub spec: LayerSpec,
    pub attn_norm: Var,
    pub w_query: Var,
    pub w_key: Var,
    pub w_value: Var,
    pub w_output: Var,
    pub ffn: Option<BoundFfn>,
}

/// Model parameters leased into one graph as leaf nodes.
pub struct BoundModel {
    pub embedding: Var,
    pub layers: Vec<BoundLayer>,
    pub final_norm: Var,
    pub unembedding: Var,
    /// Flat view aligned with [`ModelParams::tensors`] order.
    pub flat: Vec<Var>,
}

/// Copies every parameter tensor into `graph` as a leaf. With
/// `trainable = true` the leaves accumulate gradients.
pub fn bind<E: Elem>(
    graph: &mut Graph<E>,
    cfg: &ModelConfig,
    params: &ModelParams<E>,
    trainable: bool,
) -> BoundModel {
    let mut flat = Vec::new();
    let mut leaf = |g: &mut Graph<E>, t: &crate::tensor::Tensor<E>| {
        let v = g.leaf(t.clone(), trainable);
        flat.push(v);
        v
    };
    let embedding = leaf(graph, &params.embedding);
    let mut layers = Vec::with_capacity(params.layers.len());
    for (layer, spec) in params.layers.iter().zip(&cfg.layer_specs) {
        let attn_norm = leaf(graph, &layer.attn_norm_gain);
        let w_query = leaf(graph, &layer.w_query);
        let w_key = leaf(graph, &layer.w_key);
        let w_value = leaf(graph, &layer.w_value);
        let w_output = leaf(graph, &layer.w_output);
        let ffn = layer.ffn.as_ref().map(|f| BoundFfn {
            norm: leaf(graph, &f.norm_gain),
            gate: leaf(graph, &f.w_gate),
            up: leaf(graph, &f.w_up),
            down: leaf(graph, &f.w_down),
        });
        layers.push(BoundLayer {
            spec: *spec,
            attn_norm,
            w_query,
            w_key,
            w_value,
            w_output,
            ffn,
        });
    }
    let final_norm = leaf(graph, &params.final_norm_gain);
    let unembedding = leaf(graph, &params.unembedding);
    BoundModel { embedding, layers, final_norm, unembedding, flat }
}

/// Gated FFN block: `W_down · (Swish(W_gate·x) ⊙ (W_up·x))`. The expanded
/// variant is the same computation at a larger intermediate dimension.
/// Contract error when the layer has no FFN.
pub fn ffn_forward<E: Elem>(g: &mut Graph<E>, x: Var, layer: &BoundLayer) -> Result<Var> {
    let Some(ffn) = &layer.ffn else {
        return Err(CoreError::Contract(alloc::format!(
            "ffn_forward on deactivated layer {}",
            layer.spec.index
        )));
    };
    let gated = g.matmul_nt(x, ffn.gate)?;
    let gated = g.swish(gated);
    let lifted = g.matmul_nt(x, ffn.up)?;
    let prod = g.mul(gated, lifted)?;
    g.matmul_nt(prod, ffn.down)
}

/// Multi-head causal self-attention with rotary positions over a
/// pre-normalized input `x[seq, d]`.
pub fn attention<E: Elem>(
    g: &mut Graph<E>,
    cfg: &ModelConfig,
    x: Var,
    layer: &BoundLayer,
) -> Result<Var> {
    let head_dim = cfg.head_dim();
    let group = cfg.n_heads / cfg.n_kv_heads;
    let q = g.matmul_nt(x, layer.w_query)?;
    let k = g.matmul_nt(x, layer.w_key)?;
    let v = g.matmul_nt(x, layer.w_value)?;
    let scale = 1.0 / Float::sqrt(head_dim as f64);
    let mut contexts = Vec::with_capacity(cfg.n_heads);
    for h in 0..cfg.n_heads {
        let kv_head = h / group;
        let qh = g.slice_cols(q, h * head_dim, head_dim)?;
        let kh = g.slice_cols(k, kv_head * head_dim, head_dim)?;
        let vh = g.slice_cols(v, kv_head * head_dim, head_dim)?;
        let qh = g.rope(qh, cfg.rope_base)?;
        let kh = g.rope(kh, cfg.rope_base)?;
        let scores = g.matmul_nt(qh, kh)?;
        let scores = g.scale(scores, scale);
        let weights = g.causal_softmax(scores)?;
        contexts.push(g.matmul(weights, vh)?);
    }
    let merged = g.concat_cols(&contexts)?;
    g.matmul_nt(merged, layer.w_output)
}

/// One pre-LN layer: `h += Attn(Norm(h))`, then `h += FFN(Norm(h))` iff the
/// layer has an FFN. Deactivated layers are attention-only.
pub fn layer_forward<E: Elem>(
    g: &mut Graph<E>,
    cfg: &ModelConfig,
    h: Var,
    layer: &BoundLayer,
) -> Result<Var> {
    let normed = g.rms_norm(h, layer.attn_norm, RMS_NORM_EPS)?;
    let attn_out = attention(g, cfg, normed, layer)?;
    let h = g.add(h, attn_out)?;
    if layer.ffn.is_none() {
        return Ok(h);
    }
    let ffn_layer = layer.clone();
    let normed = g.rms_norm(h, ffn_layer.ffn.as_ref().unwrap().norm, RMS_NORM_EPS)?;
    let ffn_out = ffn_forward(g, normed, &ffn_layer)?;
    g.add(h, ffn_out)
}

/// Next-token logits `[seq, vocab]` for a token sequence.
pub fn forward<E: Elem>(
    g: &mut Graph<E>,
    cfg: &ModelConfig,
    bound: &BoundModel,
    tokens: &[u32],
) -> Result<Var> {
    if tokens.is_empty() {
        return Err(CoreError::Contract("forward needs at least one token".into()));
    }
    if tokens.len() > cfg.max_seq_len {
        return Err(CoreError::Contract(alloc::format!(
            "sequence length {} exceeds max_seq_len {}",
            tokens.len(),
            cfg.max_seq_len
        )));
    }
    let mut h = g.embedding(bound.embedding, tokens)?;
    for layer in &bound.layers {
        h = layer_forward(g, cfg, h, layer)?;
    }
    let y = g.rms_norm(h, bound.final_norm, RMS_NORM_EPS)?;
    g.matmul_nt(y, bound.unembedding)
}
