//! Checks the graph-built forward pass against an independent straight-line
//! reimplementation of the same math over plain `Vec<f64>` buffers.

use ffnlab_core::graph::Graph;
use ffnlab_core::model::{
    bind, forward, FfnParams, LayerKind, LayerParams, LayerSpec, ModelConfig, ModelParams,
    RMS_NORM_EPS,
};

fn rows_of(t: &ffnlab_core::Tensor<f64>) -> (usize, usize) {
    (t.shape()[0], t.shape()[1])
}

/// `y = M · x` for a row-major `[out, in]` matrix.
fn matvec(m: &ffnlab_core::Tensor<f64>, x: &[f64]) -> Vec<f64> {
    let (out, inner) = rows_of(m);
    let data = m.data();
    (0..out)
        .map(|o| {
            let mut acc = 0.0;
            for i in 0..inner {
                acc += data[o * inner + i] * x[i];
            }
            acc
        })
        .collect()
}

fn rms_norm_row(x: &[f64], gain: &[f64]) -> Vec<f64> {
    let mean_sq = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let inv = 1.0 / (mean_sq + RMS_NORM_EPS).sqrt();
    x.iter().zip(gain).map(|(v, g)| g * v * inv).collect()
}

fn rope_row(x: &[f64], position: usize, base: f64) -> Vec<f64> {
    let dim = x.len();
    let mut out = vec![0.0; dim];
    for t in 0..dim / 2 {
        let freq = base.powf(-((2 * t) as f64) / dim as f64);
        let angle = position as f64 * freq;
        let (sin, cos) = angle.sin_cos();
        out[2 * t] = x[2 * t] * cos - x[2 * t + 1] * sin;
        out[2 * t + 1] = x[2 * t] * sin + x[2 * t + 1] * cos;
    }
    out
}

fn reference_attention(
    cfg: &ModelConfig,
    layer: &LayerParams<f64>,
    xs: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let seq = xs.len();
    let head_dim = cfg.head_dim();
    let group = cfg.n_heads / cfg.n_kv_heads;
    let q: Vec<Vec<f64>> = xs.iter().map(|x| matvec(&layer.w_query, x)).collect();
    let k: Vec<Vec<f64>> = xs.iter().map(|x| matvec(&layer.w_key, x)).collect();
    let v: Vec<Vec<f64>> = xs.iter().map(|x| matvec(&layer.w_value, x)).collect();
    let mut merged = vec![vec![0.0; cfg.hidden_dim]; seq];
    for h in 0..cfg.n_heads {
        let kv = h / group;
        for i in 0..seq {
            let qi = rope_row(&q[i][h * head_dim..(h + 1) * head_dim], i, cfg.rope_base);
            // Causal scores against positions 0..=i.
            let mut scores = Vec::with_capacity(i + 1);
            for (j, krow) in k.iter().enumerate().take(i + 1) {
                let kj = rope_row(&krow[kv * head_dim..(kv + 1) * head_dim], j, cfg.rope_base);
                let dot: f64 = qi.iter().zip(&kj).map(|(a, b)| a * b).sum();
                scores.push(dot / (head_dim as f64).sqrt());
            }
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            for (j, e) in exps.iter().enumerate() {
                let w = e / total;
                for t in 0..head_dim {
                    merged[i][h * head_dim + t] += w * v[j][kv * head_dim + t];
                }
            }
        }
    }
    merged.iter().map(|row| matvec(&layer.w_output, row)).collect()
}

fn reference_ffn(ffn: &FfnParams<f64>, x: &[f64]) -> Vec<f64> {
    let gate = matvec(&ffn.w_gate, x);
    let up = matvec(&ffn.w_up, x);
    let inner: Vec<f64> = gate
        .iter()
        .zip(&up)
        .map(|(&g, &u)| {
            let sig = 1.0 / (1.0 + (-g).exp());
            g * sig * u
        })
        .collect();
    matvec(&ffn.w_down, &inner)
}

fn reference_forward(
    cfg: &ModelConfig,
    params: &ModelParams<f64>,
    tokens: &[u32],
) -> Vec<Vec<f64>> {
    let d = cfg.hidden_dim;
    let mut h: Vec<Vec<f64>> = tokens
        .iter()
        .map(|&t| params.embedding.data()[t as usize * d..(t as usize + 1) * d].to_vec())
        .collect();
    for layer in &params.layers {
        let normed: Vec<Vec<f64>> =
            h.iter().map(|row| rms_norm_row(row, layer.attn_norm_gain.data())).collect();
        let attn = reference_attention(cfg, layer, &normed);
        for (row, add) in h.iter_mut().zip(&attn) {
            for (a, b) in row.iter_mut().zip(add) {
                *a += b;
            }
        }
        if let Some(ffn) = &layer.ffn {
            let normed: Vec<Vec<f64>> =
                h.iter().map(|row| rms_norm_row(row, ffn.norm_gain.data())).collect();
            for (row_i, row) in h.iter_mut().enumerate() {
                let out = reference_ffn(ffn, &normed[row_i]);
                for (a, b) in row.iter_mut().zip(&out) {
                    *a += b;
                }
            }
        }
    }
    h.iter()
        .map(|row| {
            let y = rms_norm_row(row, params.final_norm_gain.data());
            matvec(&params.unembedding, &y)
        })
        .collect()
}

#[test]
fn graph_forward_matches_straight_line_reimplementation() {
    let cfg = ModelConfig {
        n_layers: 2,
        hidden_dim: 8,
        n_heads: 2,
        n_kv_heads: 2,
        vocab_size: 17,
        max_seq_len: 16,
        layer_specs: vec![
            LayerSpec { index: 1, kind: LayerKind::Expanded, ffn_dim: 20 },
            LayerSpec { index: 2, kind: LayerKind::Deactivated, ffn_dim: 0 },
        ],
        rope_base: 10_000.0,
    };
    let params = ModelParams::<f64>::init(&cfg, 2024).unwrap();
    let tokens = [3u32, 11, 0, 16, 7, 7, 2];

    let mut g = Graph::new();
    let bound = bind(&mut g, &cfg, &params, false);
    let logits_var = forward(&mut g, &cfg, &bound, &tokens).unwrap();
    let got = g.value(logits_var).data().to_vec();

    let want = reference_forward(&cfg, &params, &tokens);
    let vocab = cfg.vocab_size;
    for (pos, row) in want.iter().enumerate() {
        for (v, &w) in row.iter().enumerate() {
            let a = got[pos * vocab + v];
            let denom = a.abs().max(w.abs()).max(1e-9);
            assert!(
                (a - w).abs() / denom <= 1e-6,
                "logit [{pos}, {v}]: graph {a}, reference {w}"
            );
        }
    }
}

#[test]
fn reference_agreement_holds_with_grouped_kv_heads() {
    let cfg = ModelConfig {
        n_layers: 1,
        hidden_dim: 8,
        n_heads: 4,
        n_kv_heads: 2,
        vocab_size: 11,
        max_seq_len: 8,
        layer_specs: vec![LayerSpec { index: 1, kind: LayerKind::Standard, ffn_dim: 16 }],
        rope_base: 10_000.0,
    };
    let params = ModelParams::<f64>::init(&cfg, 7).unwrap();
    let tokens = [1u32, 9, 4, 4, 0];
    let mut g = Graph::new();
    let bound = bind(&mut g, &cfg, &params, false);
    let logits_var = forward(&mut g, &cfg, &bound, &tokens).unwrap();
    let got = g.value(logits_var).data().to_vec();
    let want = reference_forward(&cfg, &params, &tokens);
    for (pos, row) in want.iter().enumerate() {
        for (v, &w) in row.iter().enumerate() {
            let a = got[pos * cfg.vocab_size + v];
            assert!((a - w).abs() / a.abs().max(w.abs()).max(1e-9) <= 1e-6);
        }
    }
}
