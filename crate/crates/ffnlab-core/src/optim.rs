//! AdamW with decoupled weight decay, plus global-norm gradient clipping.
//!
//! Conventions: β₁ = 0.9, β₂ = 0.95, ε = 1e-8; decay applies to projection
//! matrices only — normalization gains and the embedding/unembedding tables
//! are exempt.

use alloc::vec::Vec;

use num_traits::Float;

use crate::elem::Elem;
use crate::error::Result;
use crate::model::{ModelParams, ParamClass};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl AdamWConfig {
    pub fn with_weight_decay(weight_decay: f64) -> Self {
        AdamWConfig { beta1: 0.9, beta2: 0.95, epsilon: 1e-8, weight_decay }
    }
}

/// First/second moment buffers, aligned with [`ModelParams::tensors`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState<E: Elem> {
    pub m: Vec<Tensor<E>>,
    pub v: Vec<Tensor<E>>,
}

impl<E: Elem> AdamWState<E> {
    pub fn new(params: &ModelParams<E>) -> Self {
        let m = params.tensors().iter().map(|(_, _, t)| Tensor::zeros(t.shape().to_vec())).collect();
        let v = params.tensors().iter().map(|(_, _, t)| Tensor::zeros(t.shape().to_vec())).collect();
        AdamWState { m, v }
    }
}

/// One AdamW update on a flat buffer; `t` is the 1-based step count used
/// for bias correction. Decay is decoupled: it applies even when the
/// gradient is zero, and only when `decay` is set.
#[allow(clippy::too_many_arguments)]
pub fn adamw_update_slice<E: Elem>(
    p: &mut [E],
    g: &[E],
    m: &mut [E],
    v: &mut [E],
    t: u64,
    lr: f64,
    cfg: &AdamWConfig,
    decay: bool,
) {
    let b1 = E::of_f64(cfg.beta1);
    let b2 = E::of_f64(cfg.beta2);
    let one = E::one();
    let eps = E::of_f64(cfg.epsilon);
    let bc1 = E::of_f64(1.0 - Float::powi(cfg.beta1, t as i32));
    let bc2 = E::of_f64(1.0 - Float::powi(cfg.beta2, t as i32));
    let lre = E::of_f64(lr);
    let wd = if decay { E::of_f64(cfg.weight_decay) } else { E::zero() };
    for i in 0..p.len() {
        m[i] = b1 * m[i] + (one - b1) * g[i];
        v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        p[i] = p[i] - lre * (m_hat / (v_hat.sqrt() + eps) + wd * p[i]);
    }
}

/// Applies one AdamW step across all model parameters.
pub fn adamw_step<E: Elem>(
    params: &mut ModelParams<E>,
    grads: &[Tensor<E>],
    state: &mut AdamWState<E>,
    t: u64,
    lr: f64,
    cfg: &AdamWConfig,
) -> Result<()> {
    for (i, (_, class, tensor)) in params.tensors_mut().into_iter().enumerate() {
        let decay = class == ParamClass::Matrix;
        adamw_update_slice(
            tensor.data_mut(),
            grads[i].data(),
            state.m[i].data_mut(),
            state.v[i].data_mut(),
            t,
            lr,
            cfg,
            decay,
        );
    }
    Ok(())
}

/// Scales all gradients so the global L2 norm does not exceed `max_norm`;
/// returns the pre-clip norm. The norm accumulates in f64 in enumeration
/// order.
pub fn clip_global_norm<E: Elem>(grads: &mut [Tensor<E>], max_norm: f64) -> f64 {
    let mut sumsq = 0.0f64;
    for g in grads.iter() {
        for &v in g.data() {
            let v = v.as_f64();
            sumsq += v * v;
        }
    }
    let norm = Float::sqrt(sumsq);
    if norm > max_norm && norm > 0.0 {
        let scale = E::of_f64(max_norm / norm);
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v = *v * scale;
            }
        }
    }
    norm
}
