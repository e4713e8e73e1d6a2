//! Training loop primitives: configuration, mutable state, and the single
//! optimization step (forward, backward, clip, AdamW update).
//!
//! The data stream is a pure function of (corpus, seed, batch index) and one
//! step consumes one batch, so a [`TrainState`] is resumable from `step`
//! alone; checkpoint serialization lives in [`crate::checkpoint`].

use alloc::string::String;
use alloc::vec::Vec;

use crate::batch::Batch;
use crate::elem::Elem;
use crate::error::{CoreError, Result};
use crate::graph::Graph;
use crate::model::{bind, forward, ModelConfig, ModelParams};
use crate::optim::{adamw_step, clip_global_norm, AdamWConfig, AdamWState};
use crate::schedule::{lr_at, Scheduler};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub total_steps: u64,
    pub warmup_steps: u64,
    pub peak_lr: f64,
    pub scheduler: Scheduler,
    #[serde(default = "default_wsd_decay_fraction")]
    pub wsd_decay_fraction: f64,
    pub batch_size: usize,
    pub seq_len: usize,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_grad_clip")]
    pub grad_clip_norm: f64,
    pub seed: u64,
    #[serde(default)]
    pub checkpoint_interval: u64,
}

fn default_wsd_decay_fraction() -> f64 {
    0.1
}

fn default_weight_decay() -> f64 {
    0.1
}

fn default_grad_clip() -> f64 {
    1.0
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps >= self.total_steps {
            return Err(CoreError::Config(alloc::format!(
                "warmup_steps {} must be below total_steps {}",
                self.warmup_steps,
                self.total_steps
            )));
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return Err(CoreError::Config("peak_lr must be positive".into()));
        }
        if self.batch_size == 0 || self.seq_len == 0 {
            return Err(CoreError::Config("batch_size and seq_len must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.wsd_decay_fraction) {
            return Err(CoreError::Config("wsd_decay_fraction must lie in [0, 1]".into()));
        }
        if self.weight_decay < 0.0 || self.grad_clip_norm <= 0.0 {
            return Err(CoreError::Config("decay must be ≥ 0 and clip norm > 0".into()));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig::with_weight_decay(self.weight_decay)
    }
}

/// One row of the loss log (and of the emitted CSV).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    pub grad_norm: f64,
}

pub struct TrainState<E: Elem> {
    pub step: u64,
    pub params: ModelParams<E>,
    pub opt: AdamWState<E>,
    pub seed: u64,
    pub loss_history: Vec<LossRecord>,
}

impl<E: Elem> TrainState<E> {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        let params = ModelParams::init(cfg, seed)?;
        let opt = AdamWState::new(&params);
        Ok(TrainState { step: 0, params, opt, seed, loss_history: Vec::new() })
    }
}

/// Mean cross-entropy over the batch rows, with gradients accumulated into
/// the bound parameters when `graph` leaves are trainable.
pub fn batch_loss<E: Elem>(
    graph: &mut Graph<E>,
    cfg: &ModelConfig,
    bound: &crate::model::BoundModel,
    batch: &Batch,
) -> Result<crate::graph::Var> {
    let mut total = None;
    for (inputs, targets) in batch.inputs.iter().zip(&batch.targets) {
        let logits = forward(graph, cfg, bound, inputs)?;
        let loss = graph.softmax_cross_entropy(logits, targets)?;
        total = Some(match total {
            None => loss,
            Some(prev) => graph.add(prev, loss)?,
        });
    }
    let total = total.ok_or_else(|| CoreError::Contract("empty batch".into()))?;
    Ok(graph.scale(total, 1.0 / batch.inputs.len() as f64))
}

/// Runs one optimization step and appends a [`LossRecord`].
///
/// The learning rate is read at the post-increment step index, so the first
/// step trains at `peak/warmup` rather than zero. Aborts with layer-wise
/// gradient norms when the loss is not finite.
pub fn train_step<E: Elem>(
    state: &mut TrainState<E>,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    batch: &Batch,
) -> Result<LossRecord> {
    let t = state.step + 1;
    let lr = lr_at(t, train_cfg)?;
    let mut graph = Graph::new();
    let bound = bind(&mut graph, model_cfg, &state.params, true);
    let loss_var = batch_loss(&mut graph, model_cfg, &bound, batch)?;
    let loss = graph.value(loss_var).item()?.as_f64();
    graph.backward(loss_var)?;

    let names: Vec<String> = state.params.tensors().iter().map(|(n, _, _)| n.clone()).collect();
    let mut grads: Vec<Tensor<E>> = state
        .params
        .tensors()
        .iter()
        .zip(&bound.flat)
        .map(|((_, _, t), var)| {
            graph.grad(*var).unwrap_or_else(|| Tensor::zeros(t.shape().to_vec()))
        })
        .collect();

    if !loss.is_finite() {
        let layer_grad_norms = names
            .iter()
            .zip(&grads)
            .map(|(name, g)| {
                let norm: f64 = g.data().iter().map(|v| {
                    let v = v.as_f64();
                    v * v
                }).sum();
                (name.clone(), num_traits::Float::sqrt(norm))
            })
            .collect();
        return Err(CoreError::NonFiniteLoss { step: t, layer_grad_norms });
    }

    let grad_norm = clip_global_norm(&mut grads, train_cfg.grad_clip_norm);
    adamw_step(&mut state.params, &grads, &mut state.opt, t, lr, &train_cfg.optimizer())?;
    state.step = t;
    let record = LossRecord { step: t, lr, loss, grad_norm };
    state.loss_history.push(record);
    Ok(record)
}
