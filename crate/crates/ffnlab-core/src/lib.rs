//! Core laboratory for studying where feed-forward capacity belongs in a
//! transformer language model.
//!
//! The crate bundles everything that is pure computation: a small
//! reverse-mode tensor engine, a LLaMA-style decoder model whose layers may
//! carry a standard, enlarged, or no feed-forward block, the planner that
//! redistributes FFN parameters across layer blocks at constant total size,
//! the training loop primitives (AdamW, cosine and warmup-stable-decay
//! schedules, checkpoint codecs), the evaluation metrics, and the
//! relative-improvement / layer-importance analytics.
//!
//! File IO, the CLI, and report rendering live in the companion `ffnlab`
//! crate; this crate is `no_std`-compatible (with `alloc`).

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod analysis;
pub mod batch;
pub mod checkpoint;
pub mod elem;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod optim;
pub mod placement;
pub mod presets;
pub mod schedule;
pub mod tensor;
pub mod tokenizer;
pub mod train;

pub use elem::{Dtype, Elem};
pub use error::CoreError;
pub use graph::{Graph, Var};
pub use tensor::Tensor;
