//! Deterministic batching of tokenized documents for next-token training.
//!
//! Documents are shuffled per epoch (seeded), concatenated with EOS
//! separators, and cut into rows of `seq_len + 1` consecutive tokens at
//! stride `seq_len`, so each target token is predicted exactly once per
//! epoch. A batch holds `batch_size` rows; the final partial row and
//! partial batch of an epoch are dropped. The stream is a pure function of
//! (documents, seed, cursor), which makes training runs resumable by batch
//! index alone.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `batch_size` rows of `seq_len` input ids.
    pub inputs: Vec<Vec<u32>>,
    /// Same rows shifted left by one token.
    pub targets: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, Copy)]
pub struct BatchConfig {
    pub seq_len: usize,
    pub batch_size: usize,
    pub seed: u64,
}

pub struct BatchStream {
    docs: Vec<Vec<u32>>,
    eos_id: u32,
    cfg: BatchConfig,
    batches_per_epoch: u64,
    cursor: u64,
    cached_epoch: Option<u64>,
    epoch_tokens: Vec<u32>,
}

/// Document visit order for one epoch; epochs reshuffle, seeds permute.
pub fn epoch_permutation(seed: u64, epoch: u64, n_docs: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_docs).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    order.shuffle(&mut rng);
    order
}

impl BatchStream {
    pub fn new(docs: Vec<Vec<u32>>, eos_id: u32, cfg: BatchConfig) -> Result<Self> {
        if docs.iter().all(|d| d.is_empty()) {
            return Err(CoreError::Config("corpus is empty".into()));
        }
        if cfg.seq_len == 0 || cfg.batch_size == 0 {
            return Err(CoreError::Config("seq_len and batch_size must be positive".into()));
        }
        // Epoch length does not depend on the permutation.
        let total: usize = docs.iter().map(|d| d.len() + 1).sum();
        let rows = (total.saturating_sub(1) / cfg.seq_len) as u64;
        let batches_per_epoch = rows / cfg.batch_size as u64;
        if batches_per_epoch == 0 {
            return Err(CoreError::Config(alloc::format!(
                "corpus too small: {total} tokens yield {rows} rows, need {} per batch",
                cfg.batch_size
            )));
        }
        Ok(BatchStream {
            docs,
            eos_id,
            cfg,
            batches_per_epoch,
            cursor: 0,
            cached_epoch: None,
            epoch_tokens: Vec::new(),
        })
    }

    pub fn batches_per_epoch(&self) -> u64 {
        self.batches_per_epoch
    }

    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    /// Repositions the stream at an absolute batch index (for resume).
    pub fn seek(&mut self, batch_index: u64) {
        self.cursor = batch_index;
    }

    fn load_epoch(&mut self, epoch: u64) {
        if self.cached_epoch == Some(epoch) {
            return;
        }
        let order = epoch_permutation(self.cfg.seed, epoch, self.docs.len());
        self.epoch_tokens.clear();
        for idx in order {
            self.epoch_tokens.extend_from_slice(&self.docs[idx]);
            self.epoch_tokens.push(self.eos_id);
        }
        self.cached_epoch = Some(epoch);
    }

    /// Emits the next batch; shape is always
    /// `[batch_size, seq_len]` inputs plus `[batch_size, seq_len]` targets.
    pub fn next_batch(&mut self) -> Batch {
        let epoch = self.cursor / self.batches_per_epoch;
        let offset = (self.cursor % self.batches_per_epoch) as usize;
        self.load_epoch(epoch);
        let s = self.cfg.seq_len;
        let mut inputs = Vec::with_capacity(self.cfg.batch_size);
        let mut targets = Vec::with_capacity(self.cfg.batch_size);
        for b in 0..self.cfg.batch_size {
            let row_index = offset * self.cfg.batch_size + b;
            let start = row_index * s;
            let window = &self.epoch_tokens[start..start + s + 1];
            inputs.push(window[..s].to_vec());
            targets.push(window[1..].to_vec());
        }
        self.cursor += 1;
        Batch { inputs, targets }
    }
}
