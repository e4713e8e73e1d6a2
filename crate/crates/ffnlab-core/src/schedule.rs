//! Learning-rate schedules: linear warmup into either a cosine anneal or a
//! warmup-stable-decay (constant, then linear cooldown) tail.

use num_traits::Float;

use crate::error::{CoreError, Result};
use crate::train::TrainConfig;

/// Floor of both schedules, as a fraction of the peak rate.
pub const MIN_LR_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheduler {
    Cosine,
    Wsd,
}

/// Steps spent in the WSD cooldown window.
pub fn wsd_decay_steps(cfg: &TrainConfig) -> u64 {
    (((cfg.total_steps as f64) * cfg.wsd_decay_fraction) as u64).max(1)
}

/// Learning rate at `step ∈ [0, total_steps]`.
///
/// Warmup is linear from 0 to the peak over `warmup_steps`. Cosine anneals
/// from the peak to `MIN_LR_FRACTION`·peak at the final step; WSD holds the
/// peak exactly through the stable window and decays linearly to the same
/// floor over the final `wsd_decay_fraction` of steps.
pub fn lr_at(step: u64, cfg: &TrainConfig) -> Result<f64> {
    if step > cfg.total_steps {
        return Err(CoreError::Contract(alloc::format!(
            "step {step} beyond total_steps {}",
            cfg.total_steps
        )));
    }
    let peak = cfg.peak_lr;
    if cfg.warmup_steps > 0 && step <= cfg.warmup_steps {
        // step == warmup_steps lands exactly on the peak.
        return Ok(peak * step as f64 / cfg.warmup_steps as f64);
    }
    let min_lr = MIN_LR_FRACTION * peak;
    match cfg.scheduler {
        Scheduler::Cosine => {
            let span = (cfg.total_steps - cfg.warmup_steps) as f64;
            if span == 0.0 {
                return Ok(peak);
            }
            let progress = (step - cfg.warmup_steps) as f64 / span;
            Ok(min_lr + 0.5 * (peak - min_lr) * (1.0 + Float::cos(core::f64::consts::PI * progress)))
        }
        Scheduler::Wsd => {
            let decay = wsd_decay_steps(cfg);
            let decay_start = cfg.total_steps.saturating_sub(decay);
            if step <= decay_start {
                Ok(peak)
            } else {
                let frac = (step - decay_start) as f64 / decay as f64;
                Ok(peak - (peak - min_lr) * frac)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(scheduler: Scheduler) -> TrainConfig {
        TrainConfig {
            total_steps: 1000,
            warmup_steps: 100,
            peak_lr: 3e-4,
            scheduler,
            wsd_decay_fraction: 0.1,
            batch_size: 4,
            seq_len: 32,
            weight_decay: 0.1,
            grad_clip_norm: 1.0,
            seed: 0,
            checkpoint_interval: 0,
        }
    }

    #[test]
    fn warmup_endpoints() {
        for s in [Scheduler::Cosine, Scheduler::Wsd] {
            let c = cfg(s);
            assert_eq!(lr_at(0, &c).unwrap(), 0.0);
            assert_eq!(lr_at(c.warmup_steps, &c).unwrap(), c.peak_lr);
        }
    }

    #[test]
    fn cosine_midpoint_is_halfway_between_peak_and_floor() {
        let c = cfg(Scheduler::Cosine);
        let mid = (c.total_steps + c.warmup_steps) / 2;
        let got = lr_at(mid, &c).unwrap();
        let want = (c.peak_lr + MIN_LR_FRACTION * c.peak_lr) / 2.0;
        assert!((got - want).abs() < 1e-12 * c.peak_lr);
    }

    #[test]
    fn cosine_ends_at_the_floor() {
        let c = cfg(Scheduler::Cosine);
        let end = lr_at(c.total_steps, &c).unwrap();
        assert!((end - MIN_LR_FRACTION * c.peak_lr).abs() < 1e-15);
    }

    #[test]
    fn wsd_stable_window_is_exactly_peak() {
        let c = cfg(Scheduler::Wsd);
        let decay_start = c.total_steps - wsd_decay_steps(&c);
        for step in [c.warmup_steps, 300, 500, decay_start] {
            assert_eq!(lr_at(step, &c).unwrap(), c.peak_lr);
        }
        assert!(lr_at(decay_start + 1, &c).unwrap() < c.peak_lr);
        let end = lr_at(c.total_steps, &c).unwrap();
        assert!((end - MIN_LR_FRACTION * c.peak_lr).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_step_is_a_contract_error() {
        let c = cfg(Scheduler::Cosine);
        assert!(lr_at(c.total_steps + 1, &c).is_err());
    }

    #[test]
    fn schedules_are_continuous_outside_decay_boundaries() {
        for s in [Scheduler::Cosine, Scheduler::Wsd] {
            let c = cfg(s);
            let warmup_slope = c.peak_lr / c.warmup_steps as f64;
            let decay = wsd_decay_steps(&c);
            let decay_start = c.total_steps - decay;
            for step in 0..c.total_steps {
                if s == Scheduler::Wsd && step >= decay_start {
                    continue;
                }
                let jump = (lr_at(step + 1, &c).unwrap() - lr_at(step, &c).unwrap()).abs();
                assert!(
                    jump <= warmup_slope + 1e-15,
                    "{s:?} step {step}: jump {jump} > {warmup_slope}"
                );
            }
        }
    }
}
