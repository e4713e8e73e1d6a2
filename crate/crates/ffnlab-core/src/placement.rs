//! Placement planning: which layers get the enlarged FFN, which lose
//! theirs, and the enlarged intermediate dimension that keeps the total
//! learnable-parameter count at the baseline.
//!
//! For a baseline of `L` layers with FFN dimension `d_f` and `n` expanded
//! layers, the FFN blocks of the experimental model must absorb the
//! `3·d·d_f` scalars of all `L` removed baseline FFNs plus the `L − n`
//! pre-FFN normalization gains dropped in deactivated layers. The smallest
//! dimension with a non-negative parameter delta is
//!
//! ```text
//! d'_f = ceil( (3·L·d_f + (L − n)) / (3·n) )
//! ```
//!
//! computed in exact integer arithmetic. Rounding up keeps the experimental
//! model at or marginally above the baseline, never below, with slack under
//! one dimension row (`3·d`) per expanded layer.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::model::{count_params, LayerKind, LayerSpec, ModelConfig};

/// Where the block of expanded layers sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    First,
    Middle,
    Final,
    /// The unmodified baseline architecture.
    Baseline,
}

impl Position {
    pub fn label(&self) -> &'static str {
        match self {
            Position::First => "first",
            Position::Middle => "middle",
            Position::Final => "final",
            Position::Baseline => "baseline",
        }
    }
}

pub const RATIO_CHOICES: [u32; 6] = [10, 30, 50, 70, 90, 100];

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PlacementConfig {
    pub position: Position,
    pub ratio_percent: u32,
    pub base: ModelConfig,
}

impl PlacementConfig {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if !RATIO_CHOICES.contains(&self.ratio_percent) {
            return Err(CoreError::Config(format!(
                "ratio {}% is not one of {:?}",
                self.ratio_percent, RATIO_CHOICES
            )));
        }
        if self.position == Position::Baseline && self.ratio_percent != 100 {
            return Err(CoreError::Config("the baseline position implies ratio 100".into()));
        }
        let df = baseline_ffn_dim(&self.base)?;
        if df == 0 {
            return Err(CoreError::Config("baseline must have FFN layers".into()));
        }
        Ok(())
    }

    /// `position_ratio` identifier, `baseline` for the unmodified plan.
    pub fn id(&self) -> String {
        if self.position == Position::Baseline {
            return "baseline".into();
        }
        format!("{}_{}", self.position.label(), self.ratio_percent)
    }
}

/// A fully resolved experimental architecture.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PlacementPlan {
    pub config_id: String,
    pub position: Position,
    pub ratio_percent: u32,
    /// The baseline architecture this plan redistributes.
    pub base: ModelConfig,
    /// 1-based indices of the expanded block, in order.
    pub expanded_indices: Vec<usize>,
    /// Solved FFN dimension of expanded layers (the baseline dimension for
    /// ratio-100 plans).
    pub ffn_dim_expanded: usize,
    pub layer_specs: Vec<LayerSpec>,
    /// Experimental minus baseline learnable scalars (non-embedding).
    pub param_delta: i64,
    pub baseline_params: u64,
    pub experimental_params: u64,
}

impl PlacementPlan {
    /// The experimental architecture as a model configuration.
    pub fn model_config(&self) -> ModelConfig {
        self.base.with_layer_specs(self.layer_specs.clone())
    }

    pub fn deactivated_indices(&self) -> Vec<usize> {
        self.layer_specs
            .iter()
            .filter(|s| s.kind == LayerKind::Deactivated)
            .map(|s| s.index)
            .collect()
    }
}

/// The baseline FFN dimension of a uniform configuration.
fn baseline_ffn_dim(base: &ModelConfig) -> Result<usize> {
    let mut dims = base.layer_specs.iter().filter(|s| s.has_ffn()).map(|s| s.ffn_dim);
    let Some(first) = dims.next() else {
        return Err(CoreError::Config("baseline has no FFN layers".into()));
    };
    if dims.all(|d| d == first) {
        Ok(first)
    } else {
        Err(CoreError::Config("baseline FFN dimensions are not uniform".into()))
    }
}

/// Number of expanded layers: `⌊ratio·L/100⌋`, exact integer arithmetic.
pub fn expanded_count(n_layers: usize, ratio_percent: u32) -> Result<usize> {
    if ratio_percent == 0 || ratio_percent > 100 {
        return Err(CoreError::Contract(format!(
            "ratio {ratio_percent}% outside (0, 100]"
        )));
    }
    Ok(n_layers * ratio_percent as usize / 100)
}

/// The consecutive block of `count` expanded layers (1-based indices).
///
/// `first` starts at layer 1, `final` ends at layer `L`, and `middle`
/// centers the block with `⌈(L − count)/2⌉` deactivated layers before it,
/// so an odd remainder leaves the extra deactivated layer in the prefix
/// (equivalently, the block leans into the latter half of the stack).
pub fn place(n_layers: usize, count: usize, position: Position) -> Result<Vec<usize>> {
    if count == 0 || count > n_layers {
        return Err(CoreError::Contract(format!(
            "cannot place {count} expanded layers in a {n_layers}-layer stack"
        )));
    }
    let start = match position {
        Position::First => 1,
        Position::Final => n_layers - count + 1,
        Position::Middle => (n_layers - count).div_ceil(2) + 1,
        Position::Baseline => 1,
    };
    Ok((start..start + count).collect())
}

/// Smallest expanded FFN dimension whose plan does not fall below the
/// baseline parameter count. `n = L` yields the baseline dimension.
pub fn solve_parity_dim(base: &ModelConfig, expanded: usize) -> Result<usize> {
    if expanded == 0 {
        return Err(CoreError::Contract("need at least one expanded layer".into()));
    }
    let layers = base.n_layers as u64;
    let df = baseline_ffn_dim(base)? as u64;
    let n = expanded as u64;
    // Removed per deactivated layer: 3·d·d_f (FFN) + d (norm gain); gained
    // per expanded layer: 3·d·(d'_f − d_f). Dividing the balance by d:
    //   3·n·d'_f ≥ 3·L·d_f + (L − n)
    let numerator = 3 * layers * df + (layers - n);
    Ok(numerator.div_ceil(3 * n) as usize)
}

/// Composes count, placement, and parity into a full plan.
pub fn build_plan(cfg: &PlacementConfig) -> Result<PlacementPlan> {
    cfg.validate()?;
    let base = &cfg.base;
    let df = baseline_ffn_dim(base)?;
    let baseline_params = count_params(base, false);

    // Ratio 100 (and the baseline position) reproduce the baseline
    // architecture exactly; nothing is redistributed.
    if cfg.ratio_percent == 100 {
        let layer_specs: Vec<LayerSpec> = (1..=base.n_layers)
            .map(|index| LayerSpec { index, kind: LayerKind::Standard, ffn_dim: df })
            .collect();
        return Ok(PlacementPlan {
            config_id: cfg.id(),
            position: cfg.position,
            ratio_percent: 100,
            base: base.clone(),
            expanded_indices: (1..=base.n_layers).collect(),
            ffn_dim_expanded: df,
            layer_specs,
            param_delta: 0,
            baseline_params,
            experimental_params: baseline_params,
        });
    }

    let count = expanded_count(base.n_layers, cfg.ratio_percent)?;
    if count == 0 {
        return Err(CoreError::Config(format!(
            "ratio {}% of {} layers expands no layer",
            cfg.ratio_percent, base.n_layers
        )));
    }
    let expanded_indices = place(base.n_layers, count, cfg.position)?;
    let dim = solve_parity_dim(base, count)?;
    let layer_specs: Vec<LayerSpec> = (1..=base.n_layers)
        .map(|index| {
            if expanded_indices.contains(&index) {
                LayerSpec { index, kind: LayerKind::Expanded, ffn_dim: dim }
            } else {
                LayerSpec { index, kind: LayerKind::Deactivated, ffn_dim: 0 }
            }
        })
        .collect();
    let experimental = base.with_layer_specs(layer_specs.clone());
    let experimental_params = count_params(&experimental, false);
    let param_delta = experimental_params as i64 - baseline_params as i64;
    Ok(PlacementPlan {
        config_id: cfg.id(),
        position: cfg.position,
        ratio_percent: cfg.ratio_percent,
        base: base.clone(),
        expanded_indices,
        ffn_dim_expanded: dim,
        layer_specs,
        param_delta,
        baseline_params,
        experimental_params,
    })
}
