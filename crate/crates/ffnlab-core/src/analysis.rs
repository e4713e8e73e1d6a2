//! Relative-improvement tables and layerwise FFN importance.
//!
//! RI is the sign-corrected percent change of a metric against the
//! baseline, so positive always means better regardless of whether the
//! metric is accuracy-like (higher is better) or loss-like (lower is
//! better). Layer importance spreads each configuration's average RI
//! degradation equally over its deactivated layers, averages per layer over
//! the configurations that deactivate it, and standardizes to zero mean and
//! unit variance across layers.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{CoreError, Result};
use crate::eval::{EvalReport, MetricKind, TaskResult};

/// Direction convention of a metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricClass {
    AccuracyBased,
    LossBased,
}

impl From<MetricKind> for MetricClass {
    fn from(kind: MetricKind) -> Self {
        match kind {
            MetricKind::Accuracy => MetricClass::AccuracyBased,
            MetricKind::Perplexity => MetricClass::LossBased,
        }
    }
}

impl MetricClass {
    fn sign(self) -> f64 {
        match self {
            MetricClass::AccuracyBased => 1.0,
            MetricClass::LossBased => -1.0,
        }
    }
}

/// Sign-corrected percent change against the baseline.
pub fn relative_improvement(value: f64, baseline: f64, class: MetricClass) -> Result<f64> {
    if baseline == 0.0 {
        return Err(CoreError::Contract("relative improvement against a zero baseline".into()));
    }
    Ok(class.sign() * (value - baseline) / baseline * 100.0)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RiRow {
    pub config: String,
    pub task: String,
    pub metric: MetricKind,
    pub class: MetricClass,
    pub baseline_value: f64,
    pub value: f64,
    pub ri_percent: f64,
    /// Either side of the comparison scored below chance level.
    pub below_chance: bool,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RiTable {
    pub rows: Vec<RiRow>,
    pub baseline: Vec<TaskResult>,
}

impl RiTable {
    pub fn configs(&self) -> Vec<String> {
        let mut out: Vec<String> = self.rows.iter().map(|r| r.config.clone()).collect();
        out.dedup();
        out
    }

    pub fn tasks(&self) -> Vec<String> {
        self.baseline.iter().map(|t| t.task.clone()).collect()
    }
}

/// Joins experimental reports against the baseline into a complete RI
/// table; rows are ordered by (config, task). Every configuration must
/// cover every baseline task.
pub fn build_ri_table(baseline: &EvalReport, experiments: &[(String, EvalReport)]) -> Result<RiTable> {
    let mut base_tasks: Vec<&TaskResult> = baseline.results.iter().collect();
    base_tasks.sort_by(|a, b| a.task.cmp(&b.task));
    let mut configs: Vec<&(String, EvalReport)> = experiments.iter().collect();
    configs.sort_by(|a, b| a.0.cmp(&b.0));

    let mut rows = Vec::new();
    let mut missing: Vec<(String, String)> = Vec::new();
    for (config, report) in configs {
        for base in &base_tasks {
            let Some(result) = report.results.iter().find(|r| r.task == base.task) else {
                missing.push((config.clone(), base.task.clone()));
                continue;
            };
            let class = MetricClass::from(base.metric);
            rows.push(RiRow {
                config: config.clone(),
                task: base.task.clone(),
                metric: base.metric,
                class,
                baseline_value: base.value,
                value: result.value,
                ri_percent: relative_improvement(result.value, base.value, class)?,
                below_chance: base.below_chance || result.below_chance,
            });
        }
    }
    if !missing.is_empty() {
        return Err(CoreError::MissingCells(missing));
    }
    Ok(RiTable { rows, baseline: base_tasks.into_iter().cloned().collect() })
}

/// Task filter for averaging.
#[derive(Debug, Clone, Default)]
pub struct TaskFilter {
    pub include: Option<BTreeSet<String>>,
    pub exclude: BTreeSet<String>,
}

impl TaskFilter {
    fn keeps(&self, task: &str) -> bool {
        if self.exclude.contains(task) {
            return false;
        }
        match &self.include {
            Some(set) => set.contains(task),
            None => true,
        }
    }
}

/// Tasks dropped from averages: anything below chance for the baseline or
/// any configuration (the comparison would not be meaningful), applied
/// symmetrically so every configuration averages the same task set.
pub fn below_chance_tasks(table: &RiTable) -> BTreeSet<String> {
    table
        .rows
        .iter()
        .filter(|r| r.below_chance)
        .map(|r| r.task.clone())
        .collect()
}

/// Mean RI per configuration over the kept tasks, in task-name order.
pub fn average_ri(table: &RiTable, filter: &TaskFilter) -> Result<BTreeMap<String, f64>> {
    let dropped = below_chance_tasks(table);
    let kept: Vec<String> = table
        .tasks()
        .into_iter()
        .filter(|t| filter.keeps(t) && !dropped.contains(t))
        .collect();
    if kept.is_empty() {
        return Err(CoreError::Config(
            "no tasks left to average after filtering and below-chance exclusion".into(),
        ));
    }
    let mut cells: BTreeMap<(String, String), f64> = BTreeMap::new();
    for row in &table.rows {
        cells.insert((row.config.clone(), row.task.clone()), row.ri_percent);
    }
    let mut out = BTreeMap::new();
    let mut missing = Vec::new();
    for config in table.configs() {
        let mut sum = 0.0;
        for task in &kept {
            match cells.get(&(config.clone(), task.clone())) {
                Some(ri) => sum += ri,
                None => missing.push((config.clone(), task.clone())),
            }
        }
        out.insert(config, sum / kept.len() as f64);
    }
    if !missing.is_empty() {
        return Err(CoreError::MissingCells(missing));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LayerImportance {
    /// 1-based layer index.
    pub layer: usize,
    /// Mean contribution over the configurations deactivating this layer;
    /// absent when no configuration ever deactivated it.
    pub raw: Option<f64>,
    /// Number of configurations in which the layer was deactivated.
    pub config_count: usize,
    pub standardized: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ImportanceVector {
    pub layers: Vec<LayerImportance>,
    pub mean: f64,
    pub std_dev: f64,
    /// All raw scores were identical; standardized scores are defined as
    /// zero.
    pub sigma_zero: bool,
    pub warnings: Vec<String>,
}

/// Distributes `-avg_RI / |deactivated|` to every deactivated layer of each
/// configuration, averages per layer, and standardizes. Configurations with
/// no deactivated layers (the baseline, ratio 100) contribute nothing.
/// `avg_ri` and `deactivated` are keyed by configuration id; iteration is
/// in key order, so the result is deterministic.
pub fn layer_importance(
    avg_ri: &BTreeMap<String, f64>,
    deactivated: &BTreeMap<String, Vec<usize>>,
    n_layers: usize,
) -> Result<ImportanceVector> {
    let mut warnings = Vec::new();
    let mut sums = alloc::vec![0.0f64; n_layers];
    let mut counts = alloc::vec![0usize; n_layers];
    let mut used = 0usize;
    for (config, ri) in avg_ri {
        let Some(layers) = deactivated.get(config) else {
            warnings.push(format!("configuration {config} has no plan; skipped"));
            continue;
        };
        if layers.is_empty() {
            continue; // baseline-shaped configuration
        }
        used += 1;
        let share = -ri / layers.len() as f64;
        for &layer in layers {
            if layer == 0 || layer > n_layers {
                return Err(CoreError::Index { what: "layer", index: layer, bound: n_layers + 1 });
            }
            sums[layer - 1] += share;
            counts[layer - 1] += 1;
        }
    }
    if used == 0 {
        return Err(CoreError::Config(
            "no configuration with deactivated layers; importance undefined".into(),
        ));
    }
    if used < 15 {
        warnings.push(format!(
            "importance computed from {used} configurations (a full position × ratio grid has 15)"
        ));
    }

    let raws: Vec<Option<f64>> = (0..n_layers)
        .map(|i| (counts[i] > 0).then(|| sums[i] / counts[i] as f64))
        .collect();
    let present: Vec<f64> = raws.iter().flatten().copied().collect();
    let n = present.len() as f64;
    let mean = present.iter().sum::<f64>() / n;
    let variance = present.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std_dev = Float::sqrt(variance);
    let sigma_zero = std_dev == 0.0;
    if sigma_zero {
        warnings.push("raw importance scores are constant; standardized scores set to 0".into());
    }
    let layers = raws
        .iter()
        .enumerate()
        .map(|(i, raw)| LayerImportance {
            layer: i + 1,
            raw: *raw,
            config_count: counts[i],
            standardized: raw.map(|r| if sigma_zero { 0.0 } else { (r - mean) / std_dev }),
        })
        .collect();
    Ok(ImportanceVector { layers, mean, std_dev, sigma_zero, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::TaskKind;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn equal_metrics_give_zero_ri() {
        assert_eq!(relative_improvement(0.4, 0.4, MetricClass::AccuracyBased).unwrap(), 0.0);
        assert_eq!(relative_improvement(55.0, 55.0, MetricClass::LossBased).unwrap(), 0.0);
    }

    #[test]
    fn ri_hand_cases() {
        // Accuracy 0.33 vs 0.30 -> +10%.
        let acc = relative_improvement(0.33, 0.30, MetricClass::AccuracyBased).unwrap();
        assert!((acc - 10.0).abs() < 1e-12, "{acc}");
        // Perplexity 90 vs 100 -> +10% after sign correction.
        let ppl = relative_improvement(90.0, 100.0, MetricClass::LossBased).unwrap();
        assert!((ppl - 10.0).abs() < 1e-12, "{ppl}");
    }

    #[test]
    fn zero_baseline_is_an_error() {
        assert!(relative_improvement(0.5, 0.0, MetricClass::AccuracyBased).is_err());
    }

    fn result(task: &str, metric: MetricKind, value: f64, below: bool) -> TaskResult {
        TaskResult {
            task: task.into(),
            kind: match metric {
                MetricKind::Accuracy => TaskKind::MultipleChoice,
                MetricKind::Perplexity => TaskKind::Perplexity,
            },
            metric,
            value,
            items: 10,
            chance_level: (metric == MetricKind::Accuracy).then_some(0.25),
            below_chance: below,
        }
    }

    fn report(id: &str, results: Vec<TaskResult>) -> EvalReport {
        EvalReport { model_id: id.into(), checkpoint_step: None, seed: None, results }
    }

    #[test]
    fn table_builds_and_baseline_rows_are_zero() {
        let baseline = report(
            "baseline",
            vec![
                result("lm", MetricKind::Perplexity, 20.0, false),
                result("mc", MetricKind::Accuracy, 0.5, false),
            ],
        );
        let same = ("self_100".to_string(), baseline.clone());
        let table = build_ri_table(&baseline, &[same]).unwrap();
        assert!(table.rows.iter().all(|r| r.ri_percent == 0.0));
    }

    #[test]
    fn missing_cells_are_reported_as_pairs() {
        let baseline = report(
            "baseline",
            vec![
                result("lm", MetricKind::Perplexity, 20.0, false),
                result("mc", MetricKind::Accuracy, 0.5, false),
            ],
        );
        let partial =
            ("first_30".to_string(), report("first_30", vec![result("lm", MetricKind::Perplexity, 19.0, false)]));
        let err = build_ri_table(&baseline, &[partial]).unwrap_err();
        match err {
            CoreError::MissingCells(cells) => {
                assert_eq!(cells, vec![("first_30".to_string(), "mc".to_string())]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn average_ri_hand_cases() {
        let baseline = report(
            "baseline",
            vec![
                result("a", MetricKind::Accuracy, 0.5, false),
                result("b", MetricKind::Accuracy, 0.5, false),
                result("c", MetricKind::Accuracy, 0.5, false),
            ],
        );
        // RIs of +1, +2, +6 percent -> mean +3.
        let exp = report(
            "x",
            vec![
                result("a", MetricKind::Accuracy, 0.505, false),
                result("b", MetricKind::Accuracy, 0.51, false),
                result("c", MetricKind::Accuracy, 0.53, false),
            ],
        );
        let table = build_ri_table(&baseline, &[("x".to_string(), exp)]).unwrap();
        let avg = average_ri(&table, &TaskFilter::default()).unwrap();
        assert!((avg["x"] - 3.0).abs() < 1e-12);

        // Single task: identity. Symmetric ±2: zero.
        let single = TaskFilter { include: Some(["a".to_string()].into()), ..Default::default() };
        assert!((average_ri(&table, &single).unwrap()["x"] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_ris_average_to_zero() {
        let baseline = report(
            "baseline",
            vec![
                result("a", MetricKind::Accuracy, 0.5, false),
                result("b", MetricKind::Accuracy, 0.5, false),
            ],
        );
        let exp = report(
            "x",
            vec![
                result("a", MetricKind::Accuracy, 0.51, false),
                result("b", MetricKind::Accuracy, 0.49, false),
            ],
        );
        let table = build_ri_table(&baseline, &[("x".to_string(), exp)]).unwrap();
        let avg = average_ri(&table, &TaskFilter::default()).unwrap();
        assert!(avg["x"].abs() < 1e-12);
    }

    #[test]
    fn below_chance_tasks_are_excluded_from_averages() {
        let baseline = report(
            "baseline",
            vec![
                result("good", MetricKind::Accuracy, 0.6, false),
                result("bad", MetricKind::Accuracy, 0.2, true),
            ],
        );
        let exp = report(
            "x",
            vec![
                result("good", MetricKind::Accuracy, 0.66, false),
                result("bad", MetricKind::Accuracy, 0.9, false),
            ],
        );
        let table = build_ri_table(&baseline, &[("x".to_string(), exp)]).unwrap();
        let avg = average_ri(&table, &TaskFilter::default()).unwrap();
        // Only "good" counts: +10%.
        assert!((avg["x"] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn ri_is_monotonic_in_the_metric() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        use rand::Rng;
        for _ in 0..1000 {
            let base: f64 = rng.gen_range(0.05..100.0);
            let lo: f64 = rng.gen_range(0.01..100.0);
            let hi = lo + rng.gen_range(0.001..10.0);
            let acc_lo = relative_improvement(lo, base, MetricClass::AccuracyBased).unwrap();
            let acc_hi = relative_improvement(hi, base, MetricClass::AccuracyBased).unwrap();
            assert!(acc_hi > acc_lo);
            let loss_lo = relative_improvement(lo, base, MetricClass::LossBased).unwrap();
            let loss_hi = relative_improvement(hi, base, MetricClass::LossBased).unwrap();
            assert!(loss_hi < loss_lo, "decreasing a loss metric must raise RI");
        }
    }

    #[test]
    fn worked_contribution_from_final_half_on_forty_layers() {
        // A 40-layer model whose final_50 configuration deactivates layers
        // 1..=20 at an average RI of -2.04 grants each of them +0.102.
        let mut avg = BTreeMap::new();
        avg.insert("final_50".to_string(), -2.04);
        let mut deact = BTreeMap::new();
        deact.insert("final_50".to_string(), (1..=20).collect::<Vec<_>>());
        let iv = layer_importance(&avg, &deact, 40).unwrap();
        let raw = iv.layers[1].raw.unwrap(); // layer index 2
        assert!((raw - 0.102).abs() < 0.0005, "{raw}");
        assert_eq!(iv.layers[1].config_count, 1);
        assert!(iv.layers[25].raw.is_none(), "never-deactivated layers carry no raw score");
    }

    #[test]
    fn all_zero_ri_gives_zero_raw_scores_and_flags_sigma() {
        let mut avg = BTreeMap::new();
        let mut deact = BTreeMap::new();
        avg.insert("first_50".to_string(), 0.0);
        deact.insert("first_50".to_string(), vec![3, 4]);
        avg.insert("final_50".to_string(), 0.0);
        deact.insert("final_50".to_string(), vec![1, 2]);
        let iv = layer_importance(&avg, &deact, 4).unwrap();
        assert!(iv.sigma_zero);
        for layer in &iv.layers {
            assert_eq!(layer.raw, Some(0.0));
            assert_eq!(layer.standardized, Some(0.0));
        }
    }

    #[test]
    fn importance_matches_brute_force_on_synthetic_fixture() {
        // 4 layers, 3 configurations.
        let fixture: [(&str, f64, &[usize]); 3] = [
            ("cfg_a", -2.0, &[1, 2]),
            ("cfg_b", 1.5, &[3]),
            ("cfg_c", -0.9, &[2, 3, 4]),
        ];
        let mut avg = BTreeMap::new();
        let mut deact = BTreeMap::new();
        for (id, ri, layers) in fixture {
            avg.insert(id.to_string(), ri);
            deact.insert(id.to_string(), layers.to_vec());
        }
        let iv = layer_importance(&avg, &deact, 4).unwrap();

        // Brute force: literal per-layer evaluation over sorted configs.
        let mut ids: Vec<&str> = fixture.iter().map(|(id, _, _)| *id).collect();
        ids.sort_unstable();
        let mut raw = [0.0f64; 4];
        let mut count = [0usize; 4];
        for layer in 1..=4usize {
            for id in &ids {
                let (_, ri, layers) = fixture.iter().find(|(fid, _, _)| fid == id).unwrap();
                if layers.contains(&layer) {
                    raw[layer - 1] += -ri / layers.len() as f64;
                    count[layer - 1] += 1;
                }
            }
        }
        let raws: Vec<f64> = raw.iter().zip(&count).map(|(&r, &c)| r / c as f64).collect();
        let mu = raws.iter().sum::<f64>() / 4.0;
        let var = raws.iter().map(|r| (r - mu) * (r - mu)).sum::<f64>() / 4.0;
        let sigma = var.sqrt();
        for (i, raw) in raws.iter().enumerate() {
            assert_eq!(iv.layers[i].raw, Some(*raw), "raw layer {}", i + 1);
            assert_eq!(iv.layers[i].standardized, Some((raw - mu) / sigma));
        }

        // Standardized scores have zero mean and unit variance.
        let std: Vec<f64> = iv.layers.iter().map(|l| l.standardized.unwrap()).collect();
        let m = std.iter().sum::<f64>() / 4.0;
        let v = std.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / 4.0;
        assert!(m.abs() < 1e-9 && (v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn contributions_conserve_the_configurations_average_ri() {
        let mut avg = BTreeMap::new();
        let mut deact = BTreeMap::new();
        avg.insert("middle_30".to_string(), -1.234567);
        deact.insert("middle_30".to_string(), vec![1, 2, 3, 4, 5, 9, 10, 11, 12]);
        let share = -(-1.234567f64) / 9.0;
        let total: f64 = (0..9).map(|_| share).sum();
        assert!((total - 1.234567).abs() < 1e-12);
        // And the vector itself reflects the same share on every member.
        let iv = layer_importance(&avg, &deact, 12).unwrap();
        for idx in [1usize, 2, 3, 4, 5, 9, 10, 11, 12] {
            assert_eq!(iv.layers[idx - 1].raw, Some(share));
        }
    }

    proptest! {
        #[test]
        fn improving_any_metric_strictly_increases_ri(
            base in 0.01f64..1000.0,
            value in 0.01f64..1000.0,
            delta in 0.0001f64..100.0,
        ) {
            let up = relative_improvement(value + delta, base, MetricClass::AccuracyBased).unwrap();
            let at = relative_improvement(value, base, MetricClass::AccuracyBased).unwrap();
            prop_assert!(up > at);
            let down = relative_improvement(value + delta, base, MetricClass::LossBased).unwrap();
            let at_loss = relative_improvement(value, base, MetricClass::LossBased).unwrap();
            prop_assert!(down < at_loss);
        }
    }

    use rand::SeedableRng;
}
