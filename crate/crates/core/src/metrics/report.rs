use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricError;

/// Mean of repeated runs with a 95% normal half-width, `1.96·sd/√n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub half_width: f64,
    pub repeats: usize,
}

impl Interval {
    pub fn from_repeats(values: &[f64]) -> Result<Self, MetricError> {
        let n = values.len();
        if n < 2 {
            return Err(MetricError::TooFew { needed: 2, got: n });
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Ok(Self { mean, half_width: 1.96 * var.sqrt() / (n as f64).sqrt(), repeats: n })
    }
}

/// Metric values keyed by report column name (`RP3`, `MMD`, `KID`, `Div`, `MM`, `B4`, `B1`, `RG`, ...).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: String,
    /// Hash of the frozen evaluator that produced the embeddings.
    pub evaluator_hash: String,
    pub metrics: BTreeMap<String, Interval>,
}

impl MetricReport {
    pub fn new(task: &str, evaluator_hash: &str) -> Self {
        Self { task: task.to_string(), evaluator_hash: evaluator_hash.to_string(), metrics: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: &str, values: &[f64]) -> Result<(), MetricError> {
        self.metrics.insert(name.to_string(), Interval::from_repeats(values)?);
        Ok(())
    }

    /// Two-row CSV: column names in `order` (missing ones skipped), then `mean±half`.
    pub fn to_csv(&self, order: &[&str]) -> String {
        let cols: Vec<&str> = order.iter().copied().filter(|c| self.metrics.contains_key(*c)).collect();
        let values: Vec<String> = cols
            .iter()
            .map(|c| {
                let i = &self.metrics[*c];
                format!("{:.4}±{:.4}", i.mean, i.half_width)
            })
            .collect();
        format!("{}\n{}\n", cols.join(","), values.join(","))
    }
}
