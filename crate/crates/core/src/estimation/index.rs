use serde::{Deserialize, Serialize};

use crate::error::{MteError, Result};
use crate::numeric::{mean, variance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IndexWeighting {
    #[default]
    InverseVariance,
    Simple,
}

/// Combined barrier index: weighted average of logged barrier columns.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentIndex {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Weights are proportional to 1/var(log column). When `clusters` is
/// given the variance is taken across cluster means, so states with many
/// rows do not dominate.
pub fn instrument_index(columns: &[(&str, &[f64])], clusters: Option<&[u64]>, weighting: IndexWeighting) -> Result<InstrumentIndex> {
    if columns.is_empty() {
        return Err(MteError::InvalidInput("instrument index needs at least one column".into()));
    }
    let n = columns[0].1.len();
    let mut logs = Vec::with_capacity(columns.len());
    for (name, col) in columns {
        if col.len() != n {
            return Err(MteError::Schema(format!("barrier column `{name}` has wrong length")));
        }
        if let Some(i) = col.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(MteError::Domain { column: name.to_string(), message: format!("non-positive value {} at row {}", col[i], i + 1) });
        }
        logs.push(col.iter().map(|v| v.ln()).collect::<Vec<f64>>());
    }
    let raw: Vec<f64> = match weighting {
        IndexWeighting::Simple => vec![1.0; columns.len()],
        IndexWeighting::InverseVariance => {
            let mut w = Vec::with_capacity(columns.len());
            for ((name, _), l) in columns.iter().zip(&logs) {
                let v = match clusters {
                    Some(c) => variance(&cluster_means(l, c)),
                    None => variance(l),
                };
                if !(v > 0.0) {
                    return Err(MteError::Domain { column: name.to_string(), message: "zero variance; inverse-variance weight undefined".into() });
                }
                w.push(1.0 / v);
            }
            w
        }
    };
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let values = combine(&logs, &weights, n);
    Ok(InstrumentIndex { values, weights })
}

/// Index values for new data under weights estimated elsewhere.
pub fn apply_index_weights(columns: &[(&str, &[f64])], weights: &[f64]) -> Result<Vec<f64>> {
    if columns.len() != weights.len() || columns.is_empty() {
        return Err(MteError::Schema(format!("index has {} weights but {} barrier columns were given", weights.len(), columns.len())));
    }
    let n = columns[0].1.len();
    let mut logs = Vec::with_capacity(columns.len());
    for (name, col) in columns {
        if col.len() != n {
            return Err(MteError::Schema(format!("barrier column `{name}` has wrong length")));
        }
        if let Some(i) = col.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(MteError::Domain { column: name.to_string(), message: format!("non-positive value {} at row {}", col[i], i + 1) });
        }
        logs.push(col.iter().map(|v| v.ln()).collect::<Vec<f64>>());
    }
    Ok(combine(&logs, weights, n))
}

fn combine(logs: &[Vec<f64>], weights: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| logs.iter().zip(weights).map(|(l, w)| w * l[i]).sum()).collect()
}

fn cluster_means(v: &[f64], clusters: &[u64]) -> Vec<f64> {
    let mut m: std::collections::BTreeMap<u64, Vec<f64>> = Default::default();
    for (x, c) in v.iter().zip(clusters) {
        m.entry(*c).or_default().push(*x);
    }
    m.values().map(|xs| mean(xs)).collect()
}
