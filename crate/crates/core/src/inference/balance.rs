//! Covariate balance across instrument intervals, before and after
//! conditioning on a generalized propensity score.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{MteError, Result};
use crate::estimation::{design, Term};
use crate::numeric::{mean, norm_pdf, ols, percentile, variance};

/// Critical |t| for counting a covariate difference as significant.
pub const T_CRITICAL: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpsSpec {
    /// Polynomial degree of each covariate in the mean of Z | X.
    pub degree: usize,
    pub intervals: usize,
    pub blocks: usize,
}

impl Default for GpsSpec {
    fn default() -> Self {
        GpsSpec { degree: 1, intervals: 3, blocks: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub covariate: String,
    pub interval: usize,
    pub t_before: f64,
    pub t_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub rows: Vec<BalanceRow>,
    pub significant_before: usize,
    pub significant_after: usize,
    pub gps_sigma: f64,
}

fn welch(a: &[f64], b: &[f64]) -> Option<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    Some((mean(a) - mean(b), variance(a) / a.len() as f64 + variance(b) / b.len() as f64))
}

fn t_ratio(diff: f64, var: f64) -> f64 {
    if var > 0.0 {
        diff / var.sqrt()
    } else {
        0.0
    }
}

/// Z | X is modelled as normal with a polynomial mean and constant
/// variance. Z is cut into percentile intervals; each covariate's mean in
/// an interval is compared with the rest of the sample, then again within
/// blocks of the score evaluated at the interval's median Z.
pub fn gps_balance(data: &Dataset, z: &Term, x_terms: &[Term], spec: &GpsSpec) -> Result<BalanceReport> {
    if spec.degree == 0 || spec.intervals < 2 || spec.blocks == 0 {
        return Err(MteError::Config("GPS needs degree >= 1, at least 2 intervals and 1 block".into()));
    }
    let n = data.n();
    let zv = z.values(data)?;
    let (xc, xnames) = design(data, x_terms)?;
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    let mut names = vec!["1".to_string()];
    for (j, name) in xnames.iter().enumerate() {
        let c: Vec<f64> = xc.column(j).iter().copied().collect();
        let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            continue;
        }
        for p in 1..=spec.degree {
            let v: Vec<f64> = c.iter().map(|x| x.powi(p as i32)).collect();
            // higher powers of a 0/1 column repeat it
            if p > 1 && c.iter().all(|x| *x == 0.0 || *x == 1.0) {
                break;
            }
            cols.push(v);
            names.push(format!("{name}^{p}"));
        }
    }
    let xm = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    let fit = ols(&xm, &DVector::from_column_slice(&zv), &names, "GPS mean")?;
    let dof = n.saturating_sub(cols.len());
    let sigma = if dof > 0 { (fit.rss / dof as f64).sqrt() } else { 0.0 };
    if !(sigma > 1e-12) {
        return Err(MteError::DegenerateOutcome("generalized propensity score has zero residual variance".into()));
    }
    let mu: Vec<f64> = (0..n).map(|i| zv[i] - fit.residuals[i]).collect();

    let cuts: Vec<f64> = (1..spec.intervals).map(|k| percentile(&zv, k as f64 / spec.intervals as f64)).collect();
    let interval: Vec<usize> = zv.iter().map(|v| cuts.iter().filter(|&&c| *v > c).count()).collect();

    let mut rows = vec![];
    for k in 0..spec.intervals {
        let inside: Vec<usize> = (0..n).filter(|&i| interval[i] == k).collect();
        let outside: Vec<usize> = (0..n).filter(|&i| interval[i] != k).collect();
        if inside.is_empty() {
            continue;
        }
        let zk = percentile(&inside.iter().map(|&i| zv[i]).collect::<Vec<_>>(), 0.5);
        let score: Vec<f64> = (0..n).map(|i| norm_pdf((zk - mu[i]) / sigma) / sigma).collect();
        let in_scores: Vec<f64> = inside.iter().map(|&i| score[i]).collect();
        let bcuts: Vec<f64> = (1..spec.blocks).map(|b| percentile(&in_scores, b as f64 / spec.blocks as f64)).collect();
        let block_of = |s: f64| bcuts.iter().filter(|&&c| s > c).count();
        for (j, cov) in xnames.iter().enumerate() {
            let col = xc.column(j);
            let a: Vec<f64> = inside.iter().map(|&i| col[i]).collect();
            let b: Vec<f64> = outside.iter().map(|&i| col[i]).collect();
            let t_before = welch(&a, &b).map(|(d, v)| t_ratio(d, v)).unwrap_or(0.0);
            let (mut diff, mut var, mut weight) = (0.0, 0.0, 0.0);
            for blk in 0..spec.blocks {
                let a: Vec<f64> = inside.iter().filter(|&&i| block_of(score[i]) == blk).map(|&i| col[i]).collect();
                let b: Vec<f64> = outside.iter().filter(|&&i| block_of(score[i]) == blk).map(|&i| col[i]).collect();
                if let Some((d, v)) = welch(&a, &b) {
                    let w = a.len() as f64;
                    diff += w * d;
                    var += w * w * v;
                    weight += w;
                }
            }
            let t_after = if weight > 0.0 { t_ratio(diff / weight, var / (weight * weight)) } else { 0.0 };
            rows.push(BalanceRow { covariate: cov.clone(), interval: k, t_before, t_after });
        }
    }
    let significant_before = rows.iter().filter(|r| r.t_before.abs() > T_CRITICAL).count();
    let significant_after = rows.iter().filter(|r| r.t_after.abs() > T_CRITICAL).count();
    Ok(BalanceReport { rows, significant_before, significant_after, gps_sigma: sigma })
}
