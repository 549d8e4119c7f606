//! Knot-count choice by generalized cross-validation.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{MteError, Result};
use crate::estimation::{second_stage_fit, SplineBasis, Term};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcvEntry {
    pub knots: usize,
    pub rss: f64,
    pub params: usize,
    pub n: usize,
    /// `None` when the candidate was skipped.
    pub score: Option<f64>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcvReport {
    pub entries: Vec<GcvEntry>,
    pub selected: usize,
}

/// (RSS/n) / (1 - p/n)²; `None` when p >= n.
pub fn gcv_score(rss: f64, n: usize, params: usize) -> Option<f64> {
    if params >= n {
        return None;
    }
    let nf = n as f64;
    Some((rss / nf) / (1.0 - params as f64 / nf).powi(2))
}

/// Picks the minimizer among scored entries; ties go to fewer knots.
pub fn select_entry(entries: &[GcvEntry]) -> Option<usize> {
    entries
        .iter()
        .filter_map(|e| e.score.map(|s| (s, e.params, e.knots)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, _, k)| k)
}

pub fn gcv_select(data: &Dataset, fhat: &[f64], beta_terms: &[Term], lambda_terms: &[Term], window: (f64, f64), candidates: &[usize]) -> Result<GcvReport> {
    if candidates.is_empty() {
        return Err(MteError::Config("no knot candidates given".into()));
    }
    let n = data.n();
    let mut entries = vec![];
    for &j in candidates {
        let basis = SplineBasis::equally_spaced(j, window)?;
        let params = beta_terms.len() + lambda_terms.len() + basis.len();
        let entry = if params >= n {
            GcvEntry { knots: j, rss: f64::NAN, params, n, score: None, skipped: Some(format!("{params} parameters for {n} rows")) }
        } else {
            match second_stage_fit(data, fhat, beta_terms, lambda_terms, &basis, window) {
                Ok(m) => GcvEntry { knots: j, rss: m.rss, params, n, score: gcv_score(m.rss, n, params), skipped: None },
                Err(e @ MteError::RankDeficient { .. }) => GcvEntry { knots: j, rss: f64::NAN, params, n, score: None, skipped: Some(e.to_string()) },
                Err(e) => return Err(e),
            }
        };
        entries.push(entry);
    }
    let selected = select_entry(&entries).ok_or_else(|| MteError::InvalidInput("every knot candidate was skipped".into()))?;
    Ok(GcvReport { entries, selected })
}
