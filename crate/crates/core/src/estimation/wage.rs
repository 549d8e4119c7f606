//! Wage equation for imputing missing wages of nonworkers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::probit::{probit_newton, ProbitOptions};
use super::terms::{design, Term};
use crate::data::Dataset;
use crate::error::{MteError, Result};
use crate::numeric::{inverse_mills, ols};

pub const MIN_WORKERS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WageMode {
    #[default]
    Ols,
    /// Two-step selection correction with an inverse Mills ratio.
    Heckman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WageModel {
    pub mode: WageMode,
    pub terms: Vec<Term>,
    pub gamma: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Coefficient on the inverse Mills ratio (selection mode only).
    pub mills_coef: Option<f64>,
    pub mills_std_error: Option<f64>,
    pub selection_terms: Vec<Term>,
    pub selection_coef: Vec<f64>,
    /// Selection probit failed and plain OLS was used instead.
    pub fell_back_to_ols: bool,
    pub n_workers: usize,
}

/// Fits log wage on `terms` among rows with an observed wage. In
/// selection mode an employment probit on `selection_terms` (all rows)
/// supplies the inverse Mills ratio.
pub fn wage_fit(data: &Dataset, mode: WageMode, terms: &[Term], selection_terms: &[Term]) -> Result<WageModel> {
    let workers: Vec<usize> = (0..data.n()).filter(|&i| data.log_wage[i].is_some()).collect();
    if workers.len() < MIN_WORKERS {
        return Err(MteError::InvalidInput(format!("wage equation needs >= {MIN_WORKERS} workers, got {}", workers.len())));
    }
    let (x_all, names) = design(data, terms)?;
    let y = DVector::from_iterator(workers.len(), workers.iter().map(|&i| data.log_wage[i].unwrap()));
    let x = x_all.select_rows(&workers);

    let mut mills = None;
    let mut selection_coef = vec![];
    let mut fell_back = false;
    if mode == WageMode::Heckman {
        let (z, znames) = design(data, selection_terms)?;
        let emp: Vec<f64> = data.log_wage.iter().map(|w| w.is_some() as u8 as f64).collect();
        match probit_newton(&z, &emp, &znames, None, &ProbitOptions::default()) {
            Ok(fit) => {
                let idx = &z * &fit.coef;
                mills = Some(DVector::from_iterator(workers.len(), workers.iter().map(|&i| inverse_mills(idx[i]))));
                selection_coef = fit.coef.iter().copied().collect();
            }
            Err(MteError::Separation { .. }) | Err(MteError::NotConverged { .. }) => fell_back = true,
            Err(e) => return Err(e),
        }
    }
    let (xr, rnames) = match &mills {
        Some(m) => {
            let mut xr = DMatrix::<f64>::zeros(x.nrows(), x.ncols() + 1);
            xr.columns_mut(0, x.ncols()).copy_from(&x);
            xr.column_mut(x.ncols()).copy_from(m);
            let mut n = names.clone();
            n.push("mills".into());
            (xr, n)
        }
        None => (x, names),
    };
    let fit = ols(&xr, &y, &rnames, "wage equation")?;
    let dof = (workers.len() as f64 - xr.ncols() as f64).max(1.0);
    let s2 = fit.rss / dof;
    let se: Vec<f64> = (0..xr.ncols()).map(|j| (fit.xtx_inv[(j, j)] * s2).sqrt()).collect();
    let k = terms.len();
    Ok(WageModel {
        mode,
        terms: terms.to_vec(),
        gamma: fit.coef.as_slice()[..k].to_vec(),
        std_errors: se[..k].to_vec(),
        mills_coef: mills.as_ref().map(|_| fit.coef[k]),
        mills_std_error: mills.as_ref().map(|_| se[k]),
        selection_terms: if mode == WageMode::Heckman { selection_terms.to_vec() } else { vec![] },
        selection_coef,
        fell_back_to_ols: fell_back,
        n_workers: workers.len(),
    })
}

/// Fills missing log wages with X·γ̂; observed wages are kept.
pub fn impute_wages(data: &Dataset, model: &WageModel) -> Result<Dataset> {
    if data.missing_wages() == 0 {
        return Ok(data.clone());
    }
    let (x, _) = design(data, &model.terms)?;
    let pred = x * DVector::from_column_slice(&model.gamma);
    let mut out = data.clone();
    for (i, w) in out.log_wage.iter_mut().enumerate() {
        if w.is_none() {
            *w = Some(pred[i]);
        }
    }
    Ok(out)
}
