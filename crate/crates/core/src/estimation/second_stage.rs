//! Hours equation H = X^β β + [X̃λ + g(F̂)]·F̂ + ε and its marginal response.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::spline::SplineBasis;
use super::terms::{design, Term};
use crate::curve::MteCurve;
use crate::data::Dataset;
use crate::error::{MteError, Result};
use crate::numeric::{cluster_robust_cov, ols};

/// Hours at or above which work counts as full time.
pub const FULL_TIME_HOURS: f64 = 35.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondStageModel {
    pub beta_terms: Vec<Term>,
    pub lambda_terms: Vec<Term>,
    pub beta: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Spline coefficients g_1..g_J on [1, F, S_3, ..., S_J].
    pub g: Vec<f64>,
    /// Estimation-sample means of the λ terms.
    pub centering: Vec<f64>,
    pub basis: SplineBasis,
    pub window: (f64, f64),
    pub rss: f64,
    pub sigma2: f64,
    pub n: usize,
    /// Conventional OLS standard errors in regressor order (β, λ, g).
    pub std_errors: Vec<f64>,
}

pub(crate) struct StageDesign {
    pub x: DMatrix<f64>,
    pub names: Vec<String>,
    pub centering: Vec<f64>,
}

pub(crate) fn stage_design(data: &Dataset, fhat: &[f64], beta_terms: &[Term], lambda_terms: &[Term], centering: Option<&[f64]>, basis: &SplineBasis) -> Result<StageDesign> {
    let n = data.n();
    if fhat.len() != n {
        return Err(MteError::InvalidInput(format!("F̂ has {} rows, data has {n}", fhat.len())));
    }
    if let Some(i) = fhat.iter().position(|f| !(*f >= 0.0 && *f <= 1.0)) {
        return Err(MteError::InvalidInput(format!("F̂ outside [0, 1] at row {}", i + 1)));
    }
    let (xb, bnames) = design(data, beta_terms)?;
    let (xl, lnames) = design(data, lambda_terms)?;
    let centering: Vec<f64> = match centering {
        Some(c) => c.to_vec(),
        None => (0..xl.ncols()).map(|j| xl.column(j).mean()).collect(),
    };
    let kb = xb.ncols();
    let kl = xl.ncols();
    let j = basis.len();
    let mut x = DMatrix::<f64>::zeros(n, kb + kl + j);
    x.columns_mut(0, kb).copy_from(&xb);
    for c in 0..kl {
        for i in 0..n {
            x[(i, kb + c)] = (xl[(i, c)] - centering[c]) * fhat[i];
        }
    }
    let (mut v, mut d1, mut d2) = (vec![0.0; j], vec![0.0; j], vec![0.0; j]);
    for i in 0..n {
        basis.eval_all(fhat[i], &mut v, &mut d1, &mut d2);
        for c in 0..j {
            x[(i, kb + kl + c)] = fhat[i] * v[c];
        }
    }
    let names = param_names(&bnames, &lnames, basis);
    Ok(StageDesign { x, names, centering })
}

fn param_names(beta: &[String], lambda: &[String], basis: &SplineBasis) -> Vec<String> {
    let mut names: Vec<String> = beta.iter().map(|s| format!("beta:{s}")).collect();
    names.extend(lambda.iter().map(|s| format!("lambda:{s}*F")));
    names.extend(basis.names().iter().map(|s| format!("spline:F*{s}")));
    names
}

/// Least squares of `y` on the constructed regressors. The model is
/// linear in (β, λ, g) given F̂, so this is the exact NLS solution.
pub fn second_stage_fit_outcome(data: &Dataset, y: &[f64], fhat: &[f64], beta_terms: &[Term], lambda_terms: &[Term], basis: &SplineBasis, window: (f64, f64)) -> Result<SecondStageModel> {
    check_window(window)?;
    let d = stage_design(data, fhat, beta_terms, lambda_terms, None, basis)?;
    let fit = ols(&d.x, &DVector::from_column_slice(y), &d.names, "second stage")?;
    let n = data.n();
    let p = d.x.ncols();
    let sigma2 = if n > p { fit.rss / (n - p) as f64 } else { f64::NAN };
    let kb = beta_terms.len();
    let kl = lambda_terms.len();
    let c = fit.coef.as_slice();
    Ok(SecondStageModel {
        beta_terms: beta_terms.to_vec(),
        lambda_terms: lambda_terms.to_vec(),
        beta: c[..kb].to_vec(),
        lambda: c[kb..kb + kl].to_vec(),
        g: c[kb + kl..].to_vec(),
        centering: d.centering,
        basis: basis.clone(),
        window,
        rss: fit.rss,
        sigma2,
        n,
        std_errors: (0..p).map(|j| (fit.xtx_inv[(j, j)] * sigma2).sqrt()).collect(),
    })
}

/// Fits the hours equation on `data.hours`.
pub fn second_stage_fit(data: &Dataset, fhat: &[f64], beta_terms: &[Term], lambda_terms: &[Term], basis: &SplineBasis, window: (f64, f64)) -> Result<SecondStageModel> {
    second_stage_fit_outcome(data, &data.hours, fhat, beta_terms, lambda_terms, basis, window)
}

pub(crate) fn check_window(window: (f64, f64)) -> Result<()> {
    if !(window.0 > 0.0 && window.0 < window.1 && window.1 < 1.0) {
        return Err(MteError::Config(format!("support window must satisfy 0 < lo < hi < 1, got {window:?}")));
    }
    Ok(())
}

impl SecondStageModel {
    /// Regressor names in coefficient order (β, λ, g).
    pub fn param_names(&self) -> Vec<String> {
        let b: Vec<String> = self.beta_terms.iter().map(|t| t.to_string()).collect();
        let l: Vec<String> = self.lambda_terms.iter().map(|t| t.to_string()).collect();
        param_names(&b, &l, &self.basis)
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.beta.iter().chain(&self.lambda).chain(&self.g).copied().collect()
    }

    pub fn n_params(&self) -> usize {
        self.beta.len() + self.lambda.len() + self.g.len()
    }

    pub fn g_value(&self, f: f64) -> (f64, f64) {
        let (v, d) = self.basis.eval(f);
        let g = v.iter().zip(&self.g).map(|(a, b)| a * b).sum();
        let gp = d.iter().zip(&self.g).map(|(a, b)| a * b).sum();
        (g, gp)
    }

    /// X̃λ at raw λ-term values (zero at the estimation means).
    pub fn interaction_shift(&self, x_at: Option<&[f64]>) -> Result<f64> {
        match x_at {
            None => Ok(0.0),
            Some(x) => {
                if x.len() != self.lambda.len() {
                    return Err(MteError::InvalidInput(format!("x_at needs {} values, got {}", self.lambda.len(), x.len())));
                }
                Ok(x.iter().zip(&self.centering).zip(&self.lambda).map(|((x, c), l)| (x - c) * l).sum())
            }
        }
    }

    /// ∂E[H]/∂F = X̃λ + g(F) + F·g′(F), only inside the support window.
    pub fn mte_eval(&self, f: f64, x_at: Option<&[f64]>) -> Result<f64> {
        let (lo, hi) = self.window;
        if !(f >= lo - 1e-12 && f <= hi + 1e-12) {
            return Err(MteError::OutOfSupport { value: f, lo, hi });
        }
        let (g, gp) = self.g_value(f);
        Ok(self.interaction_shift(x_at)? + g + f * gp)
    }

    /// The F-dependent part of the conditional mean, [X̃λ + g(F)]·F.
    pub fn selection_component(&self, f: f64, x_at: Option<&[f64]>) -> Result<f64> {
        Ok((self.interaction_shift(x_at)? + self.g_value(f).0) * f)
    }

    pub fn curve(&self, grid: &[f64], x_at: Option<&[f64]>) -> Result<MteCurve> {
        let mte = grid.iter().map(|&f| self.mte_eval(f, x_at)).collect::<Result<Vec<_>>>()?;
        let vals = x_at.map(|x| x.to_vec()).unwrap_or_else(|| self.centering.clone());
        Ok(MteCurve {
            grid: grid.to_vec(),
            mte,
            lo: None,
            hi: None,
            x_at: self.lambda_terms.iter().map(|t| t.to_string()).zip(vals).collect(),
            window: self.window,
        })
    }
}

pub fn mte_eval(model: &SecondStageModel, f: f64, x_at: Option<&[f64]>) -> Result<f64> {
    model.mte_eval(f, x_at)
}

/// Constant-effect fit: hours on [X^β | F̂]. The coefficient on F̂ is the
/// linear-IV weighted average of marginal responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousIv {
    pub effect: f64,
    /// Cluster-robust standard error treating F̂ as known.
    pub std_error: f64,
    pub beta: Vec<f64>,
}

pub fn homogeneous_iv_fit(data: &Dataset, fhat: &[f64], beta_terms: &[Term]) -> Result<HomogeneousIv> {
    let n = data.n();
    if fhat.len() != n {
        return Err(MteError::InvalidInput("F̂ length differs from data".into()));
    }
    let (xb, mut names) = design(data, beta_terms)?;
    let kb = xb.ncols();
    let mut x = DMatrix::<f64>::zeros(n, kb + 1);
    x.columns_mut(0, kb).copy_from(&xb);
    x.column_mut(kb).copy_from_slice(fhat);
    names = names.into_iter().map(|s| format!("beta:{s}")).collect();
    names.push("F".into());
    let fit = ols(&x, &DVector::from_column_slice(&data.hours), &names, "homogeneous IV")?;
    let cov = cluster_robust_cov(&x, &fit, &data.cluster_id);
    Ok(HomogeneousIv { effect: fit.coef[kb], std_error: cov[(kb, kb)].sqrt(), beta: fit.coef.as_slice()[..kb].to_vec() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoursOutcome {
    Nonwork,
    PartTime,
    FullTime,
}

impl HoursOutcome {
    pub fn indicator(&self, hours: f64) -> f64 {
        let hit = match self {
            HoursOutcome::Nonwork => hours == 0.0,
            HoursOutcome::PartTime => hours > 0.0 && hours < FULL_TIME_HOURS,
            HoursOutcome::FullTime => hours >= FULL_TIME_HOURS,
        };
        if hit {
            1.0
        } else {
            0.0
        }
    }
}

/// MTE on the probability scale for a work-status indicator.
#[allow(clippy::too_many_arguments)]
pub fn mte_by_outcome(data: &Dataset, fhat: &[f64], outcome: HoursOutcome, beta_terms: &[Term], lambda_terms: &[Term], basis: &SplineBasis, window: (f64, f64), grid: &[f64]) -> Result<MteCurve> {
    let y: Vec<f64> = data.hours.iter().map(|&h| outcome.indicator(h)).collect();
    if y.iter().all(|&v| v == 0.0) {
        return Err(MteError::DegenerateOutcome(format!("no rows in class {outcome:?}")));
    }
    second_stage_fit_outcome(data, &y, fhat, beta_terms, lambda_terms, basis, window)?.curve(grid, None)
}
