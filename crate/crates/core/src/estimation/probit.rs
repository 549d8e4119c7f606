//! Probit first stage fitted by Newton–Raphson.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::terms::{design, Term};
use crate::data::Dataset;
use crate::error::{MteError, Result};
use crate::numeric::{inverse_mills, norm_cdf, norm_pdf, Factorized};

/// Predictions are kept strictly inside (0, 1).
pub const PREDICTION_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbitOptions {
    pub max_iter: usize,
    /// Convergence threshold on the gradient max-norm.
    pub tol: f64,
    /// Coefficient norm treated as divergence.
    pub divergence: f64,
}

impl Default for ProbitOptions {
    fn default() -> Self {
        ProbitOptions { max_iter: 100, tol: 1e-8, divergence: 1e4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStageModel {
    pub x_terms: Vec<Term>,
    pub z_terms: Vec<Term>,
    pub eta: Vec<f64>,
    pub delta: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Asymptotic standard errors from the inverse information matrix.
    pub std_errors: Vec<f64>,
    /// Means of the X and Z regressors on the estimation sample.
    pub x_means: Vec<f64>,
    pub z_means: Vec<f64>,
    pub n: usize,
}

impl FirstStageModel {
    pub fn coefficients(&self) -> Vec<f64> {
        self.eta.iter().chain(&self.delta).copied().collect()
    }

    pub fn term_names(&self) -> Vec<String> {
        self.x_terms.iter().chain(&self.z_terms).map(|t| t.to_string()).collect()
    }
}

/// Raw probit estimate on a prepared design.
#[derive(Debug, Clone)]
pub struct ProbitFit {
    pub coef: DVector<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub gradient: DVector<f64>,
    /// Negative Hessian at the optimum.
    pub information: DMatrix<f64>,
}

/// (ln Φ(x), ϕ(x)/Φ(x)) with one CDF evaluation.
fn log_cdf_and_mills(x: f64) -> (f64, f64) {
    if x > -30.0 {
        let c = norm_cdf(x);
        (c.ln(), norm_pdf(x) / c)
    } else {
        let u = 1.0 / (x * x);
        let lc = -0.5 * x * x - (-x).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + (1.0 - u + 3.0 * u * u).ln();
        (lc, inverse_mills(x))
    }
}

struct Eval {
    ll: f64,
    grad: DVector<f64>,
    info: DMatrix<f64>,
}

fn evaluate(x: &DMatrix<f64>, s: &[f64], beta: &DVector<f64>, with_info: bool) -> Eval {
    let q = x * beta;
    let n = x.nrows();
    let mut ll = 0.0;
    let mut score = DVector::<f64>::zeros(n);
    let mut wsqrt = DVector::<f64>::zeros(n);
    for i in 0..n {
        let sq = s[i] * q[i];
        let (lc, m) = log_cdf_and_mills(sq);
        ll += lc;
        score[i] = s[i] * m;
        wsqrt[i] = (m * (m + sq)).max(0.0).sqrt();
    }
    let grad = x.tr_mul(&score);
    let info = if with_info {
        let mut xw = x.clone();
        for mut col in xw.column_iter_mut() {
            col.component_mul_assign(&wsqrt);
        }
        xw.tr_mul(&xw)
    } else {
        DMatrix::zeros(0, 0)
    };
    Eval { ll, grad, info }
}

/// Newton–Raphson with step halving. `y` holds 0/1 outcomes.
/// Index margin at which a fitted probability is treated as 0 or 1.
const SEPARATION_MARGIN: f64 = 5.0;

pub fn probit_newton(x: &DMatrix<f64>, y: &[f64], names: &[String], start: Option<&[f64]>, opts: &ProbitOptions) -> Result<ProbitFit> {
    let k = x.ncols();
    if x.nrows() != y.len() || x.nrows() == 0 {
        return Err(MteError::InvalidInput("probit design and outcome lengths differ".into()));
    }
    let s: Vec<f64> = y.iter().map(|&v| if v > 0.5 { 1.0 } else { -1.0 }).collect();
    let mut beta = match start {
        Some(b) if b.len() == k && b.iter().all(|v| v.is_finite()) => DVector::from_column_slice(b),
        _ => DVector::zeros(k),
    };
    let mut cur = evaluate(x, &s, &beta, true);
    // A fresh start must pass the rank check before anything else.
    let mut factor = Factorized::new(&cur.info, names, "probit")?;
    for iter in 0..=opts.max_iter {
        let gmax = cur.grad.amax();
        if gmax < opts.tol {
            // Every row predicted with near certainty: complete separation.
            let xb = x * &beta;
            if xb.iter().zip(&s).all(|(v, si)| v * si > SEPARATION_MARGIN) {
                return Err(MteError::Separation { norm: beta.norm() });
            }
            return Ok(ProbitFit { coef: beta, log_likelihood: cur.ll, iterations: iter, gradient: cur.grad, information: cur.info });
        }
        if iter == opts.max_iter {
            return Err(MteError::NotConverged { iterations: iter, gradient: gmax });
        }
        let step = factor.solve(&cur.grad);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = &beta + &step * t;
            let e = evaluate(x, &s, &cand, false);
            if e.ll.is_finite() && e.ll >= cur.ll - 1e-12 * cur.ll.abs().max(1.0) {
                accepted = Some(cand);
                break;
            }
            t *= 0.5;
        }
        let Some(next) = accepted else {
            return Err(MteError::NotConverged { iterations: iter, gradient: gmax });
        };
        beta = next;
        let norm = beta.norm();
        if !(norm <= opts.divergence) {
            return Err(MteError::Separation { norm });
        }
        cur = evaluate(x, &s, &beta, true);
        factor = match Factorized::new(&cur.info, names, "probit") {
            Ok(f) => f,
            // Vanishing curvature away from the start means fitted
            // probabilities are collapsing to 0 or 1.
            Err(_) => return Err(MteError::Separation { norm }),
        };
    }
    unreachable!()
}

fn probit_design(data: &Dataset, x_terms: &[Term], z_terms: &[Term]) -> Result<(DMatrix<f64>, Vec<String>)> {
    let all: Vec<Term> = x_terms.iter().chain(z_terms).cloned().collect();
    design(data, &all)
}

pub fn probit_fit(data: &Dataset, x_terms: &[Term], z_terms: &[Term]) -> Result<FirstStageModel> {
    probit_fit_with(data, x_terms, z_terms, None, &ProbitOptions::default())
}

/// Fits P(participates) = Φ(Xη + Zδ). `start` warm-starts Newton.
pub fn probit_fit_with(data: &Dataset, x_terms: &[Term], z_terms: &[Term], start: Option<&[f64]>, opts: &ProbitOptions) -> Result<FirstStageModel> {
    if z_terms.is_empty() {
        return Err(MteError::Config("first stage needs at least one instrument term".into()));
    }
    let (x, names) = probit_design(data, x_terms, z_terms)?;
    let y = data.participation();
    let fit = probit_newton(&x, &y, &names, start, opts)?;
    let k = x_terms.len();
    let cov = Factorized::new(&fit.information, &names, "probit")?.inverse();
    let means: Vec<f64> = (0..x.ncols()).map(|j| x.column(j).mean()).collect();
    Ok(FirstStageModel {
        x_terms: x_terms.to_vec(),
        z_terms: z_terms.to_vec(),
        eta: fit.coef.iter().take(k).copied().collect(),
        delta: fit.coef.iter().skip(k).copied().collect(),
        log_likelihood: fit.log_likelihood,
        iterations: fit.iterations,
        gradient_norm: fit.gradient.amax(),
        std_errors: (0..x.ncols()).map(|j| cov[(j, j)].sqrt()).collect(),
        x_means: means[..k].to_vec(),
        z_means: means[k..].to_vec(),
        n: data.n(),
    })
}

/// Linear index Xη + Zδ.
pub fn probit_index(model: &FirstStageModel, data: &Dataset) -> Result<Vec<f64>> {
    let (x, _) = probit_design(data, &model.x_terms, &model.z_terms)?;
    let b = DVector::from_vec(model.coefficients());
    Ok((x * b).iter().copied().collect())
}

/// F̂ = Φ(index) clamped to [1e-6, 1 − 1e-6].
pub fn probit_predict(model: &FirstStageModel, data: &Dataset) -> Result<Vec<f64>> {
    Ok(probit_index(model, data)?.into_iter().map(clamped_cdf).collect())
}

pub fn clamped_cdf(index: f64) -> f64 {
    norm_cdf(index).clamp(PREDICTION_CLAMP, 1.0 - PREDICTION_CLAMP)
}
