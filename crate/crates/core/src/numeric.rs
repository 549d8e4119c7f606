//! Normal-distribution helpers, least squares with rank diagnostics, and
//! small summary statistics shared across modules.

use nalgebra::{DMatrix, DVector};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{MteError, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Squared relative residual below which a column counts as collinear.
const COLLINEAR_TOL: f64 = 1e-10;

pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Inverse Mills ratio ϕ(x)/Φ(x), stable for very negative x.
pub fn inverse_mills(x: f64) -> f64 {
    if x > -30.0 {
        let cdf = norm_cdf(x);
        if cdf > 0.0 {
            return norm_pdf(x) / cdf;
        }
    }
    // Asymptotic expansion for the far left tail.
    let u = 1.0 / (x * x);
    -x / (1.0 - u + 3.0 * u * u - 15.0 * u * u * u)
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance with n−1 denominator.
pub fn variance(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Percentile of an already sorted slice by linear interpolation between
/// order statistics (the usual "type 7" rule).
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n == 1 {
        return sorted[0];
    }
    let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile_sorted(&v, q)
}

/// Cholesky factor of a symmetric positive definite matrix after
/// diagonal equilibration. Columns whose squared relative pivot falls
/// below tolerance are reported by name.
pub struct Factorized {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    scale: DVector<f64>,
}

impl Factorized {
    pub fn new(a: &DMatrix<f64>, names: &[String], block: &str) -> Result<Self> {
        let k = a.nrows();
        let scale = DVector::from_iterator(
            k,
            (0..k).map(|j| {
                let d = a[(j, j)];
                if d > 0.0 && d.is_finite() {
                    1.0 / d.sqrt()
                } else {
                    0.0
                }
            }),
        );
        let mut s = a.clone();
        for i in 0..k {
            for j in 0..k {
                s[(i, j)] *= scale[i] * scale[j];
            }
        }
        let bad = pivot_check(&s, &scale);
        if !bad.is_empty() {
            return Err(MteError::RankDeficient {
                block: block.to_string(),
                columns: bad
                    .into_iter()
                    .map(|j| names.get(j).cloned().unwrap_or_else(|| format!("col{j}")))
                    .collect(),
            });
        }
        let chol = nalgebra::Cholesky::new(s).ok_or_else(|| MteError::RankDeficient {
            block: block.to_string(),
            columns: names.to_vec(),
        })?;
        Ok(Factorized { chol, scale })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let sb = b.component_mul(&self.scale);
        self.chol.solve(&sb).component_mul(&self.scale)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let mut inv = self.chol.inverse();
        let k = inv.nrows();
        for i in 0..k {
            for j in 0..k {
                inv[(i, j)] *= self.scale[i] * self.scale[j];
            }
        }
        inv
    }
}

/// Sequential Cholesky on an equilibrated matrix; returns the indices of
/// columns that are (numerically) linear combinations of earlier ones.
fn pivot_check(s: &DMatrix<f64>, scale: &DVector<f64>) -> Vec<usize> {
    let k = s.nrows();
    let mut l = DMatrix::<f64>::zeros(k, k);
    let mut kept: Vec<usize> = Vec::new();
    let mut bad = Vec::new();
    for j in 0..k {
        if scale[j] == 0.0 {
            bad.push(j);
            continue;
        }
        let mut d = s[(j, j)];
        for &p in &kept {
            d -= l[(j, p)] * l[(j, p)];
        }
        if !(d > COLLINEAR_TOL) {
            bad.push(j);
            continue;
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in (j + 1)..k {
            let mut v = s[(i, j)];
            for &p in &kept {
                v -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = v / dj;
        }
        kept.push(j);
    }
    bad
}

/// Ordinary least squares result.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coef: DVector<f64>,
    pub residuals: DVector<f64>,
    pub rss: f64,
    /// (X'X)⁻¹
    pub xtx_inv: DMatrix<f64>,
}

pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String], block: &str) -> Result<OlsFit> {
    if x.nrows() < x.ncols() {
        return Err(MteError::RankDeficient {
            block: block.to_string(),
            columns: names.to_vec(),
        });
    }
    let xtx = x.tr_mul(x);
    let xty = x.tr_mul(y);
    let f = Factorized::new(&xtx, names, block)?;
    let coef = f.solve(&xty);
    let residuals = y - x * &coef;
    let rss = residuals.norm_squared();
    Ok(OlsFit {
        coef,
        residuals,
        rss,
        xtx_inv: f.inverse(),
    })
}

/// Cluster-robust (CR1) covariance of OLS coefficients.
pub fn cluster_robust_cov(x: &DMatrix<f64>, fit: &OlsFit, clusters: &[u64]) -> DMatrix<f64> {
    let k = x.ncols();
    let n = x.nrows();
    let mut groups: std::collections::BTreeMap<u64, DVector<f64>> = Default::default();
    for i in 0..n {
        let s = groups.entry(clusters[i]).or_insert_with(|| DVector::zeros(k));
        let e = fit.residuals[i];
        for j in 0..k {
            s[j] += x[(i, j)] * e;
        }
    }
    let mut meat = DMatrix::<f64>::zeros(k, k);
    for s in groups.values() {
        meat += s * s.transpose();
    }
    let g = groups.len() as f64;
    let adj = if g > 1.0 && n > k {
        (g / (g - 1.0)) * ((n as f64 - 1.0) / (n - k) as f64)
    } else {
        1.0
    };
    &fit.xtx_inv * meat * &fit.xtx_inv * adj
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normal_table_values() {
        assert_abs_diff_eq!(norm_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(norm_cdf(1.96), 0.975, epsilon = 1e-4);
        assert_abs_diff_eq!(norm_quantile(0.37), -0.331_853_9, epsilon = 1e-6);
        assert_abs_diff_eq!(inverse_mills(0.0), 0.797_884_56, epsilon = 1e-8);
    }

    #[test]
    fn mills_tail_is_continuous() {
        let a = inverse_mills(-29.999);
        let b = inverse_mills(-30.001);
        assert!((a - b).abs() < 1e-2);
        assert!(inverse_mills(-40.0) > 39.0);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-10, 0.01, 0.3, 0.5, 0.9, 0.999999] {
            assert_abs_diff_eq!(norm_cdf(norm_quantile(p)), p, epsilon = 1e-12 + 1e-9 * p);
        }
    }

    #[test]
    fn ols_flags_duplicate_column() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 1.0, 2.0, 1.0, 2.0, 4.0, 1.0, 3.0, 6.0, 1.0, 4.0, 8.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        match ols(&x, &y, &names, "test") {
            Err(MteError::RankDeficient { columns, .. }) => assert_eq!(columns, vec!["c".to_string()]),
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(percentile(&v, 0.5), 2.5);
        assert_abs_diff_eq!(percentile(&v, 0.0), 1.0);
        assert_abs_diff_eq!(percentile(&v, 1.0), 4.0);
    }
}
