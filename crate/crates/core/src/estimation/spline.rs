//! Natural cubic spline basis [1, F, S_3, ..., S_J] with knots π_1 < ... < π_J.
//!
//! d_k(F) = [(F−π_k)₊³ − (F−π_J)₊³] / (π_J − π_k),  S_{k+2} = d_k − d_{J−1}.
//! Every basis function is linear below π_1 and above π_J.

use serde::{Deserialize, Serialize};

use crate::error::{MteError, Result};

pub const MIN_KNOTS: usize = 3;
pub const MAX_KNOTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    knots: Vec<f64>,
}

impl SplineBasis {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        let j = knots.len();
        if !(MIN_KNOTS..=MAX_KNOTS).contains(&j) {
            return Err(MteError::Config(format!("spline needs {MIN_KNOTS}..={MAX_KNOTS} knots, got {j}")));
        }
        if knots.iter().any(|k| !(*k > 0.0 && *k < 1.0)) || knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MteError::Config(format!("knots must be strictly increasing inside (0, 1): {knots:?}")));
        }
        Ok(SplineBasis { knots })
    }

    /// J knots equally spaced from the window's lower to upper bound.
    pub fn equally_spaced(j: usize, window: (f64, f64)) -> Result<Self> {
        if j < 2 {
            return Err(MteError::Config(format!("spline needs {MIN_KNOTS}..={MAX_KNOTS} knots, got {j}")));
        }
        let (lo, hi) = window;
        SplineBasis::new((0..j).map(|i| lo + (hi - lo) * i as f64 / (j - 1) as f64).collect())
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions, equal to the knot count.
    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn names(&self) -> Vec<String> {
        let mut v = vec!["1".to_string(), "F".to_string()];
        v.extend((3..=self.len()).map(|k| format!("S{k}")));
        v
    }

    /// Values, first and second derivatives of every basis function.
    pub fn eval_all(&self, f: f64, values: &mut [f64], d1: &mut [f64], d2: &mut [f64]) {
        let j = self.len();
        let pj = self.knots[j - 1];
        let tail = |f: f64, p: f64| {
            let x = (f - p).max(0.0);
            (x * x * x, 3.0 * x * x, 6.0 * x)
        };
        let last = tail(f, pj);
        let d = |k: usize| {
            let t = tail(f, self.knots[k]);
            let den = pj - self.knots[k];
            ((t.0 - last.0) / den, (t.1 - last.1) / den, (t.2 - last.2) / den)
        };
        values[0] = 1.0;
        d1[0] = 0.0;
        d2[0] = 0.0;
        values[1] = f;
        d1[1] = 1.0;
        d2[1] = 0.0;
        let dl = d(j - 2);
        for k in 0..j - 2 {
            let dk = d(k);
            values[k + 2] = dk.0 - dl.0;
            d1[k + 2] = dk.1 - dl.1;
            d2[k + 2] = dk.2 - dl.2;
        }
    }

    /// Values and first derivatives.
    pub fn eval(&self, f: f64) -> (Vec<f64>, Vec<f64>) {
        let j = self.len();
        let (mut v, mut d1, mut d2) = (vec![0.0; j], vec![0.0; j], vec![0.0; j]);
        self.eval_all(f, &mut v, &mut d1, &mut d2);
        (v, d1)
    }
}

/// Basis values and first derivatives at F ∈ [0, 1].
pub fn natural_spline_basis(basis: &SplineBasis, f: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(0.0..=1.0).contains(&f) {
        return Err(MteError::OutOfSupport { value: f, lo: 0.0, hi: 1.0 });
    }
    Ok(basis.eval(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(j: usize) -> SplineBasis {
        SplineBasis::equally_spaced(j, (0.25, 0.66)).unwrap()
    }

    #[test]
    fn below_first_knot_only_linear_part() {
        let b = basis(5);
        let (v, d) = natural_spline_basis(&b, 0.1).unwrap();
        assert_eq!(v, vec![1.0, 0.1, 0.0, 0.0, 0.0]);
        assert_eq!(d, vec![0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn last_knot_values() {
        // With cubed truncations d_k(π_J) = (π_J − π_k)², so S_{k+2}(π_J) =
        // (π_J − π_k)² − (π_J − π_{J−1})².
        let b = basis(5);
        let k = b.knots().to_vec();
        let (v, _) = b.eval(k[4]);
        for i in 0..3 {
            let expect = (k[4] - k[i]).powi(2) - (k[4] - k[3]).powi(2);
            assert!((v[i + 2] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for j in MIN_KNOTS..=MAX_KNOTS {
            let b = basis(j);
            for &f in &[0.05, 0.3, 0.41, 0.5, 0.63, 0.9] {
                let (v0, d0) = b.eval(f);
                let h = 1e-6;
                let (vp, _) = b.eval(f + h);
                let (vm, _) = b.eval(f - h);
                for i in 0..j {
                    let fd = (vp[i] - vm[i]) / (2.0 * h);
                    assert!((fd - d0[i]).abs() < 1e-7, "J={j} F={f} i={i}");
                    assert!(v0[i].is_finite());
                }
            }
        }
    }

    #[test]
    fn rejects_bad_configurations() {
        assert!(SplineBasis::equally_spaced(2, (0.25, 0.66)).is_err());
        assert!(SplineBasis::equally_spaced(9, (0.25, 0.66)).is_err());
        assert!(SplineBasis::new(vec![0.3, 0.2, 0.5]).is_err());
        assert!(natural_spline_basis(&basis(4), 1.2).is_err());
    }
}
