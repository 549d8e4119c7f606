use serde::{Deserialize, Serialize};

/// Marginal response as a function of the participation probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MteCurve {
    pub grid: Vec<f64>,
    pub mte: Vec<f64>,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    /// Covariate values (name, value) the curve is evaluated at.
    pub x_at: Vec<(String, f64)>,
    pub window: (f64, f64),
}

impl MteCurve {
    pub fn range(&self) -> f64 {
        let max = self.mte.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = self.mte.iter().cloned().fold(f64::INFINITY, f64::min);
        max - min
    }

    /// Linear interpolation of the point estimate.
    pub fn interpolate(&self, p: f64) -> Option<f64> {
        interpolate(&self.grid, &self.mte, p)
    }
}

/// Evenly spaced grid of `points` values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![lo];
    }
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
}

pub fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    if xs.is_empty() || x < xs[0] || x > xs[xs.len() - 1] {
        return None;
    }
    let k = xs.partition_point(|&v| v <= x).min(xs.len() - 1).max(1);
    let (x0, x1) = (xs[k - 1], xs[k]);
    if x1 == x0 {
        return Some(ys[k]);
    }
    Some(ys[k - 1] + (ys[k] - ys[k - 1]) * (x - x0) / (x1 - x0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [0.0, 10.0, 0.0];
        assert_eq!(interpolate(&xs, &ys, 0.5), Some(5.0));
        assert_eq!(interpolate(&xs, &ys, 2.0), Some(0.0));
        assert_eq!(interpolate(&xs, &ys, 0.0), Some(0.0));
        assert_eq!(interpolate(&xs, &ys, 2.1), None);
        let g = linspace(0.25, 0.65, 5);
        for (a, b) in g.iter().zip([0.25, 0.35, 0.45, 0.55, 0.65]) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
