//! State-level block bootstrap of the full estimation pipeline.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::curve::MteCurve;
use crate::data::Dataset;
use crate::error::{MteError, Result};
use crate::estimation::{fit_pipeline_warm, EstimatorConfig, PipelineFit, SecondStageModel};
use crate::numeric::{percentile_sorted, Factorized};
use crate::rng::stream_rng;

/// Fewest converged replicates for which percentile bands are reported.
pub const MIN_BAND_REPLICATES: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    /// Start each replicate's probit at the full-sample estimate.
    pub warm_start: bool,
    /// Abort when more than this share of replicates fail.
    pub max_failure_share: f64,
    pub level: f64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions { replicates: 500, seed: 0, warm_start: true, max_failure_share: 0.2, level: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub index: usize,
    pub model: SecondStageModel,
    /// MTE on the bootstrap grid at the replicate's own covariate means.
    pub curve: Vec<f64>,
    pub homogeneous: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub requested: usize,
    pub level: f64,
    pub grid: Vec<f64>,
    /// Full-sample point estimate on `grid`.
    pub point: Vec<f64>,
    pub point_homogeneous: Option<f64>,
    pub point_g: Vec<f64>,
    /// Converged replicates in index order.
    pub replicates: Vec<Replicate>,
    pub failures: Vec<(usize, String)>,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    pub window: (f64, f64),
}

/// Draws `ids.len()` cluster ids with replacement.
pub fn draw_clusters<R: Rng>(ids: &[u64], rng: &mut R) -> Vec<u64> {
    (0..ids.len()).map(|_| ids[rng.random_range(0..ids.len())]).collect()
}

/// Stacks the rows of each drawn cluster. Repeated draws become distinct
/// clusters, labelled by draw position.
pub fn gather_clusters(data: &Dataset, draws: &[u64]) -> Dataset {
    let groups: BTreeMap<u64, Vec<usize>> = data.cluster_rows().into_iter().collect();
    let mut rows = vec![];
    let mut labels = vec![];
    for (pos, id) in draws.iter().enumerate() {
        if let Some(r) = groups.get(id) {
            rows.extend_from_slice(r);
            labels.extend(std::iter::repeat_n(pos as u64, r.len()));
        }
    }
    let mut out = data.select_rows(&rows);
    out.cluster_id = labels;
    out
}

pub fn resample_clusters<R: Rng>(data: &Dataset, rng: &mut R) -> Dataset {
    let draws = draw_clusters(&data.clusters(), rng);
    gather_clusters(data, &draws)
}

/// Runs `fit` once per replicate index on its own random stream, in
/// parallel, and applies the failure rule.
pub(crate) fn run_replicates<F>(opts: &BootstrapOptions, fit: F) -> Result<(Vec<Replicate>, Vec<(usize, String)>)>
where
    F: Fn(usize, &mut rand_chacha::ChaCha8Rng) -> Result<Replicate> + Sync,
{
    if opts.replicates == 0 {
        return Err(MteError::Config("bootstrap needs at least one replicate".into()));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(MteError::Config(format!("band level must lie in (0, 1), got {}", opts.level)));
    }
    let results: Vec<Result<Replicate>> = (0..opts.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(opts.seed, b as u64);
            fit(b, &mut rng)
        })
        .collect();
    let mut ok = vec![];
    let mut failures = vec![];
    for (b, r) in results.into_iter().enumerate() {
        match r {
            Ok(rep) => ok.push(rep),
            Err(e) => failures.push((b, e.to_string())),
        }
    }
    if failures.len() as f64 > opts.max_failure_share * opts.replicates as f64 {
        return Err(MteError::BootstrapFailed { failed: failures.len(), total: opts.replicates, first_reason: failures[0].1.clone() });
    }
    Ok((ok, failures))
}

fn replicate_from(index: usize, fit: &PipelineFit, grid: &[f64]) -> Result<Replicate> {
    Replicate::new(index, &fit.second, fit.homogeneous.as_ref().map(|h| h.effect), grid)
}

impl Replicate {
    pub fn new(index: usize, model: &SecondStageModel, homogeneous: Option<f64>, grid: &[f64]) -> Result<Replicate> {
        let curve = model.curve(grid, None)?.mte;
        Ok(Replicate { index, model: model.clone(), curve, homogeneous })
    }
}

/// Resamples states with replacement and reruns index construction, wage
/// equation, probit and hours equation on each replicate.
pub fn block_bootstrap(data: &Dataset, cfg: &EstimatorConfig, point: &PipelineFit, opts: &BootstrapOptions) -> Result<BootstrapResult> {
    let grid = cfg.grid();
    let start = point.first.coefficients();
    let (replicates, failures) = run_replicates(opts, |b, rng| {
        let sample = resample_clusters(data, rng);
        let fit = fit_pipeline_warm(&sample, cfg, opts.warm_start.then_some(start.as_slice()))?;
        replicate_from(b, &fit, &grid)
    })?;
    Ok(BootstrapResult::assemble(opts, grid, &point.second, point.homogeneous.as_ref().map(|h| h.effect), replicates, failures))
}

impl BootstrapResult {
    pub(crate) fn assemble(
        opts: &BootstrapOptions,
        grid: Vec<f64>,
        point: &SecondStageModel,
        point_homogeneous: Option<f64>,
        replicates: Vec<Replicate>,
        failures: Vec<(usize, String)>,
    ) -> BootstrapResult {
        let point_curve = point.curve(&grid, None).map(|c| c.mte).unwrap_or_default();
        let mut r = BootstrapResult {
            requested: opts.replicates,
            level: opts.level,
            grid,
            point: point_curve,
            point_homogeneous,
            point_g: point.g.clone(),
            replicates,
            failures,
            lo: None,
            hi: None,
            window: point.window,
        };
        if r.replicates.len() >= MIN_BAND_REPLICATES {
            let (lo, hi): (Vec<f64>, Vec<f64>) = (0..r.grid.len()).map(|j| r.percentile_band(r.replicates.iter().map(|x| x.curve[j]).collect())).unzip();
            r.lo = Some(lo);
            r.hi = Some(hi);
        }
        r
    }

    fn percentile_band(&self, mut values: Vec<f64>) -> (f64, f64) {
        values.sort_by(f64::total_cmp);
        let a = (1.0 - self.level) / 2.0;
        (percentile_sorted(&values, a), percentile_sorted(&values, 1.0 - a))
    }

    pub fn converged(&self) -> usize {
        self.replicates.len()
    }

    /// Point curve with bands attached (bands absent below the replicate
    /// minimum).
    pub fn curve(&self, x_at: Vec<(String, f64)>) -> MteCurve {
        MteCurve { grid: self.grid.clone(), mte: self.point.clone(), lo: self.lo.clone(), hi: self.hi.clone(), x_at, window: self.window }
    }

    /// Percentile band of the replicate MTEs at one point. `x_at` gives
    /// raw λ-term values; `None` uses each replicate's own means.
    pub fn band_at(&self, f: f64, x_at: Option<&[f64]>) -> Result<(f64, f64)> {
        if self.replicates.len() < MIN_BAND_REPLICATES {
            return Err(MteError::InvalidInput(format!("{} converged replicates; bands need at least {MIN_BAND_REPLICATES}", self.replicates.len())));
        }
        let v = self.replicates.iter().map(|r| r.model.mte_eval(f, x_at)).collect::<Result<Vec<_>>>()?;
        Ok(self.percentile_band(v))
    }

    /// Grid points whose point estimate lies outside its band.
    pub fn point_outside_share(&self) -> Option<f64> {
        let (lo, hi) = (self.lo.as_ref()?, self.hi.as_ref()?);
        let out = self.point.iter().zip(lo.iter().zip(hi)).filter(|(p, (l, h))| *p < *l || *p > *h).count();
        Some(out as f64 / self.point.len() as f64)
    }

    /// Bootstrap standard deviation of the constant-effect estimate.
    pub fn homogeneous_std_error(&self) -> Option<f64> {
        let v: Vec<f64> = self.replicates.iter().filter_map(|r| r.homogeneous).collect();
        (v.len() >= 2).then(|| crate::numeric::variance(&v).sqrt())
    }

    /// Wald test that the nonconstant spline terms g_2..g_J are zero, so
    /// that the MTE is flat in F, using the bootstrap covariance.
    pub fn homogeneity_test(&self) -> Result<WaldTest> {
        let k = self.point_g.len() - 1;
        if self.replicates.len() <= k {
            return Err(MteError::InvalidInput(format!("{} replicates cannot estimate a {k}x{k} covariance", self.replicates.len())));
        }
        let draws: Vec<&[f64]> = self.replicates.iter().map(|r| &r.model.g[1..]).collect();
        let m = draws.len() as f64;
        let mean: Vec<f64> = (0..k).map(|j| draws.iter().map(|d| d[j]).sum::<f64>() / m).collect();
        let mut cov = DMatrix::<f64>::zeros(k, k);
        for d in &draws {
            for a in 0..k {
                for b in 0..k {
                    cov[(a, b)] += (d[a] - mean[a]) * (d[b] - mean[b]) / (m - 1.0);
                }
            }
        }
        let names: Vec<String> = (2..=k + 1).map(|j| format!("g{j}")).collect();
        let fac = Factorized::new(&cov, &names, "bootstrap covariance of spline coefficients")?;
        let g = DVector::from_column_slice(&self.point_g[1..]);
        let statistic = g.dot(&fac.solve(&g));
        WaldTest::new(statistic, k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

impl WaldTest {
    pub fn new(statistic: f64, df: usize) -> Result<WaldTest> {
        let chi = ChiSquared::new(df as f64).map_err(|e| MteError::InvalidInput(e.to_string()))?;
        Ok(WaldTest { statistic, df, p_value: chi.sf(statistic) })
    }

    pub fn rejects(&self, size: f64) -> bool {
        self.p_value < size
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;

    fn data(clusters: &[u64]) -> Dataset {
        let n = clusters.len();
        Dataset {
            hours: (0..n).map(|i| i as f64).collect(),
            participates: vec![false; n],
            log_wage: vec![Some(2.0); n],
            cluster_id: clusters.to_vec(),
            columns: vec![Column { name: "age".into(), values: (0..n).map(|i| 10.0 * i as f64).collect() }],
        }
    }

    #[test]
    fn gather_keeps_whole_clusters_and_relabels_repeats() {
        let d = data(&[7, 7, 9]);
        let g = gather_clusters(&d, &[7, 7]);
        assert_eq!(g.hours, vec![0.0, 1.0, 0.0, 1.0]);
        assert_eq!(g.cluster_id, vec![0, 0, 1, 1]);
        assert_eq!(g.column("age").unwrap(), &[0.0, 10.0, 0.0, 10.0]);
    }

    #[test]
    fn singleton_clusters_give_row_bootstrap() {
        let d = data(&[1, 2, 3, 4, 5]);
        let mut rng = stream_rng(3, 0);
        let r = resample_clusters(&d, &mut rng);
        assert_eq!(r.n(), 5);
        assert!(r.hours.iter().all(|h| d.hours.contains(h)));
    }

    #[test]
    fn failure_share_aborts() {
        let opts = BootstrapOptions { replicates: 10, ..Default::default() };
        let r = run_replicates(&opts, |b, _| if b < 3 { Err(MteError::InvalidInput("x".into())) } else { unreachable_rep(b) });
        assert!(matches!(r, Err(MteError::BootstrapFailed { failed: 3, total: 10, .. })));
        let r = run_replicates(&opts, |b, _| if b < 2 { Err(MteError::InvalidInput("x".into())) } else { unreachable_rep(b) }).unwrap();
        assert_eq!((r.0.len(), r.1.len()), (8, 2));
        assert_eq!(r.1[1].0, 1);
    }

    pub(crate) fn flat_model(level: f64) -> SecondStageModel {
        SecondStageModel {
            beta_terms: vec![],
            lambda_terms: vec![],
            beta: vec![],
            lambda: vec![],
            g: vec![level, 0.0, 0.0],
            centering: vec![],
            basis: crate::estimation::SplineBasis::equally_spaced(3, (0.25, 0.66)).unwrap(),
            window: (0.25, 0.66),
            rss: 0.0,
            sigma2: 0.0,
            n: 0,
            std_errors: vec![],
        }
    }

    fn unreachable_rep(b: usize) -> Result<Replicate> {
        Ok(Replicate { index: b, model: flat_model(-8.0), curve: vec![-8.0], homogeneous: None })
    }

    #[test]
    fn constant_estimator_has_zero_width_bands() {
        let opts = BootstrapOptions { replicates: 60, ..Default::default() };
        let (reps, fails) = run_replicates(&opts, |b, _| unreachable_rep(b)).unwrap();
        let m = flat_model(-8.0);
        let band = BootstrapResult {
            requested: 60,
            level: 0.95,
            grid: vec![0.4],
            point: vec![-8.0],
            point_homogeneous: None,
            point_g: m.g.clone(),
            replicates: reps,
            failures: fails,
            lo: None,
            hi: None,
            window: m.window,
        };
        assert_eq!(band.band_at(0.5, None).unwrap(), (-8.0, -8.0));
        assert!(band.band_at(0.7, None).is_err());
    }

    #[test]
    fn wald_p_value() {
        let w = WaldTest::new(3.841458820694124, 1).unwrap();
        assert!((w.p_value - 0.05).abs() < 1e-9);
        assert!(!w.rejects(0.05 - 1e-6) && w.rejects(0.05 + 1e-6));
    }
}
