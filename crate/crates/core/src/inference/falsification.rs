//! Placebo run: eligible-sample probit applied to a sample that cannot
//! participate.

use super::bootstrap::{draw_clusters, gather_clusters, run_replicates, BootstrapOptions, BootstrapResult, Replicate};
use crate::curve::MteCurve;
use crate::data::Dataset;
use crate::error::{MteError, Result};
use crate::estimation::{
    prepare_data, prepare_data_with, probit_fit_with, probit_predict, second_stage_fit, EstimatorConfig, FirstStageModel, ProbitOptions, SecondStageModel,
};

#[derive(Debug, Clone)]
pub struct FalsificationFit {
    /// Probit estimated on the eligible sample.
    pub first: FirstStageModel,
    /// Predicted participation for the ineligible rows.
    pub fhat: Vec<f64>,
    pub second: SecondStageModel,
    pub curve: MteCurve,
}

pub fn falsification_run(eligible: &Dataset, ineligible: &Dataset, cfg: &EstimatorConfig) -> Result<FalsificationFit> {
    falsification_warm(eligible, ineligible, cfg, None)
}

fn falsification_warm(eligible: &Dataset, ineligible: &Dataset, cfg: &EstimatorConfig, start: Option<&[f64]>) -> Result<FalsificationFit> {
    cfg.validate()?;
    if ineligible.n() == 0 {
        return Err(MteError::InvalidInput("ineligible sample is empty".into()));
    }
    let missing = eligible.missing_schema_columns(ineligible);
    if !missing.is_empty() {
        return Err(MteError::Schema(format!("ineligible sample lacks columns {missing:?}")));
    }
    let pe = prepare_data(eligible, cfg)?;
    let first = probit_fit_with(&pe.data, &cfg.probit_x, &cfg.probit_z, start, &ProbitOptions::default()).map_err(|e| e.in_stage("first stage", eligible.n()))?;
    // The ineligible sample keeps its own wage equation but the eligible
    // sample's index weights.
    let pi = prepare_data_with(ineligible, cfg, pe.index.as_ref().map(|i| i.weights.as_slice()))?;
    let fhat = probit_predict(&first, &pi.data)?;
    let second =
        second_stage_fit(&pi.data, &fhat, &cfg.beta_terms, &cfg.lambda_terms, &cfg.basis()?, cfg.window).map_err(|e| e.in_stage("second stage", ineligible.n()))?;
    let curve = second.curve(&cfg.grid(), None)?;
    Ok(FalsificationFit { first, fhat, second, curve })
}

/// Bootstrap of the placebo curve. States are drawn once per replicate
/// and applied to both samples.
pub fn falsification_bootstrap(eligible: &Dataset, ineligible: &Dataset, cfg: &EstimatorConfig, point: &FalsificationFit, opts: &BootstrapOptions) -> Result<BootstrapResult> {
    let mut ids: Vec<u64> = eligible.cluster_id.iter().chain(&ineligible.cluster_id).copied().collect();
    ids.sort_unstable();
    ids.dedup();
    let grid = cfg.grid();
    let start = point.first.coefficients();
    let (replicates, failures) = run_replicates(opts, |b, rng: &mut rand_chacha::ChaCha8Rng| {
        let draws = draw_clusters(&ids, rng);
        let e = gather_clusters(eligible, &draws);
        let i = gather_clusters(ineligible, &draws);
        let fit = falsification_warm(&e, &i, cfg, opts.warm_start.then_some(start.as_slice()))?;
        Replicate::new(b, &fit.second, None, &grid)
    })?;
    Ok(BootstrapResult::assemble(opts, grid, &point.second, None, replicates, failures))
}
