//! Full estimation pass: barrier index, wage imputation, probit, hours
//! equation and the MTE curve on a fixed grid.

use serde::{Deserialize, Serialize};

use super::index::{apply_index_weights, instrument_index, IndexWeighting, InstrumentIndex};
use super::probit::{probit_fit_with, probit_predict, FirstStageModel, ProbitOptions};
use super::second_stage::{check_window, homogeneous_iv_fit, second_stage_fit, HomogeneousIv, SecondStageModel};
use super::spline::SplineBasis;
use super::terms::{terms, Term};
use super::wage::{impute_wages, wage_fit, WageMode, WageModel};
use crate::curve::{linspace, MteCurve};
use crate::data::Dataset;
use crate::error::{MteError, Result};

/// Name of the derived barrier-index column.
pub const INDEX_COLUMN: &str = "zindex";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub knots: usize,
    /// Candidates for generalized cross-validation.
    pub knot_candidates: Vec<usize>,
    pub window: (f64, f64),
    pub grid_points: usize,
    /// Barrier columns combined into `zindex`; empty means every z column.
    pub barrier_columns: Vec<String>,
    pub index_weighting: IndexWeighting,
    pub probit_x: Vec<Term>,
    pub probit_z: Vec<Term>,
    pub beta_terms: Vec<Term>,
    pub lambda_terms: Vec<Term>,
    /// Fit a wage equation and impute missing wages.
    pub impute_wages: bool,
    pub wage_mode: WageMode,
    pub wage_terms: Vec<Term>,
    pub selection_terms: Vec<Term>,
    pub homogeneous_iv: bool,
    pub bootstrap: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            knots: 5,
            knot_candidates: vec![3, 4, 5, 6],
            window: (0.25, 0.66),
            grid_points: 42,
            barrier_columns: vec![],
            index_weighting: IndexWeighting::InverseVariance,
            probit_x: terms(&[
                "1", "log_w", "log_net_wage", "log_g", "log_n10", "age", "black", "family_size", "kids_under6", "unemp_rate", "region1", "region2", "region3",
                "fs_guarantee",
            ]),
            probit_z: terms(&["zindex", "zindex:log_n10", "zindex:log_g", "zindex:log_net_wage"]),
            beta_terms: terms(&[
                "1", "log_w", "log_n10", "age", "black", "family_size", "kids_under6", "unemp_rate", "region1", "region2", "region3", "fs_guarantee",
            ]),
            lambda_terms: terms(&["log_net_wage", "log_g", "log_n10"]),
            impute_wages: true,
            wage_mode: WageMode::Ols,
            wage_terms: terms(&["1", "age", "age2", "black", "unemp_rate", "region1", "region2", "region3"]),
            selection_terms: terms(&[
                "1", "age", "age2", "black", "unemp_rate", "region1", "region2", "region3", "family_size", "kids_under6", "log_n10", "log_g",
            ]),
            homogeneous_iv: true,
            bootstrap: 500,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        check_window(self.window)?;
        SplineBasis::equally_spaced(self.knots, self.window)?;
        if self.grid_points < 2 {
            return Err(MteError::Config("grid_points must be >= 2".into()));
        }
        if self.probit_z.is_empty() {
            return Err(MteError::Config("probit_z must list at least one instrument term".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        linspace(self.window.0, self.window.1, self.grid_points)
    }

    pub fn basis(&self) -> Result<SplineBasis> {
        SplineBasis::equally_spaced(self.knots, self.window)
    }

    fn uses_index(&self) -> bool {
        self.probit_x.iter().chain(&self.probit_z).any(|t| t.factors().iter().any(|f| f == INDEX_COLUMN))
    }
}

/// Data after index construction and wage imputation.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub data: Dataset,
    pub wage: Option<WageModel>,
    pub index: Option<InstrumentIndex>,
    pub index_columns: Vec<String>,
}

pub fn prepare_data(data: &Dataset, cfg: &EstimatorConfig) -> Result<Prepared> {
    prepare_data_with(data, cfg, None)
}

/// As `prepare_data`; with `index_weights` the barrier index reuses
/// weights estimated on another sample.
pub fn prepare_data_with(data: &Dataset, cfg: &EstimatorConfig, index_weights: Option<&[f64]>) -> Result<Prepared> {
    let n = data.n();
    let mut out = data.clone();
    let mut index_columns = vec![];
    let index = if cfg.uses_index() {
        index_columns = if cfg.barrier_columns.is_empty() { data.instrument_names() } else { cfg.barrier_columns.clone() };
        let cols = index_columns.iter().map(|c| data.column(c).map(|v| (c.as_str(), v))).collect::<Result<Vec<_>>>()?;
        let idx = match index_weights {
            Some(w) => InstrumentIndex { values: apply_index_weights(&cols, w)?, weights: w.to_vec() },
            None => instrument_index(&cols, Some(&data.cluster_id), cfg.index_weighting).map_err(|e| e.in_stage("instrument index", n))?,
        };
        out.set_column(INDEX_COLUMN, idx.values.clone());
        Some(idx)
    } else {
        None
    };
    let wage = if cfg.impute_wages {
        let w = wage_fit(&out, cfg.wage_mode, &cfg.wage_terms, &cfg.selection_terms).map_err(|e| e.in_stage("wage equation", n))?;
        out = impute_wages(&out, &w)?;
        Some(w)
    } else {
        None
    };
    Ok(Prepared { data: out, wage, index, index_columns })
}

#[derive(Debug, Clone)]
pub struct PipelineFit {
    pub prepared: Prepared,
    pub first: FirstStageModel,
    pub fhat: Vec<f64>,
    pub second: SecondStageModel,
    pub curve: MteCurve,
    pub homogeneous: Option<HomogeneousIv>,
}

pub fn fit_pipeline(data: &Dataset, cfg: &EstimatorConfig) -> Result<PipelineFit> {
    fit_pipeline_warm(data, cfg, None)
}

/// As `fit_pipeline`, with the probit started at `start` when given.
pub fn fit_pipeline_warm(data: &Dataset, cfg: &EstimatorConfig, start: Option<&[f64]>) -> Result<PipelineFit> {
    cfg.validate()?;
    data.validate()?;
    let n = data.n();
    let prepared = prepare_data(data, cfg)?;
    let d = &prepared.data;
    let first = probit_fit_with(d, &cfg.probit_x, &cfg.probit_z, start, &ProbitOptions::default()).map_err(|e| e.in_stage("first stage", n))?;
    let fhat = probit_predict(&first, d)?;
    let basis = cfg.basis()?;
    let second = second_stage_fit(d, &fhat, &cfg.beta_terms, &cfg.lambda_terms, &basis, cfg.window).map_err(|e| e.in_stage("second stage", n))?;
    let curve = second.curve(&cfg.grid(), None)?;
    let homogeneous = if cfg.homogeneous_iv {
        Some(homogeneous_iv_fit(d, &fhat, &cfg.beta_terms).map_err(|e| e.in_stage("homogeneous IV", n))?)
    } else {
        None
    };
    Ok(PipelineFit { prepared, first, fhat, second, curve, homogeneous })
}
