//! Two-stage local instrumental variables estimator.

mod index;
mod pipeline;
mod probit;
mod second_stage;
mod spline;
mod terms;
mod wage;

pub use index::{apply_index_weights, instrument_index, IndexWeighting, InstrumentIndex};
pub use pipeline::{fit_pipeline, fit_pipeline_warm, prepare_data, prepare_data_with, EstimatorConfig, PipelineFit, Prepared, INDEX_COLUMN};
pub use probit::{clamped_cdf, probit_fit, probit_fit_with, probit_index, probit_newton, probit_predict, FirstStageModel, ProbitFit, ProbitOptions, PREDICTION_CLAMP};
pub use second_stage::{
    homogeneous_iv_fit, mte_by_outcome, mte_eval, second_stage_fit, second_stage_fit_outcome, HomogeneousIv, HoursOutcome, SecondStageModel, FULL_TIME_HOURS,
};
pub use spline::{natural_spline_basis, SplineBasis, MAX_KNOTS, MIN_KNOTS};
pub use terms::{design, terms, Term};
pub use wage::{impute_wages, wage_fit, WageMode, WageModel, MIN_WORKERS};
