//! Reform scenarios: participation-rate decomposition and the marginal
//! hours response at each scenario's participation rate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{MteError, Result};
use crate::estimation::{apply_index_weights, design, impute_wages, probit_predict, FirstStageModel, PipelineFit, SecondStageModel, INDEX_COLUMN};
use crate::inference::BootstrapResult;
use crate::numeric::mean;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReformScenario {
    pub label: String,
    /// Guarantee level applied to every row.
    #[serde(default)]
    pub guarantee: Option<f64>,
    #[serde(default)]
    pub tax_t: Option<f64>,
    /// Column means to impose by an additive shift of the base sample.
    #[serde(default)]
    pub mean_overrides: BTreeMap<String, f64>,
    /// Replacement covariate sample, already carrying derived columns.
    /// Its program columns are taken as the base program.
    #[serde(skip)]
    pub sample: Option<Dataset>,
    pub p_target: f64,
}

impl ReformScenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_target > 0.0 && self.p_target < 1.0) {
            return Err(MteError::Config(format!("scenario `{}`: p_target must lie in (0, 1)", self.label)));
        }
        if let Some(g) = self.guarantee {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(MteError::Config(format!("scenario `{}`: guarantee must be non-negative", self.label)));
            }
        }
        if let Some(t) = self.tax_t {
            if !(t > 0.0 && t <= 1.0) {
                return Err(MteError::Config(format!("scenario `{}`: tax_t must lie in (0, 1]", self.label)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AttributionOrder {
    #[default]
    DemographicsFirst,
    ProgramFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub label: String,
    pub base: f64,
    pub demographics: f64,
    pub program: f64,
    pub residual: f64,
    pub p_target: f64,
}

impl Decomposition {
    /// Sum of the three components, in that order.
    pub fn total(&self) -> f64 {
        self.demographics + self.program + self.residual
    }
}

/// Scenario demographics with base program columns.
pub fn scenario_demographics(base: &Dataset, scenario: &ReformScenario) -> Result<Dataset> {
    let mut out = match &scenario.sample {
        Some(s) => {
            let missing = base.missing_schema_columns(s);
            if !missing.is_empty() {
                return Err(MteError::Schema(format!("scenario `{}` sample lacks columns {missing:?}", scenario.label)));
            }
            s.clone()
        }
        None => base.clone(),
    };
    for (col, target) in &scenario.mean_overrides {
        let v = out.column(col)?;
        let shift = target - mean(v);
        let shifted = v.iter().map(|x| x + shift).collect();
        out.set_column(col, shifted);
    }
    Ok(out)
}

/// Applies the scenario's program levels.
pub fn with_program(data: &Dataset, scenario: &ReformScenario) -> Dataset {
    let mut out = data.clone();
    let n = out.n();
    if let Some(g) = scenario.guarantee {
        out.set_column("guarantee", vec![g; n]);
    }
    if let Some(t) = scenario.tax_t {
        out.set_column("tax_t", vec![t; n]);
    }
    out
}

/// Full scenario sample: scenario demographics under scenario program.
pub fn scenario_sample(base: &Dataset, scenario: &ReformScenario) -> Result<Dataset> {
    Ok(with_program(&scenario_demographics(base, scenario)?, scenario))
}

fn mean_fhat(model: &FirstStageModel, data: &Dataset) -> Result<f64> {
    Ok(mean(&probit_predict(model, data)?))
}

/// Splits P_target - base into a demographic shift, a program shift and
/// a residual, attributing sequentially in the given order. `base` and
/// any replacement sample must carry the probit's derived columns.
pub fn participation_decomposition(model: &FirstStageModel, base: &Dataset, scenario: &ReformScenario, order: AttributionOrder) -> Result<Decomposition> {
    scenario.validate()?;
    let p0 = mean_fhat(model, base)?;
    let demo = scenario_demographics(base, scenario)?;
    let both = mean_fhat(model, &with_program(&demo, scenario))?;
    let (demographics, program) = match order {
        AttributionOrder::DemographicsFirst => {
            let p1 = mean_fhat(model, &demo)?;
            (p1 - p0, both - p1)
        }
        AttributionOrder::ProgramFirst => {
            let p1 = mean_fhat(model, &with_program(base, scenario))?;
            (both - p1, p1 - p0)
        }
    };
    let target = scenario.p_target - p0;
    let (demographics, program, residual) = close_components(demographics, program, target).unwrap_or((demographics, program, target - (demographics + program)));
    Ok(Decomposition { label: scenario.label.clone(), base: p0, demographics, program, residual, p_target: scenario.p_target })
}

/// Components (d', p', r) with `d' + p' + r` evaluating to `target`
/// exactly in floating point. d and p move by at most a few ulps when no
/// residual closes the sum as given. `None` when d + p and r both lie in
/// a coarser binade than `target`, so that no such triple exists near
/// (d, p).
fn close_components(d: f64, p: f64, target: f64) -> Option<(f64, f64, f64)> {
    let coarse = ulp(d.abs().max(p.abs()).max(target.abs()));
    let mut moves: Vec<(i32, i32, bool)> = vec![];
    for i in -3i32..=3 {
        for j in -3i32..=3 {
            moves.push((i, j, false));
            moves.push((i, j, true));
        }
    }
    moves.sort_by_key(|&(i, j, c)| (i.abs() + j.abs(), c));
    for (i, j, use_coarse) in moves {
        let dk = d + i as f64 * ulp(d.abs());
        let pk = p + j as f64 * if use_coarse { coarse } else { ulp(p.abs()) };
        let s = dk + pk;
        let mut r = target - s;
        for _ in 0..4 {
            let err = target - (s + r);
            if err == 0.0 {
                return Some((dk, pk, r));
            }
            r = if err > 0.0 { r.next_up() } else { r.next_down() };
        }
    }
    None
}

fn ulp(x: f64) -> f64 {
    x.next_up() - x
}

/// Derived columns for a raw replacement sample, using the base fit's
/// index weights and wage equation.
pub fn prepare_scenario_sample(fit: &PipelineFit, raw: &Dataset) -> Result<Dataset> {
    let mut out = match &fit.prepared.wage {
        Some(w) => impute_wages(raw, w)?,
        None => raw.clone(),
    };
    if let Some(idx) = &fit.prepared.index {
        let cols = fit.prepared.index_columns.iter().map(|c| raw.column(c).map(|v| (c.as_str(), v))).collect::<Result<Vec<_>>>()?;
        out.set_column(INDEX_COLUMN, apply_index_weights(&cols, &idx.weights)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReformEffect {
    pub label: String,
    pub p_target: f64,
    pub mte: f64,
    pub band: Option<(f64, f64)>,
    /// λ-term means at which the response is evaluated.
    pub x_at: Vec<(String, f64)>,
}

/// MTE at F = P_target and the scenario's λ-term means. Each bootstrap
/// replicate is evaluated at the same means.
pub fn mte_at_reform(second: &SecondStageModel, scenario_data: &Dataset, scenario: &ReformScenario, boot: Option<&BootstrapResult>) -> Result<ReformEffect> {
    scenario.validate()?;
    let (xl, _) = design(scenario_data, &second.lambda_terms)?;
    let x_at: Vec<f64> = (0..xl.ncols()).map(|j| xl.column(j).mean()).collect();
    let mte = second.mte_eval(scenario.p_target, Some(&x_at))?;
    let band = match boot {
        Some(b) => Some(b.band_at(scenario.p_target, Some(&x_at))?),
        None => None,
    };
    Ok(ReformEffect {
        label: scenario.label.clone(),
        p_target: scenario.p_target,
        mte,
        band,
        x_at: second.lambda_terms.iter().map(|t| t.to_string()).zip(x_at).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::rng::stream_rng;
    use rand::Rng;

    #[test]
    fn components_close_exactly() {
        let mut rng = stream_rng(11, 0);
        for _ in 0..200_000 {
            let scale = 10f64.powi(rng.random_range(-12..0));
            let d = rng.random_range(-1.0..1.0) * scale;
            let p = rng.random_range(-1.0..1.0) * 10f64.powi(rng.random_range(-12..0));
            let t = rng.random_range(-1.0..1.0);
            let (d2, p2, r) = close_components(d, p, t).unwrap();
            assert_eq!(d2 + p2 + r, t);
            let tol = 4.0 * ulp(d.abs().max(p.abs()).max(t.abs()));
            assert!((d2 - d).abs() <= tol && (p2 - p).abs() <= tol);
        }
    }

    #[test]
    fn coarse_sum_cannot_reach_fine_target() {
        // d + p near 0.54 and r near -0.86 are multiples of 2^-53, so an
        // odd multiple of 2^-54 is out of reach
        let t = 0.3125 + 2f64.powi(-54);
        assert!(close_components(-0.000_658, 0.5378, -t).is_none());
        assert!(close_components(-0.000_658, 0.5378, -t - 2f64.powi(-54)).is_some());
    }
}
