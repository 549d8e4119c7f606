//! Population specification and the agent sampler.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{outcome_unchecked, Agent, BudgetConstraint, Covariates, FixedCost, Preferences, DEFAULT_H_MAX};
use crate::data::{Column, Dataset, COVARIATE_COLUMNS};
use crate::error::{MteError, Result};
use crate::numeric::{norm_cdf, norm_quantile};
use crate::rng::stream_rng;

/// Scalar distribution family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Dist {
    Constant { value: f64 },
    Normal { mean: f64, sd: f64 },
    LogNormal { mu: f64, sigma: f64 },
    Uniform { lo: f64, hi: f64 },
    TruncatedNormal { mean: f64, sd: f64, lo: f64, hi: f64 },
    Exponential { mean: f64 },
}

impl Dist {
    pub fn constant(value: f64) -> Dist {
        Dist::Constant { value }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let bad = |m: &str| Err(MteError::Config(format!("`{name}`: {m}")));
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match *self {
            Dist::Constant { value } if !finite(&[value]) => bad("value must be finite"),
            Dist::Normal { mean, sd } if !finite(&[mean, sd]) || sd <= 0.0 => bad("sd must be > 0"),
            Dist::LogNormal { mu, sigma } if !finite(&[mu, sigma]) || sigma <= 0.0 => bad("sigma must be > 0"),
            Dist::Uniform { lo, hi } if !finite(&[lo, hi]) || lo >= hi => bad("need lo < hi"),
            Dist::TruncatedNormal { mean, sd, lo, hi } if !finite(&[mean, sd]) || sd <= 0.0 || lo.is_nan() || hi.is_nan() || lo >= hi => {
                bad("need sd > 0 and lo < hi")
            }
            Dist::Exponential { mean } if !finite(&[mean]) || mean <= 0.0 => bad("mean must be > 0"),
            _ => Ok(()),
        }
    }

    /// Closed support bounds.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Dist::Constant { value } => (value, value),
            Dist::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Dist::LogNormal { .. } | Dist::Exponential { .. } => (0.0, f64::INFINITY),
            Dist::Uniform { lo, hi } | Dist::TruncatedNormal { lo, hi, .. } => (lo, hi),
        }
    }

    fn check_support(&self, name: &str, lo: f64, hi: f64, lo_open: bool) -> Result<()> {
        self.validate(name)?;
        let (a, b) = self.support();
        let lo_ok = if lo_open { a > lo || (a == lo && matches!(self, Dist::LogNormal { .. } | Dist::Exponential { .. })) } else { a >= lo };
        if !lo_ok || b > hi {
            return Err(MteError::Config(format!("`{name}`: support [{a}, {b}] must lie within [{lo}, {hi}]")));
        }
        Ok(())
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            Dist::Constant { value } => value,
            Dist::Normal { mean, sd } => mean + sd * norm_quantile(u),
            Dist::LogNormal { mu, sigma } => (mu + sigma * norm_quantile(u)).exp(),
            Dist::Uniform { lo, hi } => lo + (hi - lo) * u,
            Dist::TruncatedNormal { mean, sd, lo, hi } => {
                let a = norm_cdf((lo - mean) / sd);
                let b = norm_cdf((hi - mean) / sd);
                (mean + sd * norm_quantile(a + u * (b - a))).clamp(lo, hi)
            }
            Dist::Exponential { mean } => -mean * (1.0 - u).ln(),
        }
    }

    /// Transforms a standard normal draw (the Gaussian-copula coordinate).
    pub fn from_normal(&self, e: f64) -> f64 {
        match *self {
            Dist::Normal { mean, sd } => mean + sd * e,
            Dist::LogNormal { mu, sigma } => (mu + sigma * e).exp(),
            Dist::Exponential { mean } => -mean * norm_cdf(-e).ln(),
            _ => self.quantile(norm_cdf(e)),
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Dist::Constant { value } => *value,
            _ => self.from_normal(rng.sample(StandardNormal)),
        }
    }
}

/// One latent preference type: marginals for (θ1, θ2, θ3, ν) joined by a
/// Gaussian copula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceType {
    #[serde(default = "one")]
    pub weight: f64,
    pub theta1: Dist,
    pub theta2: Dist,
    #[serde(default = "zero_dist")]
    pub theta3: Dist,
    /// Idiosyncratic cost; draws below zero are clamped to zero.
    pub nu: Dist,
    /// 4×4 copula correlation of (θ1, θ2, θ3, ν); identity when absent.
    #[serde(default)]
    pub correlation: Option<Vec<Vec<f64>>>,
}

fn one() -> f64 {
    1.0
}
fn zero_dist() -> Dist {
    Dist::constant(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    /// May be `inf` to shut the program.
    pub kappa0: f64,
    pub kappa1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentSpec {
    /// Distribution of the state's log barrier level.
    pub log_z: Dist,
    /// Spread states evenly over the quantiles of `log_z` (one draw per
    /// stratum, randomly assigned to states).
    #[serde(default)]
    pub stratified: bool,
    /// Number of observed barrier measures z1..zK.
    #[serde(default = "one_usize")]
    pub measures: usize,
    /// Log-scale noise of each measure around the latent level.
    #[serde(default)]
    pub measure_noise_sd: f64,
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramSpec {
    pub guarantee: Dist,
    pub tax_t: Dist,
    #[serde(default = "zero_dist")]
    pub tax_r: Dist,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CovariateSpec {
    pub age: Dist,
    pub black_share: f64,
    /// Children beyond the first, Poisson mean.
    pub extra_children_mean: f64,
    /// Probability that a child is under six.
    pub young_share: f64,
    /// State-level unemployment rate.
    pub unemp_rate: Dist,
    /// Food-stamp guarantee = fs_base · family_size^fs_elasticity.
    pub fs_base: f64,
    pub fs_elasticity: f64,
}

impl Default for CovariateSpec {
    fn default() -> Self {
        CovariateSpec {
            age: Dist::TruncatedNormal { mean: 32.0, sd: 8.0, lo: 16.0, hi: 64.0 },
            black_share: 0.4,
            extra_children_mean: 0.8,
            young_share: 0.35,
            unemp_rate: Dist::Uniform { lo: 3.0, hi: 10.0 },
            fs_base: 90.0,
            fs_elasticity: 0.8,
        }
    }
}

/// log w = intercept + Σ coef·covariate + noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WageSpec {
    pub intercept: f64,
    pub age: f64,
    pub black: f64,
    pub unemp_rate: f64,
    pub kids_under6: f64,
    pub noise_sd: f64,
}

impl Default for WageSpec {
    fn default() -> Self {
        WageSpec { intercept: 10f64.ln(), age: 0.0, black: 0.0, unemp_rate: 0.0, kids_under6: 0.0, noise_sd: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NonlaborSpec {
    pub income: Dist,
    pub zero_share: f64,
}

impl Default for NonlaborSpec {
    fn default() -> Self {
        NonlaborSpec { income: Dist::Exponential { mean: 20.0 }, zero_share: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    pub seed: u64,
    pub states: usize,
    pub agents_per_state: usize,
    #[serde(default = "default_h_max")]
    pub h_max: f64,
    pub cost: CostSpec,
    pub instrument: InstrumentSpec,
    pub program: ProgramSpec,
    #[serde(default)]
    pub covariates: CovariateSpec,
    #[serde(default)]
    pub wages: WageSpec,
    #[serde(default)]
    pub nonlabor: NonlaborSpec,
    pub types: Vec<PreferenceType>,
}

fn default_h_max() -> f64 {
    DEFAULT_H_MAX
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.states == 0 || self.agents_per_state == 0 {
            return Err(MteError::Config("states and agents_per_state must be >= 1".into()));
        }
        if !(self.h_max > 0.0 && self.h_max.is_finite()) {
            return Err(MteError::Config("h_max must be > 0".into()));
        }
        if self.cost.kappa0.is_nan() || self.cost.kappa0 == f64::NEG_INFINITY || !self.cost.kappa1.is_finite() {
            return Err(MteError::Config("cost coefficients must be finite (kappa0 may be inf)".into()));
        }
        self.instrument.log_z.validate("instrument.log_z")?;
        if self.instrument.measures == 0 || !(self.instrument.measure_noise_sd >= 0.0) {
            return Err(MteError::Config("instrument needs >= 1 measure and noise sd >= 0".into()));
        }
        self.program.guarantee.check_support("program.guarantee", 0.0, f64::INFINITY, false)?;
        self.program.tax_t.check_support("program.tax_t", 0.0, 1.0, false)?;
        self.program.tax_r.check_support("program.tax_r", 0.0, 1.0, false)?;
        let c = &self.covariates;
        c.age.validate("covariates.age")?;
        c.unemp_rate.validate("covariates.unemp_rate")?;
        if !(0.0..=1.0).contains(&c.black_share) || !(0.0..=1.0).contains(&c.young_share) || !(c.extra_children_mean >= 0.0) {
            return Err(MteError::Config("covariate shares must lie in [0,1], child mean >= 0".into()));
        }
        if !(c.fs_base.is_finite() && c.fs_elasticity.is_finite()) {
            return Err(MteError::Config("food-stamp schedule must be finite".into()));
        }
        let w = &self.wages;
        if [w.intercept, w.age, w.black, w.unemp_rate, w.kids_under6, w.noise_sd].iter().any(|v| !v.is_finite()) || w.noise_sd < 0.0 {
            return Err(MteError::Config("wage process must be finite with noise_sd >= 0".into()));
        }
        self.nonlabor.income.check_support("nonlabor.income", 0.0, f64::INFINITY, false)?;
        if !(0.0..=1.0).contains(&self.nonlabor.zero_share) {
            return Err(MteError::Config("nonlabor.zero_share must lie in [0,1]".into()));
        }
        if self.types.is_empty() {
            return Err(MteError::Config("at least one preference type is required".into()));
        }
        for (j, ty) in self.types.iter().enumerate() {
            if !(ty.weight > 0.0 && ty.weight.is_finite()) {
                return Err(MteError::Config(format!("types[{j}].weight must be > 0")));
            }
            ty.theta1.validate(&format!("types[{j}].theta1"))?;
            ty.theta2.check_support(&format!("types[{j}].theta2"), 0.0, f64::INFINITY, true)?;
            ty.theta3.check_support(&format!("types[{j}].theta3"), 0.0, f64::INFINITY, false)?;
            ty.nu.validate(&format!("types[{j}].nu"))?;
            copula_factor(ty.correlation.as_ref(), j)?;
        }
        Ok(())
    }

    pub fn n_agents(&self) -> usize {
        self.states * self.agents_per_state
    }
}

/// Square root of a PSD correlation matrix (V·√Λ).
fn copula_factor(corr: Option<&Vec<Vec<f64>>>, j: usize) -> Result<Option<DMatrix<f64>>> {
    let Some(rows) = corr else { return Ok(None) };
    let err = |m: &str| MteError::Config(format!("types[{j}].correlation: {m}"));
    if rows.len() != 4 || rows.iter().any(|r| r.len() != 4) {
        return Err(err("must be 4x4"));
    }
    let m = DMatrix::from_fn(4, 4, |a, b| rows[a][b]);
    for a in 0..4 {
        if (m[(a, a)] - 1.0).abs() > 1e-12 {
            return Err(err("diagonal must be 1"));
        }
        for b in 0..4 {
            if !m[(a, b)].is_finite() || (m[(a, b)] - m[(b, a)]).abs() > 1e-12 || m[(a, b)].abs() > 1.0 {
                return Err(err("must be symmetric with entries in [-1, 1]"));
            }
        }
    }
    let eig = SymmetricEigen::new(m);
    if eig.eigenvalues.iter().any(|&l| l < -1e-10) {
        return Err(err("not positive semi-definite"));
    }
    let mut f = eig.eigenvectors.clone();
    for c in 0..4 {
        let s = eig.eigenvalues[c].max(0.0).sqrt();
        for r in 0..4 {
            f[(r, c)] *= s;
        }
    }
    Ok(Some(f))
}

/// Per-state draws shared by every agent in the state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDraw {
    pub log_z: f64,
    /// Observed barrier measures (levels, not logs).
    pub measures: Vec<f64>,
    pub g: f64,
    pub t: f64,
    pub r: f64,
    pub unemp_rate: f64,
    pub region: u8,
}

#[derive(Debug, Clone)]
pub struct Population {
    pub agents: Vec<Agent>,
    pub states: Vec<StateDraw>,
}

fn draw_states(spec: &PopulationSpec) -> Vec<StateDraw> {
    let mut rng = stream_rng(spec.seed, 0);
    let s = spec.states;
    let mut u: Vec<f64> = if spec.instrument.stratified {
        (0..s).map(|k| (k as f64 + rng.random::<f64>()) / s as f64).collect()
    } else {
        (0..s).map(|_| rng.random::<f64>()).collect()
    };
    if spec.instrument.stratified {
        u.shuffle(&mut rng);
    }
    u.into_iter()
        .map(|ui| {
            let log_z = spec.instrument.log_z.quantile(ui.clamp(1e-12, 1.0 - 1e-12));
            let measures = (0..spec.instrument.measures)
                .map(|_| {
                    let e: f64 = rng.sample(StandardNormal);
                    (log_z + spec.instrument.measure_noise_sd * e).exp()
                })
                .collect();
            StateDraw {
                log_z,
                measures,
                g: spec.program.guarantee.sample(&mut rng),
                t: spec.program.tax_t.sample(&mut rng),
                r: spec.program.tax_r.sample(&mut rng),
                unemp_rate: spec.covariates.unemp_rate.sample(&mut rng),
                region: rng.random_range(0..4u8),
            }
        })
        .collect()
}

fn draw_agent(spec: &PopulationSpec, factors: &[Option<DMatrix<f64>>], cum_w: &[f64], st: &StateDraw, state: usize, index: usize) -> Agent {
    let mut rng = stream_rng(spec.seed, 1 + index as u64);
    let u: f64 = rng.random::<f64>() * cum_w[cum_w.len() - 1];
    let j = cum_w.iter().position(|&c| u < c).unwrap_or(cum_w.len() - 1);
    let ty = &spec.types[j];
    let mut e = [0.0f64; 4];
    for v in e.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    if let Some(f) = &factors[j] {
        let raw = e;
        for (r, v) in e.iter_mut().enumerate() {
            *v = (0..4).map(|c| f[(r, c)] * raw[c]).sum();
        }
    }
    let draw = |d: &Dist, x: f64| match d {
        Dist::Constant { value } => *value,
        _ => d.from_normal(x),
    };
    let preferences = Preferences { theta1: draw(&ty.theta1, e[0]), theta2: draw(&ty.theta2, e[1]), theta3: draw(&ty.theta3, e[2]) };
    let nu = draw(&ty.nu, e[3]).max(0.0);

    let c = &spec.covariates;
    let age = c.age.sample(&mut rng);
    let black = if rng.random::<f64>() < c.black_share { 1.0 } else { 0.0 };
    let children = 1 + if c.extra_children_mean > 0.0 { Poisson::new(c.extra_children_mean).map(|p| p.sample(&mut rng) as u64).unwrap_or(0) } else { 0 };
    let kids_under6 = Binomial::new(children, c.young_share).map(|b| b.sample(&mut rng)).unwrap_or(0) as f64;
    let family_size = 1.0 + children as f64;
    let w = &spec.wages;
    let noise: f64 = rng.sample(StandardNormal);
    let log_w = w.intercept + w.age * age + w.black * black + w.unemp_rate * st.unemp_rate + w.kids_under6 * kids_under6 + w.noise_sd * noise;
    let n = if rng.random::<f64>() < spec.nonlabor.zero_share { 0.0 } else { spec.nonlabor.income.sample(&mut rng).max(0.0) };

    Agent {
        preferences,
        cost: FixedCost { z: st.log_z.exp(), kappa0: spec.cost.kappa0, kappa1: spec.cost.kappa1, nu },
        constraint: BudgetConstraint { w: log_w.exp(), n, g: st.g, t: st.t, r: st.r },
        covariates: Covariates {
            age,
            black,
            family_size,
            kids_under6,
            unemp_rate: st.unemp_rate,
            region: st.region,
            fs_guarantee: c.fs_base * family_size.powf(c.fs_elasticity),
        },
        cluster_id: state as u32,
        h_max: spec.h_max,
    }
}

/// Draws every agent of the population; deterministic in the seed.
pub fn draw_population(spec: &PopulationSpec) -> Result<Population> {
    spec.validate()?;
    let factors = spec.types.iter().enumerate().map(|(j, t)| copula_factor(t.correlation.as_ref(), j)).collect::<Result<Vec<_>>>()?;
    let mut acc = 0.0;
    let cum_w: Vec<f64> = spec.types.iter().map(|t| {
        acc += t.weight;
        acc
    }).collect();
    let states = draw_states(spec);
    let a = spec.agents_per_state;
    let agents: Vec<Agent> = (0..spec.n_agents())
        .into_par_iter()
        .map(|i| draw_agent(spec, &factors, &cum_w, &states[i / a], i / a, i))
        .collect();
    for ag in &agents {
        ag.validate().map_err(|e| MteError::Config(format!("spec produced an invalid agent: {e}")))?;
    }
    Ok(Population { agents, states })
}

/// Simulates choices and emits the dataset, including `oracle_delta`,
/// `oracle_dv` and `oracle_phi` columns that estimators ignore.
pub fn simulate_population(spec: &PopulationSpec) -> Result<Dataset> {
    let pop = draw_population(spec)?;
    Ok(population_dataset(&pop))
}

pub(crate) fn population_dataset(pop: &Population) -> Dataset {
    let outcomes: Vec<_> = pop.agents.par_iter().map(outcome_unchecked).collect();
    let n = pop.agents.len();
    let k = pop.states.first().map_or(1, |s| s.measures.len());
    let mut cols: Vec<Column> = COVARIATE_COLUMNS.iter().map(|&name| Column { name: name.into(), values: Vec::with_capacity(n) }).collect();
    let mut z: Vec<Vec<f64>> = vec![Vec::with_capacity(n); k];
    let mut oracle = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut d = Dataset { hours: Vec::with_capacity(n), participates: Vec::with_capacity(n), log_wage: Vec::with_capacity(n), cluster_id: Vec::with_capacity(n), columns: vec![] };
    for (ag, out) in pop.agents.iter().zip(&outcomes) {
        let bc = &ag.constraint;
        let cv = &ag.covariates;
        d.hours.push(out.hours);
        d.participates.push(out.participates);
        d.log_wage.push(if out.hours > 0.0 { Some(bc.w.ln()) } else { None });
        d.cluster_id.push(ag.cluster_id as u64);
        let row = [
            bc.n,
            bc.g,
            bc.t,
            bc.r,
            cv.age,
            cv.black,
            cv.family_size,
            cv.kids_under6,
            cv.unemp_rate,
            (cv.region == 1) as u8 as f64,
            (cv.region == 2) as u8 as f64,
            (cv.region == 3) as u8 as f64,
            cv.fs_guarantee,
        ];
        for (c, v) in cols.iter_mut().zip(row) {
            c.values.push(v);
        }
        for (zk, m) in z.iter_mut().zip(&pop.states[ag.cluster_id as usize].measures) {
            zk.push(*m);
        }
        oracle[0].push(out.delta);
        oracle[1].push(out.utility_gain);
        oracle[2].push(out.phi);
    }
    d.columns = cols;
    for (i, zk) in z.into_iter().enumerate() {
        d.columns.push(Column { name: format!("z{}", i + 1), values: zk });
    }
    for (name, v) in ["oracle_delta", "oracle_dv", "oracle_phi"].iter().zip(oracle) {
        // φ is +∞ when the program is shut; keep the column finite.
        let v = v.into_iter().map(|x: f64| if x.is_finite() { x } else { f64::MAX }).collect();
        d.columns.push(Column { name: (*name).into(), values: v });
    }
    d
}
