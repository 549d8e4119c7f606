//! Run configuration, artifact export and the batch entry point behind
//! the `mte` binary.

mod csv_io;
mod svg;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use csv_io::{fmt_f64, read_dataset, read_dataset_from, write_dataset, write_dataset_to, Table};
pub use svg::curve_svg;

use crate::counterfactual::{mte_at_reform, participation_decomposition, prepare_scenario_sample, scenario_sample, AttributionOrder, ReformScenario};
use crate::curve::MteCurve;
use crate::data::Dataset;
use crate::error::{MteError, Result};
use crate::estimation::{fit_pipeline, EstimatorConfig, PipelineFit, Term};
use crate::inference::{
    block_bootstrap, falsification_bootstrap, falsification_run, gcv_select, gps_balance, segment_f_stats, BootstrapOptions, BootstrapResult, GpsSpec,
    Segmentation, MIN_BAND_REPLICATES,
};
use crate::structural_model::{population_moments, simulate_population, true_mte_curve, OracleOptions, PopulationSpec};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "MTE_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Simulate,
    Estimate,
    Bootstrap,
    Diagnose,
    Counterfactual,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Estimate => "estimate",
            Mode::Bootstrap => "bootstrap",
            Mode::Diagnose => "diagnose",
            Mode::Counterfactual => "counterfactual",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapSection {
    pub warm_start: bool,
    pub level: f64,
    pub max_failure_share: f64,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        let d = BootstrapOptions::default();
        BootstrapSection { warm_start: d.warm_start, level: d.level, max_failure_share: d.max_failure_share }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    pub segmentations: Vec<Segmentation>,
    pub cluster_robust: bool,
    /// Instrument whose balance is checked.
    pub gps_instrument: Term,
    pub gps_covariates: Vec<Term>,
    pub gps: GpsSpec,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            segmentations: vec![Segmentation::Terciles, Segmentation::Quartiles],
            cluster_robust: true,
            gps_instrument: Term::parse("zindex").unwrap(),
            gps_covariates: crate::estimation::terms(&["age", "black", "family_size", "kids_under6", "unemp_rate", "log_n10"]),
            gps: GpsSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub label: String,
    #[serde(default)]
    pub guarantee: Option<f64>,
    #[serde(default)]
    pub tax_t: Option<f64>,
    #[serde(default)]
    pub mean_overrides: BTreeMap<String, f64>,
    /// Replacement covariate sample in the dataset schema.
    #[serde(default)]
    pub sample: Option<PathBuf>,
    pub p_target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub input: Option<PathBuf>,
    /// Sample that cannot participate, for the falsification diagnostic.
    #[serde(default)]
    pub ineligible: Option<PathBuf>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "yes")]
    pub svg: bool,
    #[serde(default)]
    pub population: Option<PopulationSpec>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub bootstrap: BootstrapSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default, rename = "scenario")]
    pub scenarios: Vec<ScenarioConfig>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn yes() -> bool {
    true
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: None,
            input: None,
            ineligible: None,
            output: default_output(),
            seed: None,
            svg: true,
            population: None,
            estimator: EstimatorConfig::default(),
            bootstrap: BootstrapSection::default(),
            diagnostics: DiagnosticsSection::default(),
            scenarios: vec![],
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| MteError::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| MteError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = RunConfig::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.output);
        cfg.input.as_mut().map(fix);
        cfg.ineligible.as_mut().map(fix);
        for s in &mut cfg.scenarios {
            s.sample.as_mut().map(fix);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<Mode> {
        let mode = self.mode.ok_or_else(|| MteError::Config("no mode given".into()))?;
        self.estimator.validate()?;
        match mode {
            Mode::Simulate => {
                self.population.as_ref().ok_or_else(|| MteError::Config("simulate needs a [population] section".into()))?.validate()?;
            }
            _ => {
                if self.input.is_none() {
                    return Err(MteError::Config(format!("{} needs an input dataset", mode.as_str())));
                }
            }
        }
        if matches!(mode, Mode::Bootstrap) && self.estimator.bootstrap == 0 {
            return Err(MteError::Config("bootstrap needs estimator.bootstrap >= 1".into()));
        }
        if matches!(mode, Mode::Counterfactual) && self.scenarios.is_empty() {
            return Err(MteError::Config("counterfactual needs at least one [[scenario]]".into()));
        }
        Ok(mode)
    }

    fn bootstrap_options(&self) -> BootstrapOptions {
        BootstrapOptions {
            replicates: self.estimator.bootstrap,
            seed: self.seed.unwrap_or(0),
            warm_start: self.bootstrap.warm_start,
            max_failure_share: self.bootstrap.max_failure_share,
            level: self.bootstrap.level,
        }
    }
}

/// Sets the global worker pool from `MTE_WORKERS` when present.
pub fn init_workers() -> Result<Option<usize>> {
    let Ok(v) = std::env::var(WORKERS_ENV) else { return Ok(None) };
    let n: usize = v.trim().parse().map_err(|_| MteError::Config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`")))?;
    if n == 0 {
        return Err(MteError::Config(format!("{WORKERS_ENV} must be >= 1")));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| MteError::Config(e.to_string()))?;
    Ok(Some(n))
}

/// Files produced by a run, held in memory until every stage succeeds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn table(&mut self, name: &str, t: &Table) -> Result<()> {
        self.add(name, t.to_csv()?);
        Ok(())
    }

    /// Writes each file to a temporary name, then renames all of them.
    pub fn commit(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut staged = vec![];
        for (name, bytes) in &self.files {
            let tmp = dir.join(format!(".{name}.tmp"));
            if let Err(e) = std::fs::write(&tmp, bytes) {
                for (t, _) in &staged {
                    let _ = std::fs::remove_file(t);
                }
                let _ = std::fs::remove_file(&tmp);
                return Err(e.into());
            }
            staged.push((tmp, dir.join(name)));
        }
        for (tmp, dst) in &staged {
            std::fs::rename(tmp, dst)?;
        }
        Ok(staged.into_iter().map(|(_, d)| d).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub mode: Mode,
    pub written: Vec<PathBuf>,
}

/// Executes the configured mode and writes its artifacts.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    let mode = cfg.validate()?;
    let artifacts = build_artifacts(cfg, mode)?;
    let written = artifacts.commit(&cfg.output)?;
    Ok(RunReport { mode, written })
}

/// Runs the pipeline without touching the filesystem beyond its inputs.
pub fn build_artifacts(cfg: &RunConfig, mode: Mode) -> Result<Artifacts> {
    let mut out = Artifacts::default();
    if mode == Mode::Simulate {
        simulate_artifacts(cfg, &mut out)?;
        return Ok(out);
    }
    let data = read_dataset(cfg.input.as_ref().unwrap()).map_err(|e| e.in_stage("read input", 0))?;
    let fit = fit_pipeline(&data, &cfg.estimator)?;
    let boot = match mode {
        Mode::Bootstrap => Some(block_bootstrap(&data, &cfg.estimator, &fit, &cfg.bootstrap_options()).map_err(|e| e.in_stage("bootstrap", data.n()))?),
        Mode::Counterfactual if cfg.estimator.bootstrap > 0 => {
            Some(block_bootstrap(&data, &cfg.estimator, &fit, &cfg.bootstrap_options()).map_err(|e| e.in_stage("bootstrap", data.n()))?)
        }
        _ => None,
    };
    let curve = match &boot {
        Some(b) => b.curve(fit.curve.x_at.clone()),
        None => fit.curve.clone(),
    };
    out.table("mte_curve.csv", &curve_table(&curve))?;
    out.table("first_stage.csv", &first_stage_table(&fit))?;
    out.table("second_stage.csv", &second_stage_table(&fit))?;
    let mut diag = diagnostics_table(&data, &fit);
    if let Some(b) = &boot {
        bootstrap_rows(&mut diag, b);
    }
    match mode {
        Mode::Diagnose => diagnose_artifacts(cfg, &data, &fit, &mut diag, &mut out)?,
        Mode::Counterfactual => counterfactual_artifacts(cfg, &fit, boot.as_ref(), &mut out)?,
        _ => {}
    }
    out.table("diagnostics.csv", &diag)?;
    if cfg.svg {
        out.add("mte_curve.svg", curve_svg(&curve, "Marginal hours response").into_bytes());
    }
    Ok(out)
}

fn simulate_artifacts(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let mut spec = cfg.population.clone().unwrap();
    if let Some(s) = cfg.seed {
        spec.seed = s;
    }
    let data = simulate_population(&spec)?;
    let mut buf = vec![];
    write_dataset_to(&data, &mut buf)?;
    out.add("dataset.csv", buf);
    let m = population_moments(&spec)?;
    let mut t = Table::new(&["key", "value"]);
    t.push(kv("n", data.n()));
    t.push(kv("participation_rate", fmt_f64(m.participation_rate)));
    t.push(kv("mean_effect", fmt_f64(m.mean_effect)));
    t.push(kv("treatment_on_treated", m.tot.map(fmt_f64).unwrap_or_default()));
    // The oracle curve is reported only where the population reaches the grid.
    match true_mte_curve(&spec, &cfg.estimator.grid(), &OracleOptions::default()) {
        Ok(c) => {
            out.table("oracle_mte.csv", &curve_table(&c))?;
            t.push(kv("oracle_curve", "written"));
        }
        Err(e @ MteError::OutOfSupport { .. }) => t.push(kv("oracle_curve", e.to_string())),
        Err(e) => return Err(e),
    }
    out.table("population.csv", &t)?;
    Ok(())
}

fn kv(k: &str, v: impl ToString) -> Vec<String> {
    vec![k.to_string(), v.to_string()]
}

pub fn curve_table(c: &MteCurve) -> Table {
    let mut t = Table::new(&["F", "mte", "lo95", "hi95"]);
    for (i, f) in c.grid.iter().enumerate() {
        let b = |v: &Option<Vec<f64>>| v.as_ref().map(|v| fmt_f64(v[i])).unwrap_or_default();
        t.push(vec![fmt_f64(*f), fmt_f64(c.mte[i]), b(&c.lo), b(&c.hi)]);
    }
    t
}

fn first_stage_table(fit: &PipelineFit) -> Table {
    let mut t = Table::new(&["block", "term", "coef", "std_error"]);
    let m = &fit.first;
    let kx = m.eta.len();
    for (j, (name, c)) in m.term_names().iter().zip(m.coefficients()).enumerate() {
        let block = if j < kx { "x" } else { "z" };
        t.push(vec![block.into(), name.clone(), fmt_f64(c), fmt_f64(m.std_errors[j])]);
    }
    t
}

fn second_stage_table(fit: &PipelineFit) -> Table {
    let mut t = Table::new(&["block", "term", "coef", "std_error"]);
    let m = &fit.second;
    for (j, (name, c)) in m.param_names().iter().zip(m.coefficients()).enumerate() {
        let (block, term) = name.split_once(':').unwrap_or(("", name));
        t.push(vec![block.into(), term.into(), fmt_f64(c), fmt_f64(m.std_errors[j])]);
    }
    if let Some(w) = &fit.prepared.wage {
        for (j, term) in w.terms.iter().enumerate() {
            t.push(vec!["wage".into(), term.to_string(), fmt_f64(w.gamma[j]), fmt_f64(w.std_errors[j])]);
        }
        if let Some(mc) = w.mills_coef {
            t.push(vec!["wage".into(), "inverse_mills".into(), fmt_f64(mc), w.mills_std_error.map(fmt_f64).unwrap_or_default()]);
        }
    }
    t
}

fn diagnostics_table(data: &Dataset, fit: &PipelineFit) -> Table {
    let mut t = Table::new(&["key", "value"]);
    let p = data.participation();
    t.push(kv("n", data.n()));
    t.push(kv("clusters", data.clusters().len()));
    t.push(kv("participation_rate", fmt_f64(crate::numeric::mean(&p))));
    t.push(kv("missing_wages", data.missing_wages()));
    t.push(kv("probit_iterations", fit.first.iterations));
    t.push(kv("probit_log_likelihood", fmt_f64(fit.first.log_likelihood)));
    let (lo, hi) = fit.second.window;
    let inside = fit.fhat.iter().filter(|f| **f >= lo && **f <= hi).count();
    t.push(kv("fhat_share_in_window", fmt_f64(inside as f64 / fit.fhat.len() as f64)));
    t.push(kv("knots", fit.second.basis.knots().len()));
    t.push(kv("window_lo", fmt_f64(lo)));
    t.push(kv("window_hi", fmt_f64(hi)));
    t.push(kv("second_stage_rss", fmt_f64(fit.second.rss)));
    t.push(kv("second_stage_sigma2", fmt_f64(fit.second.sigma2)));
    if let Some(idx) = &fit.prepared.index {
        for (c, w) in fit.prepared.index_columns.iter().zip(&idx.weights) {
            t.push(kv(&format!("index_weight:{c}"), fmt_f64(*w)));
        }
    }
    if let Some(w) = &fit.prepared.wage {
        t.push(kv("wage_workers", w.n_workers));
        t.push(kv("wage_fell_back_to_ols", w.fell_back_to_ols));
    }
    if let Some(h) = &fit.homogeneous {
        t.push(kv("homogeneous_iv_effect", fmt_f64(h.effect)));
        t.push(kv("homogeneous_iv_cluster_se", fmt_f64(h.std_error)));
    }
    t
}

fn bootstrap_rows(t: &mut Table, b: &BootstrapResult) {
    t.push(kv("bootstrap_requested", b.requested));
    t.push(kv("bootstrap_converged", b.converged()));
    t.push(kv("bootstrap_failed", b.failures.len()));
    for (i, reason) in &b.failures {
        t.push(kv(&format!("bootstrap_failure:{i}"), reason));
    }
    if b.converged() < MIN_BAND_REPLICATES {
        t.push(kv("bootstrap_bands", format!("omitted: fewer than {MIN_BAND_REPLICATES} converged replicates")));
    }
    if let Some(s) = b.point_outside_share() {
        t.push(kv("point_outside_band_share", fmt_f64(s)));
    }
    if let Some(se) = b.homogeneous_std_error() {
        t.push(kv("homogeneous_iv_bootstrap_se", fmt_f64(se)));
    }
    if let Ok(w) = b.homogeneity_test() {
        t.push(kv("homogeneity_wald", fmt_f64(w.statistic)));
        t.push(kv("homogeneity_df", w.df));
        t.push(kv("homogeneity_p_value", fmt_f64(w.p_value)));
    }
}

fn diagnose_artifacts(cfg: &RunConfig, data: &Dataset, fit: &PipelineFit, diag: &mut Table, out: &mut Artifacts) -> Result<()> {
    let e = &cfg.estimator;
    let d = &fit.prepared.data;
    let gcv = gcv_select(d, &fit.fhat, &e.beta_terms, &e.lambda_terms, e.window, &e.knot_candidates).map_err(|err| err.in_stage("gcv", d.n()))?;
    let mut t = Table::new(&["knots", "params", "rss", "gcv", "skipped", "selected"]);
    for en in &gcv.entries {
        t.push(vec![
            en.knots.to_string(),
            en.params.to_string(),
            fmt_f64(en.rss),
            en.score.map(fmt_f64).unwrap_or_default(),
            en.skipped.clone().unwrap_or_default(),
            (en.knots == gcv.selected).to_string(),
        ]);
    }
    out.table("gcv.csv", &t)?;
    diag.push(kv("gcv_selected_knots", gcv.selected));

    let mut t = Table::new(&["segmentation", "segment", "f_lo", "f_hi", "n", "f_stat", "df1", "df2", "p_value", "robust_f", "underpowered", "degenerate"]);
    for seg in &cfg.diagnostics.segmentations {
        let s = segment_f_stats(d, &fit.fhat, &e.probit_x, &e.probit_z, seg, cfg.diagnostics.cluster_robust).map_err(|err| err.in_stage("segment F", d.n()))?;
        let label = match seg {
            Segmentation::Terciles => "terciles",
            Segmentation::Quartiles => "quartiles",
            Segmentation::Breaks(_) => "breaks",
        };
        for (k, st) in s.segments.iter().enumerate() {
            t.push(vec![
                label.into(),
                (k + 1).to_string(),
                fmt_f64(st.lo),
                fmt_f64(st.hi),
                st.n.to_string(),
                fmt_f64(st.f_stat),
                st.df1.to_string(),
                st.df2.to_string(),
                fmt_f64(st.p_value),
                st.robust_f.map(fmt_f64).unwrap_or_default(),
                st.underpowered.to_string(),
                st.degenerate.to_string(),
            ]);
        }
    }
    out.table("segment_f.csv", &t)?;

    let bal = gps_balance(d, &cfg.diagnostics.gps_instrument, &cfg.diagnostics.gps_covariates, &cfg.diagnostics.gps).map_err(|err| err.in_stage("GPS balance", d.n()))?;
    let mut t = Table::new(&["covariate", "interval", "t_before", "t_after"]);
    for r in &bal.rows {
        t.push(vec![r.covariate.clone(), (r.interval + 1).to_string(), fmt_f64(r.t_before), fmt_f64(r.t_after)]);
    }
    out.table("balance.csv", &t)?;
    diag.push(kv("balance_tests", bal.rows.len()));
    diag.push(kv("balance_significant_before", bal.significant_before));
    diag.push(kv("balance_significant_after", bal.significant_after));

    if let Some(path) = &cfg.ineligible {
        let inel = read_dataset(path).map_err(|err| err.in_stage("read ineligible sample", 0))?;
        let f = falsification_run(data, &inel, e).map_err(|err| err.in_stage("falsification", inel.n()))?;
        let curve = if e.bootstrap > 0 {
            let b = falsification_bootstrap(data, &inel, e, &f, &cfg.bootstrap_options()).map_err(|err| err.in_stage("falsification bootstrap", inel.n()))?;
            if let (Some(lo), Some(hi)) = (&b.lo, &b.hi) {
                let covered = lo.iter().zip(hi).filter(|(l, h)| **l <= 0.0 && **h >= 0.0).count();
                diag.push(kv("falsification_zero_coverage", fmt_f64(covered as f64 / lo.len() as f64)));
            }
            b.curve(f.curve.x_at.clone())
        } else {
            f.curve.clone()
        };
        out.table("falsification_curve.csv", &curve_table(&curve))?;
    }
    Ok(())
}

fn counterfactual_artifacts(cfg: &RunConfig, fit: &PipelineFit, boot: Option<&BootstrapResult>, out: &mut Artifacts) -> Result<()> {
    let mut t = Table::new(&["scenario", "base_p", "d_demographics", "d_program", "d_residual", "p_target", "mte", "lo95", "hi95"]);
    let base = &fit.prepared.data;
    for sc in &cfg.scenarios {
        let sample = match &sc.sample {
            Some(p) => Some(prepare_scenario_sample(fit, &read_dataset(p).map_err(|e| e.in_stage("read scenario sample", 0))?)?),
            None => None,
        };
        let scenario = ReformScenario {
            label: sc.label.clone(),
            guarantee: sc.guarantee,
            tax_t: sc.tax_t,
            mean_overrides: sc.mean_overrides.clone(),
            sample,
            p_target: sc.p_target,
        };
        let dec = participation_decomposition(&fit.first, base, &scenario, AttributionOrder::DemographicsFirst).map_err(|e| e.in_stage("decomposition", base.n()))?;
        let sdata = scenario_sample(base, &scenario)?;
        let boot = boot.filter(|b| b.converged() >= MIN_BAND_REPLICATES);
        let eff = mte_at_reform(&fit.second, &sdata, &scenario, boot).map_err(|e| e.in_stage("mte at reform", sdata.n()))?;
        let (lo, hi) = eff.band.map(|(l, h)| (fmt_f64(l), fmt_f64(h))).unwrap_or_default();
        t.push(vec![
            sc.label.clone(),
            fmt_f64(dec.base),
            fmt_f64(dec.demographics),
            fmt_f64(dec.program),
            fmt_f64(dec.residual),
            fmt_f64(dec.p_target),
            fmt_f64(eff.mte),
            lo,
            hi,
        ]);
    }
    out.table("counterfactual.csv", &t)?;
    Ok(())
}

/// One-line JSON record describing a failed run.
pub fn error_record(e: &MteError) -> String {
    let mut root = e;
    let mut stages = vec![];
    while let MteError::Stage { stage, rows, source } = root {
        stages.push(serde_json::json!({ "stage": stage, "rows": rows }));
        root = source;
    }
    serde_json::json!({
        "status": "error",
        "kind": root.kind(),
        "message": e.to_string(),
        "context": stages,
    })
    .to_string()
}
