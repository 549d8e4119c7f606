mod common;

use common::reduced_config;
use mte_core::counterfactual::*;
use mte_core::error::MteError;
use mte_core::estimation::*;
use mte_core::inference::resample_clusters;
use mte_core::numeric::mean;
use mte_core::rng::stream_rng;
use mte_core::structural_model::{draw_population, participate, simulate_population, true_mte_curve, worlds, OracleOptions};

fn scenario(label: &str, p_target: f64) -> ReformScenario {
    ReformScenario { label: label.into(), guarantee: None, tax_t: None, mean_overrides: Default::default(), sample: None, p_target }
}

#[test]
fn unchanged_scenario_has_zero_components() {
    let data = simulate_population(&worlds::homogeneous_world(1, 30, 300)).unwrap();
    let fit = fit_pipeline(&data, &reduced_config()).unwrap();
    let base = mean(&fit.fhat);
    let d = participation_decomposition(&fit.first, &fit.prepared.data, &scenario("same", base), AttributionOrder::default()).unwrap();
    assert_eq!((d.demographics, d.program, d.residual), (0.0, 0.0, 0.0));
    assert_eq!(d.base, base);
}

#[test]
fn guarantee_change_is_all_program() {
    let data = simulate_population(&worlds::homogeneous_world(2, 30, 300)).unwrap();
    let fit = fit_pipeline(&data, &reduced_config()).unwrap();
    let g_pos = fit.first.x_terms.iter().position(|t| t.to_string() == "log_g").unwrap();
    assert!(fit.first.eta[g_pos] > 0.0);
    let s = ReformScenario { guarantee: Some(320.0), ..scenario("generous", 0.6) };
    let d = participation_decomposition(&fit.first, &fit.prepared.data, &s, AttributionOrder::DemographicsFirst).unwrap();
    assert_eq!(d.demographics, 0.0);
    assert!(d.program > 0.0);
    assert_eq!(d.base + d.total(), d.base + (0.6 - d.base));
}

/// Raising every state's guarantee to 305 shifts the true participation
/// rate; the predicted program shift matches it within three bootstrap
/// standard errors of the prediction.
#[test]
fn decomposition_tracks_simulated_reform() {
    let spec = worlds::homogeneous_world(3, 50, 2000);
    let pop = draw_population(&spec).unwrap();
    let base_share = pop.agents.iter().filter(|a| participate(a).unwrap()).count() as f64 / pop.agents.len() as f64;
    let reform_share = pop
        .agents
        .iter()
        .filter(|a| {
            let mut b = **a;
            b.constraint.g = 305.0;
            participate(&b).unwrap()
        })
        .count() as f64
        / pop.agents.len() as f64;
    let truth = reform_share - base_share;

    let cfg = reduced_config();
    let data = simulate_population(&spec).unwrap();
    let s = ReformScenario { guarantee: Some(305.0), ..scenario("reform", 0.5) };
    let predicted = |d: &mte_core::data::Dataset| {
        let fit = fit_pipeline(d, &cfg).unwrap();
        let dec = participation_decomposition(&fit.first, &fit.prepared.data, &s, AttributionOrder::default()).unwrap();
        dec.demographics + dec.program
    };
    let point = predicted(&data);
    let mut rng = stream_rng(3, 0);
    let reps: Vec<f64> = (0..30).map(|_| predicted(&resample_clusters(&data, &mut rng))).collect();
    let se = mte_core::numeric::variance(&reps).sqrt();
    assert!(truth > 0.02, "{truth}");
    assert!((point - truth).abs() <= 3.0 * se, "predicted {point}, simulated {truth}, se {se}");
}

#[test]
fn attribution_order_keeps_the_sum() {
    let data = simulate_population(&worlds::homogeneous_world(4, 30, 300)).unwrap();
    let fit = fit_pipeline(&data, &reduced_config()).unwrap();
    let mut s = ReformScenario { guarantee: Some(280.0), ..scenario("mixed", 0.41) };
    s.mean_overrides.insert("age".into(), 40.0);
    let a = participation_decomposition(&fit.first, &fit.prepared.data, &s, AttributionOrder::DemographicsFirst).unwrap();
    let b = participation_decomposition(&fit.first, &fit.prepared.data, &s, AttributionOrder::ProgramFirst).unwrap();
    assert_eq!(a.total(), b.total());
    assert_eq!(a.total(), 0.41 - a.base);
    assert_ne!(a.demographics, b.demographics);
}

#[test]
fn replacement_sample_must_share_schema() {
    let data = simulate_population(&worlds::homogeneous_world(5, 20, 200)).unwrap();
    let fit = fit_pipeline(&data, &reduced_config()).unwrap();
    let mut other = simulate_population(&worlds::homogeneous_world(6, 20, 200)).unwrap();
    let ok = ReformScenario { sample: Some(prepare_scenario_sample(&fit, &other).unwrap()), ..scenario("new sample", 0.5) };
    participation_decomposition(&fit.first, &fit.prepared.data, &ok, AttributionOrder::default()).unwrap();
    other.columns.retain(|c| c.name != "black");
    let bad = ReformScenario { sample: Some(other), ..scenario("broken", 0.5) };
    let err = participation_decomposition(&fit.first, &fit.prepared.data, &bad, AttributionOrder::default()).unwrap_err();
    assert!(err.to_string().contains("black"), "{err}");
}

#[test]
fn reform_at_trough_is_most_negative() {
    let spec = worlds::u_shaped_world(7, 50, 400);
    let data = simulate_population(&spec).unwrap();
    let cfg = reduced_config();
    let fit = fit_pipeline(&data, &cfg).unwrap();
    let grid = cfg.grid();
    let truth = true_mte_curve(&spec, &grid, &OracleOptions::default()).unwrap();
    let k = (0..grid.len()).min_by(|&a, &b| truth.mte[a].total_cmp(&truth.mte[b])).unwrap();
    let at = mte_at_reform(&fit.second, &fit.prepared.data, &scenario("trough", grid[k]), None).unwrap();
    let est = &fit.curve.mte;
    let lowest = est.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(at.mte < est[0] && at.mte < est[est.len() - 1]);
    assert!(at.mte - lowest <= 0.15 * fit.curve.range(), "{} vs min {lowest}", at.mte);
}

#[test]
fn flat_curve_gives_same_response_everywhere() {
    let data = simulate_population(&worlds::homogeneous_world(8, 10, 100)).unwrap();
    let fit = fit_pipeline(&data, &reduced_config()).unwrap();
    let mut m = fit.second.clone();
    m.lambda.iter_mut().for_each(|l| *l = 0.0);
    m.g.iter_mut().enumerate().for_each(|(j, g)| *g = if j == 0 { -8.0 } else { 0.0 });
    for p in [0.25, 0.3, 0.45, 0.6, 0.66] {
        let r = mte_at_reform(&m, &fit.prepared.data, &scenario("flat", p), None).unwrap();
        assert_eq!(r.mte, -8.0);
    }
    let err = mte_at_reform(&m, &fit.prepared.data, &scenario("outside", 0.8), None).unwrap_err();
    assert!(matches!(err, MteError::OutOfSupport { .. }));
}
