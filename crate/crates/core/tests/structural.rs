use mte_core::numeric::norm_cdf;
use mte_core::rng::stream_rng;
use mte_core::structural_model::{draw_population, population_moments, simulate_population, worlds};
use rand::Rng;
use rand_distr::StandardNormal;

/// In the homogeneous world utility is quasilinear with θ2 = 0.5, w = 10
/// and t = 0.4, so dV = g − 8θ1 − 64 and a state's agents participate when
/// g − 8θ1 − 64 − κ0 − κ1·ln z − ν ≥ 0. The participation integral is
/// estimated by plain Monte Carlo over states, θ1 and ν.
#[test]
fn participation_share_matches_integral() {
    let spec = worlds::homogeneous_world(17, 50, 2000);
    let pop = draw_population(&spec).unwrap();
    assert!(pop.agents.iter().all(|a| (a.constraint.w - 10.0).abs() < 1e-9));
    let data = simulate_population(&spec).unwrap();
    let n = data.n() as f64;
    let share = data.participation().iter().sum::<f64>() / n;

    let mut rng = stream_rng(4242, 0);
    let draws = 1_000_000;
    let mut hits = 0usize;
    for _ in 0..draws {
        let s = &pop.states[rng.random_range(0..pop.states.len())];
        let theta1 = 5.0 + rng.sample::<f64, _>(StandardNormal);
        let nu = (100.0 + 25.0 * rng.sample::<f64, _>(StandardNormal)).max(0.0);
        let dv = s.g - 8.0 * theta1 - 64.0;
        let phi = (spec.cost.kappa0 + spec.cost.kappa1 * s.log_z + nu).max(0.0);
        hits += (dv >= phi) as usize;
    }
    let integral = hits as f64 / draws as f64;
    let se = (integral * (1.0 - integral) / n).sqrt();
    assert!((share - integral).abs() <= 3.0 * se, "share {share}, integral {integral}, se {se}");
}

/// The same integral in closed form: θ1 and ν are independent normals, so
/// the participation probability in a state is Φ(mean / sd).
#[test]
fn participation_integral_has_closed_form() {
    let spec = worlds::homogeneous_world(18, 50, 10);
    let pop = draw_population(&spec).unwrap();
    let sd = (64.0f64 + 625.0).sqrt();
    let analytic: f64 = pop
        .states
        .iter()
        .map(|s| norm_cdf((s.g - 8.0 * 5.0 - 64.0 - spec.cost.kappa0 - spec.cost.kappa1 * s.log_z - 100.0) / sd))
        .sum::<f64>()
        / pop.states.len() as f64;
    let big = worlds::homogeneous_world(18, 50, 4000);
    let rate = population_moments(&big).unwrap().participation_rate;
    let se = (analytic * (1.0 - analytic) / 200_000.0).sqrt();
    assert!((rate - analytic).abs() <= 3.0 * se, "{rate} vs {analytic}");
}

#[test]
fn homogeneous_response_scales_with_participation() {
    let m = population_moments(&worlds::homogeneous_world(19, 20, 500)).unwrap();
    assert!((m.tot.unwrap() + 8.0).abs() < 1e-9);
    assert!((m.mean_effect + 8.0 * m.participation_rate).abs() < 1e-9);
}
