//! Reference populations with known marginal responses.

use super::population::*;
use crate::numeric::{norm_cdf, norm_pdf};

/// Default support window for MTE evaluation.
pub const WINDOW: (f64, f64) = (0.25, 0.66);

fn log_z_range() -> Dist {
    Dist::Uniform { lo: 0.05f64.ln(), hi: 0.30f64.ln() }
}

fn instrument() -> InstrumentSpec {
    InstrumentSpec { log_z: log_z_range(), stratified: true, measures: 1, measure_noise_sd: 0.0 }
}

/// Target MTE of the U-shaped world: linear outside the window, a cosine
/// trough inside it (minimum −45 at P ≈ 0.455).
pub fn u_target(p: f64) -> f64 {
    if p < 0.25 {
        -2.0 - 3.0 * p / 0.25
    } else if p > 0.66 {
        -5.0 + 3.0 * (p - 0.66) / 0.34
    } else {
        -5.0 - 40.0 * (1.0 + (std::f64::consts::PI * (p - 0.455) / 0.205).cos()) / 2.0
    }
}

/// World whose MTE is U-shaped in P with a range of about 30 hrs/wk over
/// the window. A fine grid of latent types e_j carries hours response
/// `u_target(1 − Φ(e_j))`; costs are arranged so that type e_j is
/// marginal near P = 1 − Φ(e_j), keeping the participation index close
/// to normal.
pub fn u_shaped_world(seed: u64, states: usize, agents_per_state: usize) -> PopulationSpec {
    let tw = 5.0;
    let g = 300.0;
    let cost_sd = 0.55 * 0.25 * 30.0;
    let types = (0..=24)
        .map(|j| {
            let e = -3.0 + 0.25 * j as f64;
            let d = u_target(1.0 - norm_cdf(e));
            let h0 = d.abs() + 8.0;
            let theta2 = tw / d.abs();
            let dv = g - tw * (2.0 * h0 + d) / 2.0;
            PreferenceType {
                weight: norm_pdf(e),
                theta1: Dist::constant(h0 * theta2 - 10.0),
                theta2: Dist::constant(theta2),
                theta3: Dist::constant(0.0),
                nu: Dist::Normal { mean: dv - (100.0 + 30.0 * e), sd: cost_sd },
                correlation: None,
            }
        })
        .collect();
    PopulationSpec {
        seed,
        states,
        agents_per_state,
        h_max: 60.0,
        cost: CostSpec { kappa0: 179.8, kappa1: 37.0 },
        instrument: instrument(),
        program: ProgramSpec {
            guarantee: Dist::Uniform { lo: 290.0, hi: 310.0 },
            tax_t: Dist::Uniform { lo: 0.49, hi: 0.51 },
            tax_r: Dist::constant(0.0),
        },
        covariates: CovariateSpec { age: Dist::TruncatedNormal { mean: 35.0, sd: 8.0, lo: 16.0, hi: 64.0 }, ..Default::default() },
        wages: WageSpec {
            intercept: 10f64.ln() - 0.000_75 * 35.0 + 0.003 * 0.4,
            age: 0.000_75,
            black: -0.003,
            noise_sd: 0.007,
            ..Default::default()
        },
        nonlabor: NonlaborSpec::default(),
        types,
    }
}

/// Quasilinear world with a common response Δ = −t·w/θ2 = −8 for everyone
/// (w = 10, t = 0.4, θ2 = 0.5). The participation index is exactly
/// normal in the guarantee and log barrier level.
pub fn homogeneous_world(seed: u64, states: usize, agents_per_state: usize) -> PopulationSpec {
    PopulationSpec {
        seed,
        states,
        agents_per_state,
        h_max: 60.0,
        cost: CostSpec { kappa0: 156.0, kappa1: 27.4 },
        instrument: instrument(),
        program: ProgramSpec {
            guarantee: Dist::Uniform { lo: 290.0, hi: 310.0 },
            tax_t: Dist::constant(0.4),
            tax_r: Dist::constant(0.0),
        },
        covariates: CovariateSpec::default(),
        wages: WageSpec::default(),
        nonlabor: NonlaborSpec::default(),
        types: vec![PreferenceType {
            weight: 1.0,
            theta1: Dist::Normal { mean: 5.0, sd: 1.0 },
            theta2: Dist::constant(0.5),
            theta3: Dist::constant(0.0),
            nu: Dist::Normal { mean: 100.0, sd: 25.0 },
            correlation: None,
        }],
    }
}

/// The homogeneous world with an irrelevant instrument: κ1 = 0, a common
/// guarantee, and participation driven by nonlabor income through r.
pub fn irrelevant_instrument_world(seed: u64, states: usize, agents_per_state: usize) -> PopulationSpec {
    let mut s = homogeneous_world(seed, states, agents_per_state);
    s.cost = CostSpec { kappa0: 86.0, kappa1: 0.0 };
    s.program.guarantee = Dist::constant(300.0);
    s.program.tax_r = Dist::constant(0.5);
    s
}

/// Identical budget sets on and off the program: no response anywhere.
pub fn no_program_world(seed: u64, states: usize, agents_per_state: usize) -> PopulationSpec {
    let mut s = homogeneous_world(seed, states, agents_per_state);
    s.program = ProgramSpec { guarantee: Dist::constant(0.0), tax_t: Dist::constant(0.0), tax_r: Dist::constant(0.0) };
    s.cost = CostSpec { kappa0: 0.0, kappa1: 10.0 };
    s.types[0].theta1 = Dist::Normal { mean: 0.0, sd: 3.0 };
    s.types[0].nu = Dist::Uniform { lo: 0.0, hi: 50.0 };
    s
}

/// Two equally likely types: Δ = −5 with low costs, Δ = −20 with high
/// costs, so the true MTE steps down at P = 0.5.
pub fn two_type_world(seed: u64, states: usize, agents_per_state: usize) -> PopulationSpec {
    let mut s = homogeneous_world(seed, states, agents_per_state);
    s.program = ProgramSpec { guarantee: Dist::constant(300.0), tax_t: Dist::constant(0.5), tax_r: Dist::constant(0.0) };
    s.cost = CostSpec { kappa0: 0.0, kappa1: 0.0 };
    s.types = vec![
        PreferenceType {
            weight: 1.0,
            theta1: Dist::constant(10.0),
            theta2: Dist::constant(1.0),
            theta3: Dist::constant(0.0),
            nu: Dist::Uniform { lo: 0.0, hi: 10.0 },
            correlation: None,
        },
        PreferenceType {
            weight: 1.0,
            theta1: Dist::constant(-2.5),
            theta2: Dist::constant(0.25),
            theta3: Dist::constant(0.0),
            nu: Dist::Uniform { lo: 100.0, hi: 110.0 },
            correlation: None,
        },
    ];
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_shape() {
        assert!((u_target(0.455) + 45.0).abs() < 1e-12);
        assert!((u_target(0.25) + 5.0).abs() < 1e-9);
        assert!((u_target(0.66) + 5.0).abs() < 1e-9);
        assert!(u_target(0.0) < 0.0 && u_target(1.0) < 0.0);
    }

    #[test]
    fn worlds_validate() {
        for s in [u_shaped_world(1, 3, 3), homogeneous_world(1, 3, 3), irrelevant_instrument_world(1, 3, 3), no_program_world(1, 3, 3), two_type_world(1, 3, 3)] {
            s.validate().unwrap();
        }
    }
}
