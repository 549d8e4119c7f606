//! Brute-force ground truth: population moments and the true MTE curve.

use rayon::prelude::*;

use super::population::{draw_population, Population, PopulationSpec};
use super::{outcome_unchecked, Agent};
use crate::curve::{interpolate, MteCurve};
use crate::error::{MteError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationMoments {
    pub participation_rate: f64,
    /// Mean Δ among participants; `None` when nobody participates.
    pub tot: Option<f64>,
    /// Mean of Δ·P over the population.
    pub mean_effect: f64,
}

pub fn population_moments(spec: &PopulationSpec) -> Result<PopulationMoments> {
    let pop = draw_population(spec)?;
    Ok(moments_of(&pop.agents))
}

pub(crate) fn moments_of(agents: &[Agent]) -> PopulationMoments {
    let (count, sum) = agents
        .par_iter()
        .map(|a| {
            let o = outcome_unchecked(a);
            if o.participates {
                (1usize, o.delta)
            } else {
                (0, 0.0)
            }
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0usize, 0.0f64), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    let n = agents.len() as f64;
    PopulationMoments {
        participation_rate: count as f64 / n,
        tot: if count > 0 { Some(sum / count as f64) } else { None },
        mean_effect: sum / n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Evaluate every agent at the population's reference budget
    /// (geometric-mean wage, mean nonlabor income and program
    /// parameters) and reference instrument (geometric mean). The curve
    /// is then the MTE at the mean covariate point that the estimator
    /// reports.
    pub reference_point: bool,
    /// Participation-rate step between successive κ0 grid points.
    pub step: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { reference_point: true, step: 0.01 }
    }
}

fn at_reference(pop: &Population) -> Vec<Agent> {
    let n = pop.agents.len() as f64;
    let mean = |f: &dyn Fn(&Agent) -> f64| pop.agents.iter().map(f).sum::<f64>() / n;
    let lw = mean(&|a| a.constraint.w.ln());
    let nn = mean(&|a| a.constraint.n);
    let g = mean(&|a| a.constraint.g);
    let t = mean(&|a| a.constraint.t);
    let r = mean(&|a| a.constraint.r);
    let lz = mean(&|a| a.cost.z.ln());
    pop.agents
        .iter()
        .map(|a| {
            let mut b = *a;
            b.constraint.w = lw.exp();
            b.constraint.n = nn;
            b.constraint.g = g;
            b.constraint.t = t;
            b.constraint.r = r;
            b.cost.z = lz.exp();
            b
        })
        .collect()
}

/// True MTE dΔ̃/dP from a κ0 sweep with common random numbers.
///
/// An agent participates at intercept κ0 iff she is eligible, dV ≥ 0 and
/// κ0 ≤ τ = dV − κ1·ln z − ν, so the whole sweep is one sort of τ. The κ0
/// grid sits at the order statistics of τ spaced `step` apart in P, and
/// the derivative is the centered difference of Δ̃ over that grid.
pub fn true_mte_curve(spec: &PopulationSpec, p_grid: &[f64], options: &OracleOptions) -> Result<MteCurve> {
    if !(options.step > 0.0 && options.step < 0.5) {
        return Err(MteError::Config("oracle step must lie in (0, 0.5)".into()));
    }
    let pop = draw_population(spec)?;
    let agents = if options.reference_point { at_reference(&pop) } else { pop.agents };
    let mut keyed: Vec<(f64, f64)> = agents
        .par_iter()
        .map(|a| {
            let o = outcome_unchecked(a);
            let tau = if o.eligible && o.utility_gain >= 0.0 {
                o.utility_gain - a.cost.kappa1 * a.cost.z.ln() - a.cost.nu
            } else {
                f64::NEG_INFINITY
            };
            (tau, o.delta)
        })
        .collect();
    // Descending threshold; stable sort keeps ties in agent order.
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0));
    let n = keyed.len();
    let reachable = keyed.iter().take_while(|k| k.0 > f64::NEG_INFINITY).count();
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    for k in &keyed {
        cum.push(cum.last().unwrap() + k.1);
    }
    let p_max = reachable as f64 / n as f64;
    let steps = (p_max / options.step).floor() as usize;
    if steps < 2 {
        return Err(MteError::OutOfSupport { value: p_grid.first().copied().unwrap_or(f64::NAN), lo: 0.0, hi: p_max });
    }
    let counts: Vec<usize> = (0..=steps).map(|k| ((k as f64 * options.step * n as f64).round() as usize).min(reachable)).collect();
    let mut ps = Vec::with_capacity(steps);
    let mut ms = Vec::with_capacity(steps);
    for k in 1..steps {
        let (a, b) = (counts[k - 1], counts[k + 1]);
        if b > a {
            ps.push(counts[k] as f64 / n as f64);
            ms.push((cum[b] - cum[a]) / (b - a) as f64);
        }
    }
    let (lo, hi) = (ps[0], ps[ps.len() - 1]);
    let mut mte = Vec::with_capacity(p_grid.len());
    for &p in p_grid {
        match interpolate(&ps, &ms, p) {
            Some(v) => mte.push(v),
            None => return Err(MteError::OutOfSupport { value: p, lo, hi }),
        }
    }
    Ok(MteCurve { grid: p_grid.to_vec(), mte, lo: None, hi: None, x_at: vec![], window: (lo, hi) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::linspace;
    use crate::structural_model::worlds;
    use crate::structural_model::{CostSpec, Dist};

    #[test]
    fn uniform_cost_gives_half_participation() {
        // dV = 5 for everyone, φ ~ U(0, 10)
        let mut s = worlds::homogeneous_world(11, 20, 5000);
        s.program.guarantee = Dist::constant(5.0);
        s.program.tax_t = Dist::constant(0.0);
        s.cost = CostSpec { kappa0: 0.0, kappa1: 0.0 };
        s.types[0].nu = Dist::Uniform { lo: 0.0, hi: 10.0 };
        let m = population_moments(&s).unwrap();
        let se = (0.25f64 / 100_000.0).sqrt();
        assert!((m.participation_rate - 0.5).abs() < 4.0 * se, "{}", m.participation_rate);
    }

    #[test]
    fn homogeneous_identity() {
        let s = worlds::homogeneous_world(12, 20, 500);
        let m = population_moments(&s).unwrap();
        assert!((m.tot.unwrap() + 8.0).abs() < 1e-9);
        assert!((m.mean_effect + 8.0 * m.participation_rate).abs() < 1e-9);
    }

    #[test]
    fn nobody_participates_gives_missing_tot() {
        let mut s = worlds::homogeneous_world(12, 4, 50);
        s.cost.kappa0 = f64::INFINITY;
        let m = population_moments(&s).unwrap();
        assert_eq!(m.participation_rate, 0.0);
        assert_eq!(m.tot, None);
        assert_eq!(m.mean_effect, 0.0);
    }

    #[test]
    fn homogeneous_curve_is_flat() {
        let s = worlds::homogeneous_world(13, 50, 1000);
        let c = true_mte_curve(&s, &linspace(0.25, 0.66, 20), &OracleOptions::default()).unwrap();
        assert!(c.mte.iter().all(|v| (v + 8.0).abs() < 1e-9));
    }

    #[test]
    fn no_program_curve_is_zero() {
        let s = worlds::no_program_world(14, 20, 1000);
        let c = true_mte_curve(&s, &linspace(0.2, 0.8, 13), &OracleOptions::default()).unwrap();
        assert!(c.mte.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn two_type_curve_steps() {
        let s = worlds::two_type_world(15, 20, 2000);
        let grid = linspace(0.05, 0.95, 19);
        let c = true_mte_curve(&s, &grid, &OracleOptions::default()).unwrap();
        for (p, v) in grid.iter().zip(&c.mte) {
            if *p < 0.48 {
                assert!((v + 5.0).abs() < 1e-6, "p={p} v={v}");
            } else if *p > 0.52 {
                assert!((v + 20.0).abs() < 1e-6, "p={p} v={v}");
            }
        }
    }

    #[test]
    fn out_of_range_request_lists_support() {
        let s = worlds::two_type_world(15, 4, 100);
        match true_mte_curve(&s, &[0.999], &OracleOptions::default()) {
            Err(MteError::OutOfSupport { lo, hi, .. }) => assert!(lo > 0.0 && hi < 1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn u_world_has_wide_range() {
        let s = worlds::u_shaped_world(16, 50, 2000);
        let c = true_mte_curve(&s, &linspace(0.25, 0.66, 42), &OracleOptions::default()).unwrap();
        let r = c.range();
        assert!(r > 25.0 && r < 36.0, "range {r}");
        let mid = c.interpolate(0.455).unwrap();
        let ends = c.mte[0].max(c.mte[41]);
        assert!(mid < ends - 20.0, "U shape expected: mid {mid} ends {ends}");
    }
}
