//! Indifference locus dV(θ) = φ along a one-dimensional preference path.

use super::{outcome_unchecked, Agent, BudgetConstraint, Covariates, FixedCost, Preferences};
use crate::error::{MteError, Result};

/// One-parameter family of preferences θ(s), s ∈ [lo, hi].
pub trait PreferencePath {
    fn at(&self, s: f64) -> Preferences;
    fn domain(&self) -> (f64, f64);
}

/// θ1 varies over [lo, hi] with θ2, θ3 held fixed.
#[derive(Debug, Clone, Copy)]
pub struct Theta1Path {
    pub theta2: f64,
    pub theta3: f64,
    pub lo: f64,
    pub hi: f64,
}

impl PreferencePath for Theta1Path {
    fn at(&self, s: f64) -> Preferences {
        Preferences { theta1: s, theta2: self.theta2, theta3: self.theta3 }
    }
    fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

/// Piecewise-linear path through preference nodes placed at s = 0, 1, 2, ...
#[derive(Debug, Clone)]
pub struct PiecewisePath {
    pub nodes: Vec<Preferences>,
}

impl PreferencePath for PiecewisePath {
    fn at(&self, s: f64) -> Preferences {
        let last = self.nodes.len() - 1;
        let s = s.clamp(0.0, last as f64);
        let k = (s.floor() as usize).min(last.saturating_sub(1));
        let u = s - k as f64;
        let (a, b) = (self.nodes[k], self.nodes[(k + 1).min(last)]);
        Preferences {
            theta1: a.theta1 + u * (b.theta1 - a.theta1),
            theta2: a.theta2 + u * (b.theta2 - a.theta2),
            theta3: a.theta3 + u * (b.theta3 - a.theta3),
        }
    }
    fn domain(&self) -> (f64, f64) {
        (0.0, (self.nodes.len().max(1) - 1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocusSolution {
    pub phi: f64,
    /// All bracketed roots in increasing order; empty means no solution
    /// on the search interval.
    pub roots: Vec<f64>,
}

impl LocusSolution {
    pub fn has_solution(&self) -> bool {
        !self.roots.is_empty()
    }
}

fn gain(constraint: &BudgetConstraint, h_max: f64, p: Preferences) -> f64 {
    let a = Agent {
        preferences: p,
        cost: FixedCost { z: 1.0, kappa0: 0.0, kappa1: 0.0, nu: 0.0 },
        constraint: *constraint,
        covariates: Covariates::default(),
        cluster_id: 0,
        h_max,
    };
    outcome_unchecked(&a).utility_gain
}

/// Solves dV(θ(s)) = φ for each φ by scanning `scan_points` cells of the
/// path domain and bisecting every sign change.
pub fn indifference_locus<P: PreferencePath>(
    constraint: &BudgetConstraint,
    h_max: f64,
    path: &P,
    phi_grid: &[f64],
    scan_points: usize,
) -> Result<Vec<LocusSolution>> {
    constraint.validate()?;
    if phi_grid.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(MteError::InvalidInput("phi values must be finite and >= 0".into()));
    }
    if !(h_max > 0.0) || scan_points < 2 {
        return Err(MteError::InvalidInput("need h_max > 0 and at least 2 scan points".into()));
    }
    let (lo, hi) = path.domain();
    for k in 0..=scan_points {
        path.at(lo + (hi - lo) * k as f64 / scan_points as f64).validate()?;
    }
    let s: Vec<f64> = (0..=scan_points).map(|k| lo + (hi - lo) * k as f64 / scan_points as f64).collect();
    let dv: Vec<f64> = s.iter().map(|&x| gain(constraint, h_max, path.at(x))).collect();
    Ok(phi_grid
        .iter()
        .map(|&phi| {
            let f = |x: f64| gain(constraint, h_max, path.at(x)) - phi;
            let mut roots = Vec::new();
            for k in 0..scan_points {
                let (fa, fb) = (dv[k] - phi, dv[k + 1] - phi);
                if fa == 0.0 {
                    roots.push(s[k]);
                } else if fa * fb < 0.0 {
                    let (mut a, mut b, mut va) = (s[k], s[k + 1], fa);
                    for _ in 0..200 {
                        let m = 0.5 * (a + b);
                        if m <= a || m >= b {
                            break;
                        }
                        let vm = f(m);
                        if vm == 0.0 {
                            a = m;
                            b = m;
                            break;
                        }
                        if (vm < 0.0) == (va < 0.0) {
                            a = m;
                            va = vm;
                        } else {
                            b = m;
                        }
                    }
                    roots.push(0.5 * (a + b));
                }
            }
            if dv[scan_points] - phi == 0.0 {
                roots.push(s[scan_points]);
            }
            LocusSolution { phi, roots }
        })
        .collect())
}

/// Locus over θ1 ∈ [lo, hi] with θ2, θ3 fixed (typically at population
/// medians).
pub fn indifference_locus_theta1(
    constraint: &BudgetConstraint,
    h_max: f64,
    theta2: f64,
    theta3: f64,
    theta1_range: (f64, f64),
    phi_grid: &[f64],
) -> Result<Vec<LocusSolution>> {
    let path = Theta1Path { theta2, theta3, lo: theta1_range.0, hi: theta1_range.1 };
    indifference_locus(constraint, h_max, &path, phi_grid, 2000)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bc() -> BudgetConstraint {
        BudgetConstraint { w: 10.0, n: 20.0, g: 300.0, t: 0.5, r: 0.0 }
    }

    #[test]
    fn roots_reproduce_phi() {
        let phis = [5.0, 20.0, 80.0, 150.0, 250.0];
        let sols = indifference_locus_theta1(&bc(), 60.0, 0.5, 0.0, (-20.0, 40.0), &phis).unwrap();
        for s in &sols {
            assert_eq!(s.roots.len(), 1, "phi {}", s.phi);
            let dv = gain(&bc(), 60.0, Preferences { theta1: s.roots[0], theta2: 0.5, theta3: 0.0 });
            assert!((dv - s.phi).abs() < 1e-8, "{dv} vs {}", s.phi);
        }
    }

    #[test]
    fn unattainable_phi_has_no_solution() {
        let sols = indifference_locus_theta1(&bc(), 60.0, 0.5, 0.0, (-20.0, 40.0), &[1e4]).unwrap();
        assert!(!sols[0].has_solution());
    }

    #[test]
    fn negative_phi_rejected() {
        assert!(indifference_locus_theta1(&bc(), 60.0, 0.5, 0.0, (-20.0, 40.0), &[-1.0]).is_err());
    }

    #[test]
    fn non_monotone_path_alternates() {
        // Along θ1 the gain falls; raising θ2 in the middle piece cuts hours
        // and brings it back up, so dV goes down, up, down.
        let path = PiecewisePath {
            nodes: vec![
                Preferences { theta1: -5.0, theta2: 0.5, theta3: 0.0 },
                Preferences { theta1: 10.0, theta2: 0.5, theta3: 0.0 },
                Preferences { theta1: 10.0, theta2: 3.0, theta3: 0.0 },
                Preferences { theta1: 80.0, theta2: 3.0, theta3: 0.0 },
            ],
        };
        let bc = bc();
        let dv = |s: f64| gain(&bc, 60.0, path.at(s));
        let (d1, d2) = (dv(1.0), dv(2.0));
        assert!(d2 > d1);
        let phi = 0.5 * (d1 + d2);
        let sol = &indifference_locus(&bc, 60.0, &path, &[phi], 3000).unwrap()[0];
        assert_eq!(sol.roots.len(), 3, "{:?}", sol.roots);
        for r in &sol.roots {
            assert!((dv(*r) - phi).abs() < 1e-8);
        }
        // participation (dV ≥ φ) alternates across the roots
        let mids = [0.0, 0.5 * (sol.roots[0] + sol.roots[1]), 0.5 * (sol.roots[1] + sol.roots[2]), 3.0];
        let pattern: Vec<bool> = mids.iter().map(|&s| dv(s) >= phi).collect();
        assert_eq!(pattern, vec![true, false, true, false]);
    }
}
