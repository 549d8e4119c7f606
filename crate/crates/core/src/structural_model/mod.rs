//! Static labor-supply model with a welfare program.
//!
//! Utility is quadratic, U = θ1·H − (θ2/2)·H² + Y − (θ3/2)·Y², so optimal
//! hours on each linear budget segment are closed form. The welfare
//! segment has net wage w(1−t), virtual income g+(1−r)n and is cut off
//! at the breakeven point where the benefit reaches zero.

mod locus;
mod oracle;
mod population;
pub mod worlds;

pub use locus::{indifference_locus, indifference_locus_theta1, LocusSolution, PreferencePath, PiecewisePath, Theta1Path};
pub use oracle::{population_moments, true_mte_curve, OracleOptions, PopulationMoments};
pub use population::{
    draw_population, simulate_population, CostSpec, CovariateSpec, Dist, InstrumentSpec, NonlaborSpec,
    Population, PopulationSpec, PreferenceType, ProgramSpec, StateDraw, WageSpec,
};

use serde::{Deserialize, Serialize};

use crate::error::{MteError, Result};

/// Default weekly hours cap.
pub const DEFAULT_H_MAX: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preferences {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
}

impl Preferences {
    pub fn new(theta1: f64, theta2: f64, theta3: f64) -> Result<Self> {
        let p = Preferences { theta1, theta2, theta3 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta1.is_finite() && self.theta2.is_finite() && self.theta3.is_finite()) {
            return Err(MteError::InvalidInput(format!("non-finite preferences {self:?}")));
        }
        if self.theta2 <= 0.0 {
            return Err(MteError::InvalidInput(format!("theta2 must be > 0, got {}", self.theta2)));
        }
        if self.theta3 < 0.0 {
            return Err(MteError::InvalidInput(format!("theta3 must be >= 0, got {}", self.theta3)));
        }
        Ok(())
    }

    pub fn utility(&self, hours: f64, income: f64) -> f64 {
        self.theta1 * hours - 0.5 * self.theta2 * hours * hours + income - 0.5 * self.theta3 * income * income
    }
}

/// Participation cost φ = max(κ0 + κ1·ln z + ν, 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedCost {
    pub z: f64,
    pub kappa0: f64,
    pub kappa1: f64,
    pub nu: f64,
}

impl FixedCost {
    pub fn validate(&self) -> Result<()> {
        if !(self.z > 0.0 && self.z.is_finite()) {
            return Err(MteError::InvalidInput(format!("instrument z must be positive, got {}", self.z)));
        }
        // κ0 = +∞ is allowed and shuts the program.
        if self.kappa0.is_nan() || self.kappa0 == f64::NEG_INFINITY || !self.kappa1.is_finite() {
            return Err(MteError::InvalidInput("cost-index coefficients must be finite".into()));
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(MteError::InvalidInput(format!("nu must be finite and >= 0, got {}", self.nu)));
        }
        Ok(())
    }

    /// m(z) = κ0 + κ1·ln z
    pub fn index(&self) -> f64 {
        self.kappa0 + self.kappa1 * self.z.ln()
    }

    pub fn phi(&self) -> f64 {
        (self.index() + self.nu).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetConstraint {
    pub w: f64,
    pub n: f64,
    pub g: f64,
    pub t: f64,
    pub r: f64,
}

impl BudgetConstraint {
    pub fn validate(&self) -> Result<()> {
        let all = [self.w, self.n, self.g, self.t, self.r];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(MteError::InvalidInput(format!("non-finite budget {self:?}")));
        }
        if self.w <= 0.0 {
            return Err(MteError::InvalidInput(format!("wage must be > 0, got {}", self.w)));
        }
        if self.n < 0.0 || self.g < 0.0 {
            return Err(MteError::InvalidInput("nonlabor income and guarantee must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.t) || !(0.0..=1.0).contains(&self.r) {
            return Err(MteError::InvalidInput("tax rates must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Benefit at zero hours net of the unearned-income tax.
    pub fn net_guarantee(&self) -> f64 {
        self.g - self.r * self.n
    }

    pub fn eligible(&self) -> bool {
        self.net_guarantee() >= 0.0
    }

    /// Hours at which the benefit reaches zero; infinite when t = 0.
    pub fn breakeven(&self) -> f64 {
        if self.t > 0.0 {
            self.net_guarantee() / (self.t * self.w)
        } else {
            f64::INFINITY
        }
    }

    pub fn net_wage(&self, regime: Regime) -> f64 {
        match regime {
            Regime::Off => self.w,
            Regime::On => self.w * (1.0 - self.t),
        }
    }

    pub fn virtual_income(&self, regime: Regime) -> f64 {
        match regime {
            Regime::Off => self.n,
            Regime::On => self.g + (1.0 - self.r) * self.n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Covariates {
    pub age: f64,
    pub black: f64,
    pub family_size: f64,
    pub kids_under6: f64,
    pub unemp_rate: f64,
    /// 0 is the omitted region; 1..=3 map to the region dummies.
    pub region: u8,
    pub fs_guarantee: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub preferences: Preferences,
    pub cost: FixedCost,
    pub constraint: BudgetConstraint,
    pub covariates: Covariates,
    pub cluster_id: u32,
    pub h_max: f64,
}

impl Agent {
    pub fn validate(&self) -> Result<()> {
        self.preferences.validate()?;
        self.cost.validate()?;
        self.constraint.validate()?;
        if !(self.h_max > 0.0 && self.h_max.is_finite()) {
            return Err(MteError::InvalidInput(format!("h_max must be > 0, got {}", self.h_max)));
        }
        let c = &self.covariates;
        let cov = [c.age, c.black, c.family_size, c.kids_under6, c.unemp_rate, c.fs_guarantee];
        if cov.iter().any(|v| !v.is_finite()) || c.region > 3 {
            return Err(MteError::InvalidInput("covariates must be finite, region in 0..=3".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeChoice {
    pub utility: f64,
    pub hours: f64,
    /// False when the agent cannot receive a nonnegative benefit; the
    /// on-welfare request then returns off-welfare values.
    pub eligible: bool,
}

/// Maximizes U(H, w̃H + ŷ) over H ∈ [0, cap]. Returns (hours, utility).
fn best_on_segment(p: &Preferences, net_wage: f64, income: f64, cap: f64) -> (f64, f64) {
    let u = |h: f64| p.utility(h, net_wage * h + income);
    let interior = (p.theta1 + net_wage * (1.0 - p.theta3 * income)) / (p.theta2 + p.theta3 * net_wage * net_wage);
    let clamped = interior.clamp(0.0, cap.max(0.0));
    let mut best = (clamped, u(clamped));
    for h in [0.0, cap.max(0.0)] {
        let v = u(h);
        if v > best.1 {
            best = (h, v);
        }
    }
    best
}

/// Utility-maximizing hours on one linear budget segment.
pub fn optimal_hours(prefs: &Preferences, net_wage: f64, virtual_income: f64, h_cap: f64) -> Result<f64> {
    prefs.validate()?;
    if !(net_wage.is_finite() && virtual_income.is_finite() && h_cap.is_finite()) {
        return Err(MteError::InvalidInput("non-finite budget segment".into()));
    }
    if net_wage < 0.0 || virtual_income < 0.0 || h_cap <= 0.0 {
        return Err(MteError::InvalidInput(format!(
            "need net_wage >= 0, virtual_income >= 0, h_cap > 0 (got {net_wage}, {virtual_income}, {h_cap})"
        )));
    }
    Ok(best_on_segment(prefs, net_wage, virtual_income, h_cap).0)
}

/// Maximized utility and hours in one regime, excluding the fixed cost.
pub fn regime_utility(agent: &Agent, regime: Regime) -> Result<RegimeChoice> {
    agent.validate()?;
    Ok(regime_choice(agent, regime))
}

fn regime_choice(agent: &Agent, regime: Regime) -> RegimeChoice {
    let bc = &agent.constraint;
    let p = &agent.preferences;
    let off = || {
        let (hours, utility) = best_on_segment(p, bc.w, bc.n, agent.h_max);
        (hours, utility)
    };
    match regime {
        Regime::Off => {
            let (hours, utility) = off();
            RegimeChoice { utility, hours, eligible: bc.eligible() }
        }
        Regime::On => {
            if !bc.eligible() {
                let (hours, utility) = off();
                return RegimeChoice { utility, hours, eligible: false };
            }
            let cap = bc.breakeven().min(agent.h_max);
            let (hours, utility) = best_on_segment(p, bc.net_wage(Regime::On), bc.virtual_income(Regime::On), cap);
            RegimeChoice { utility, hours, eligible: true }
        }
    }
}

/// dV = V_on − V_off.
pub fn utility_gain(agent: &Agent) -> Result<f64> {
    agent.validate()?;
    Ok(regime_choice(agent, Regime::On).utility - regime_choice(agent, Regime::Off).utility)
}

/// Participates iff eligible and dV − φ ≥ 0 (ties participate).
pub fn participate(agent: &Agent) -> Result<bool> {
    Ok(simulate_agent(agent)?.participates)
}

/// Hours on welfare minus hours off welfare.
pub fn delta(agent: &Agent) -> Result<f64> {
    Ok(simulate_agent(agent)?.delta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOutcome {
    pub hours: f64,
    pub participates: bool,
    pub eligible: bool,
    pub delta: f64,
    pub utility_gain: f64,
    pub phi: f64,
}

pub fn simulate_agent(agent: &Agent) -> Result<SimOutcome> {
    agent.validate()?;
    Ok(outcome_unchecked(agent))
}

pub(crate) fn outcome_unchecked(agent: &Agent) -> SimOutcome {
    let on = regime_choice(agent, Regime::On);
    let off = regime_choice(agent, Regime::Off);
    let dv = on.utility - off.utility;
    let phi = agent.cost.phi();
    let participates = on.eligible && dv - phi >= 0.0;
    SimOutcome {
        hours: if participates { on.hours } else { off.hours },
        participates,
        eligible: on.eligible,
        delta: on.hours - off.hours,
        utility_gain: dv,
        phi,
    }
}
