//! Flow-aware binary gap acceptance.
//!
//! A gap is scored with the utility `V = ρ₀·ln θ̇ + ρ₁·X₁ + ρ₂·X₂ + ρ₃` and
//! accepted with logistic probability. `X₁` flags a cue at least as strong
//! as the strongest one already rejected, `X₂` flags a gap whose successor
//! carries a weaker cue.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Everything the decision model needs to know about one traffic gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapContext {
    /// 1-based position of the gap in the traffic stream.
    pub index: usize,
    pub theta_dot_current: f64,
    pub theta_dot_max_rejected: Option<f64>,
    pub theta_dot_following: Option<f64>,
}

impl GapContext {
    pub fn new(index: usize, theta_dot_current: f64) -> Self {
        Self {
            index,
            theta_dot_current,
            theta_dot_max_rejected: None,
            theta_dot_following: None,
        }
    }

    pub fn with_max_rejected(mut self, cue: Option<f64>) -> Self {
        self.theta_dot_max_rejected = cue;
        self
    }

    pub fn with_following(mut self, cue: Option<f64>) -> Self {
        self.theta_dot_following = cue;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.index == 0 {
            return Err(Error::InconsistentSequence("gap indices start at 1".into()));
        }
        let positive = |c: f64| c > 0.0 && c.is_finite();
        if !positive(self.theta_dot_current)
            || self.theta_dot_max_rejected.is_some_and(|c| !positive(c))
            || self.theta_dot_following.is_some_and(|c| !positive(c))
        {
            return Err(Error::Domain(format!(
                "gap {} carries a non-positive collision cue",
                self.index
            )));
        }
        Ok(())
    }
}

/// Coefficients of the decision utility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionParams {
    pub rho0: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    pub flow_rules_enabled: bool,
}

impl DecisionParams {
    /// Model with the two flow rules switched on.
    pub fn with_flow(rho0: f64, rho1: f64, rho2: f64, rho3: f64) -> Self {
        Self {
            rho0,
            rho1,
            rho2,
            rho3,
            flow_rules_enabled: true,
        }
    }

    /// Two-coefficient logit on `ln θ̇`.
    pub fn without_flow(rho0: f64, rho3: f64) -> Self {
        Self {
            rho0,
            rho1: 0.0,
            rho2: 0.0,
            rho3,
            flow_rules_enabled: false,
        }
    }

    /// Effective (ρ₁, ρ₂); both zero when the flow rules are off.
    pub fn flow_coefficients(&self) -> (f64, f64) {
        if self.flow_rules_enabled {
            (self.rho1, self.rho2)
        } else {
            (0.0, 0.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.rho0, self.rho1, self.rho2, self.rho3]
            .iter()
            .all(|c| c.is_finite())
        {
            Ok(())
        } else {
            Err(Error::InvalidParams("decision coefficients must be finite".into()))
        }
    }
}

/// Rejection-memory rule: the current cue is at least the largest rejected one.
pub fn rule_x1(ctx: &GapContext) -> u8 {
    match ctx.theta_dot_max_rejected {
        Some(mr) if ctx.theta_dot_current >= mr => 1,
        _ => 0,
    }
}

/// Look-ahead rule: the next gap offers a cue no stronger than this one.
pub fn rule_x2(ctx: &GapContext) -> u8 {
    match ctx.theta_dot_following {
        Some(f) if ctx.theta_dot_current >= f => 1,
        _ => 0,
    }
}

pub fn utility(theta_dot: f64, x1: u8, x2: u8, p: &DecisionParams) -> Result<f64> {
    if !(theta_dot > 0.0) {
        return Err(Error::Domain(format!(
            "utility needs a positive cue, got {theta_dot}"
        )));
    }
    let (rho1, rho2) = p.flow_coefficients();
    Ok(p.rho0 * theta_dot.ln() + rho1 * f64::from(x1) + rho2 * f64::from(x2) + p.rho3)
}

/// Numerically stable `1 / (1 + e^{-v})`.
pub fn logistic(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Conditional probability of accepting this gap given it is reached.
pub fn gap_acceptance_prob(ctx: &GapContext, p: &DecisionParams) -> Result<f64> {
    ctx.validate()?;
    let v = utility(ctx.theta_dot_current, rule_x1(ctx), rule_x2(ctx), p)?;
    Ok(logistic(v))
}

/// Unconditional probability of crossing in each gap.
///
/// `P_n = p_n · (1 − Σ_{k<n} P_k)`: the gap-`n` acceptance probability
/// weighted by the mass that has not crossed yet. The residual
/// `1 − Σ P_n` is the probability of never crossing.
pub fn unconditional_gap_probs(gaps: &[GapContext], p: &DecisionParams) -> Result<Vec<f64>> {
    let conditional = gaps
        .iter()
        .enumerate()
        .map(|(i, g)| {
            if g.index != i + 1 {
                return Err(Error::InconsistentSequence(format!(
                    "expected gap index {}, found {}",
                    i + 1,
                    g.index
                )));
            }
            gap_acceptance_prob(g, p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(survival_weighted(&conditional))
}

/// Turn conditional acceptance probabilities into unconditional ones.
pub fn survival_weighted(conditional: &[f64]) -> Vec<f64> {
    let mut remaining = 1.0;
    conditional
        .iter()
        .map(|&p| {
            let uncond = p * remaining;
            remaining -= uncond;
            uncond
        })
        .collect()
}

/// Fill in the rejection history a pedestrian carries when reaching each gap
/// having rejected every earlier one.
pub fn with_rejection_history(gaps: &[GapContext]) -> Vec<GapContext> {
    let mut max_rejected: Option<f64> = None;
    gaps.iter()
        .map(|g| {
            let ctx = g.with_max_rejected(max_rejected);
            max_rejected = Some(max_rejected.map_or(g.theta_dot_current, |m| m.max(g.theta_dot_current)));
            ctx
        })
        .collect()
}
