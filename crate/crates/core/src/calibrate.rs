//! Maximum-likelihood calibration of the decision and initiation models.
//!
//! Decisions are Bernoulli with the logit acceptance probability; initiation
//! times of accepted gaps follow the cue-linked family. The two likelihoods
//! share no parameters and are fitted separately; the model NLL is their sum.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decision::DecisionParams;
use crate::evaluate::bic;
use crate::initiation::{Family, InitiationParams};
use crate::optim::{hessian, minimize, OptimConfig};
use crate::params::ModelParams;
use crate::{Error, Result};

/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959964;

/// One observed crossing opportunity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub participant_id: String,
    pub scenario_id: String,
    pub gap_index: usize,
    pub gap_size_s: f64,
    pub vehicle_speed_mps: f64,
    pub vehicle_width_m: f64,
    pub theta_dot: f64,
    pub x1: u8,
    pub x2: u8,
    pub accepted: bool,
    pub t_int_s: Option<f64>,
}

impl TrialRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_dot > 0.0) || !self.theta_dot.is_finite() {
            return Err(Error::Domain(format!("theta_dot must be positive, got {}", self.theta_dot)));
        }
        if self.gap_index == 0 {
            return Err(Error::InconsistentSequence("gap_index starts at 1".into()));
        }
        if self.x1 > 1 || self.x2 > 1 {
            return Err(Error::Domain("x1 and x2 are 0/1 indicators".into()));
        }
        match (self.accepted, self.t_int_s) {
            (true, Some(t)) if t.is_finite() => Ok(()),
            (true, _) => Err(Error::MissingInitiationTime(self.gap_index)),
            (false, None) => Ok(()),
            (false, Some(_)) => Err(Error::Domain(
                "initiation time given for a rejected gap".into(),
            )),
        }
    }
}

fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

/// Negative Bernoulli log-likelihood of the observed decisions.
pub fn nll_decision(data: &[TrialRecord], p: &DecisionParams) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let (rho1, rho2) = p.flow_coefficients();
    let mut nll = 0.0;
    for r in data {
        if !(r.theta_dot > 0.0) {
            return Err(Error::Domain(format!("theta_dot must be positive, got {}", r.theta_dot)));
        }
        let v = p.rho0 * r.theta_dot.ln() + rho1 * f64::from(r.x1) + rho2 * f64::from(r.x2) + p.rho3;
        // -ln p = softplus(-v), -ln(1 - p) = softplus(v)
        nll += if r.accepted { softplus(-v) } else { softplus(v) };
    }
    Ok(nll)
}

/// Negative log-likelihood of the initiation times.
///
/// Every record must carry an initiation time. A degenerate link for any
/// record makes the whole objective `+∞`.
pub fn nll_initiation(data: &[TrialRecord], p: &InitiationParams) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut nll = 0.0;
    for (i, r) in data.iter().enumerate() {
        let t = r.t_int_s.ok_or(Error::MissingInitiationTime(i))?;
        let dist = match p.link(r.theta_dot) {
            Ok(d) => d,
            Err(Error::DegenerateLink(_)) => return Ok(f64::INFINITY),
            Err(e) => return Err(e),
        };
        nll -= dist.ln_pdf(t);
    }
    Ok(if nll.is_nan() { f64::INFINITY } else { nll })
}

/// Settings for a multi-start maximum-likelihood fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOptions {
    pub optim: OptimConfig,
    /// Number of starts; the first is the unperturbed initial point.
    pub starts: usize,
    /// Relative size of the Gaussian jitter applied to later starts.
    pub jitter: f64,
    pub seed: u64,
    /// Optimize shifted Wald `b` on the log scale.
    pub log_b: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            optim: OptimConfig::default(),
            starts: 5,
            jitter: 0.1,
            seed: 0,
            log_b: true,
        }
    }
}

/// Per-coordinate map between optimizer space and natural parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    Log,
}

impl Transform {
    fn to_natural(self, v: f64) -> f64 {
        match self {
            Transform::Identity => v,
            Transform::Log => v.exp(),
        }
    }

    fn to_optimizer(self, v: f64) -> f64 {
        match self {
            Transform::Identity => v,
            Transform::Log => v.ln(),
        }
    }
}

/// Outcome of a maximum-likelihood fit, in natural parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    pub neg_log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Wald 95% intervals; absent when the observed information is singular.
    pub ci95: Option<Vec<(f64, f64)>>,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub singular_information: bool,
    /// Final NLL of every start, in start order.
    pub start_nlls: Vec<f64>,
    pub n_obs: usize,
}

impl FitResult {
    pub fn log_likelihood(&self) -> f64 {
        -self.neg_log_likelihood
    }

    pub fn bic(&self) -> f64 {
        bic(self.estimates.len(), self.n_obs, self.log_likelihood()).unwrap_or(f64::NAN)
    }

    /// Spread between the best and worst finite start.
    pub fn start_spread(&self) -> f64 {
        let finite = self.start_nlls.iter().filter(|v| v.is_finite());
        let lo = finite.clone().fold(f64::INFINITY, |a, &b| a.min(b));
        let hi = finite.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        hi - lo
    }

    pub fn covers(&self, index: usize, truth: f64) -> bool {
        self.ci95
            .as_ref()
            .is_some_and(|ci| ci[index].0 <= truth && truth <= ci[index].1)
    }
}

/// Multi-start minimization of `objective` over natural parameters.
///
/// `transforms` fixes the optimizer-space map per coordinate; intervals are
/// computed from the Hessian in natural coordinates.
pub fn fit_mle<F>(
    objective: &F,
    names: &[&str],
    init: &[f64],
    transforms: &[Transform],
    n_obs: usize,
    options: &FitOptions,
) -> Result<FitResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    assert_eq!(init.len(), names.len());
    assert_eq!(init.len(), transforms.len());
    let to_natural = |z: &[f64]| -> Vec<f64> {
        z.iter().zip(transforms).map(|(&v, t)| t.to_natural(v)).collect()
    };
    let in_opt_space = |z: &[f64]| objective(&to_natural(z));
    let z0: Vec<f64> = init.iter().zip(transforms).map(|(&v, t)| t.to_optimizer(v)).collect();
    if !in_opt_space(&z0).is_finite() {
        return Err(Error::NonFiniteObjective);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut inits = vec![z0.clone()];
    for _ in 1..options.starts.max(1) {
        // a perturbed start must be feasible; retry a bounded number of times
        let candidate = (0..50).find_map(|_| {
            let z: Vec<f64> = z0
                .iter()
                .map(|&v| {
                    let e: f64 = rng.sample(StandardNormal);
                    v + options.jitter * v.abs().max(0.5) * e
                })
                .collect();
            in_opt_space(&z).is_finite().then_some(z)
        });
        inits.push(candidate.unwrap_or_else(|| z0.clone()));
    }

    let runs: Vec<_> = inits
        .par_iter()
        .map(|z| minimize(&in_opt_space, z, &options.optim))
        .collect::<Result<Vec<_>>>()?;
    let start_nlls: Vec<f64> = runs.iter().map(|r| r.f).collect();
    let best = runs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.f.total_cmp(&b.1.f).then(a.0.cmp(&b.0)))
        .map(|(_, r)| r)
        .expect("at least one start");

    let estimates = to_natural(&best.x);
    let info = hessian(objective, &estimates);
    let (covariance, ci95, singular) = wald_intervals(&info, &estimates);

    Ok(FitResult {
        names: names.iter().map(|s| s.to_string()).collect(),
        estimates,
        neg_log_likelihood: best.f,
        converged: best.converged,
        iterations: best.iterations,
        ci95,
        covariance,
        singular_information: singular,
        start_nlls,
        n_obs,
    })
}

type Intervals = (Option<Vec<Vec<f64>>>, Option<Vec<(f64, f64)>>, bool);

/// Wald intervals from the observed information matrix.
pub fn wald_intervals(info: &DMatrix<f64>, estimates: &[f64]) -> Intervals {
    let n = estimates.len();
    if info.iter().any(|v| !v.is_finite()) {
        return (None, None, true);
    }
    let sym = (info + info.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if !(max > 0.0) || min <= 1e-7 * max {
        return (None, None, true);
    }
    let Some(cov) = sym.try_inverse() else {
        return (None, None, true);
    };
    let ci = (0..n)
        .map(|i| {
            let half = Z_95 * cov[(i, i)].sqrt();
            (estimates[i] - half, estimates[i] + half)
        })
        .collect();
    let rows = (0..n).map(|i| (0..n).map(|j| cov[(i, j)]).collect()).collect();
    (Some(rows), Some(ci), false)
}

pub fn decision_names(flow_rules: bool) -> Vec<&'static str> {
    if flow_rules {
        vec!["rho0", "rho1", "rho2", "rho3"]
    } else {
        vec!["rho0", "rho3"]
    }
}

pub fn decision_from_vec(v: &[f64], flow_rules: bool) -> DecisionParams {
    if flow_rules {
        DecisionParams::with_flow(v[0], v[1], v[2], v[3])
    } else {
        DecisionParams::without_flow(v[0], v[1])
    }
}

pub fn decision_to_vec(p: &DecisionParams) -> Vec<f64> {
    if p.flow_rules_enabled {
        vec![p.rho0, p.rho1, p.rho2, p.rho3]
    } else {
        vec![p.rho0, p.rho3]
    }
}

pub fn initiation_names(family: Family) -> Vec<&'static str> {
    match family {
        Family::ShiftedWald => vec!["beta1", "beta2", "beta3", "beta4", "b"],
        Family::Gaussian => vec!["beta1", "beta2", "beta3", "beta4"],
    }
}

pub fn initiation_from_vec(v: &[f64], family: Family) -> InitiationParams {
    match family {
        Family::ShiftedWald => InitiationParams::shifted_wald(v[0], v[1], v[2], v[3], v[4]),
        Family::Gaussian => InitiationParams::gaussian(v[0], v[1], v[2], v[3]),
    }
}

pub fn initiation_to_vec(p: &InitiationParams) -> Vec<f64> {
    let mut v = vec![p.beta1, p.beta2, p.beta3, p.beta4];
    if let Some(b) = p.b {
        v.push(b);
    }
    v
}

/// Default decision starting point.
pub fn default_decision_init(flow_rules: bool) -> DecisionParams {
    if flow_rules {
        DecisionParams::with_flow(-1.0, 0.0, 0.0, -5.0)
    } else {
        DecisionParams::without_flow(-1.0, -5.0)
    }
}

/// Starting point for the initiation fit, matched to the data's moments.
///
/// The onset is placed below every observed time so the shifted Wald
/// likelihood is finite at the start.
pub fn default_initiation_init(data: &[TrialRecord], family: Family) -> Result<InitiationParams> {
    let times: Vec<f64> = data
        .iter()
        .enumerate()
        .map(|(i, r)| r.t_int_s.ok_or(Error::MissingInitiationTime(i)))
        .collect::<Result<_>>()?;
    if times.is_empty() {
        return Err(Error::EmptyData);
    }
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let sd = (times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n).sqrt().max(0.05);
    Ok(match family {
        Family::Gaussian => InitiationParams::gaussian(0.0, mean, 0.0, sd),
        Family::ShiftedWald => {
            let min = times.iter().copied().fold(f64::INFINITY, f64::min);
            let tau = min - sd.max(0.5);
            let mu = mean - tau;
            // inverse Gaussian moments: var = mu^3 / b^2, gamma = b / mu
            let b = (mu.powi(3)).sqrt() / sd;
            InitiationParams::shifted_wald(0.0, b / mu, 0.0, tau, b)
        }
    })
}

pub fn fit_decision(data: &[TrialRecord], init: &DecisionParams, options: &FitOptions) -> Result<FitResult> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let flow = init.flow_rules_enabled;
    let objective = |v: &[f64]| nll_decision(data, &decision_from_vec(v, flow)).unwrap_or(f64::INFINITY);
    let names = decision_names(flow);
    let transforms = vec![Transform::Identity; names.len()];
    fit_mle(&objective, &names, &decision_to_vec(init), &transforms, data.len(), options)
}

/// Fit the initiation model to the accepted records of `data`.
pub fn fit_initiation(data: &[TrialRecord], init: &InitiationParams, options: &FitOptions) -> Result<FitResult> {
    let accepted: Vec<TrialRecord> = data.iter().filter(|r| r.accepted).cloned().collect();
    if accepted.is_empty() {
        return Err(Error::EmptyData);
    }
    let family = init.family;
    let objective = |v: &[f64]| {
        if family == Family::ShiftedWald && !(v[4] > 0.0) {
            return f64::INFINITY;
        }
        nll_initiation(&accepted, &initiation_from_vec(v, family)).unwrap_or(f64::INFINITY)
    };
    let names = initiation_names(family);
    let mut transforms = vec![Transform::Identity; names.len()];
    if family == Family::ShiftedWald && options.log_b {
        transforms[4] = Transform::Log;
    }
    fit_mle(&objective, &names, &initiation_to_vec(init), &transforms, accepted.len(), options)
}

/// Component-wise and combined BIC of a full model fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BicSummary {
    pub decision_k: usize,
    pub decision_n: usize,
    pub decision_ll: f64,
    pub decision_bic: f64,
    pub initiation_k: usize,
    pub initiation_n: usize,
    pub initiation_ll: f64,
    pub initiation_bic: f64,
    /// `k_total·ln(n_decision) − 2·(LL_decision + LL_initiation)`.
    pub total_bic: f64,
    pub formula: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFit {
    pub params: ModelParams,
    pub decision: FitResult,
    pub initiation: FitResult,
    pub bic: BicSummary,
}

impl ModelFit {
    pub fn neg_log_likelihood(&self) -> f64 {
        self.decision.neg_log_likelihood + self.initiation.neg_log_likelihood
    }

    pub fn converged(&self) -> bool {
        self.decision.converged && self.initiation.converged
    }
}

/// Fit both model components with default starting points.
pub fn fit_model(data: &[TrialRecord], family: Family, flow_rules: bool, options: &FitOptions) -> Result<ModelFit> {
    let decision = fit_decision(data, &default_decision_init(flow_rules), options)?;
    let accepted: Vec<TrialRecord> = data.iter().filter(|r| r.accepted).cloned().collect();
    let init = default_initiation_init(&accepted, family)?;
    let initiation = fit_initiation(&accepted, &init, options)?;
    let params = ModelParams {
        decision: decision_from_vec(&decision.estimates, flow_rules),
        initiation: initiation_from_vec(&initiation.estimates, family),
    };
    let k_total = decision.estimates.len() + initiation.estimates.len();
    let summary = BicSummary {
        decision_k: decision.estimates.len(),
        decision_n: decision.n_obs,
        decision_ll: decision.log_likelihood(),
        decision_bic: decision.bic(),
        initiation_k: initiation.estimates.len(),
        initiation_n: initiation.n_obs,
        initiation_ll: initiation.log_likelihood(),
        initiation_bic: initiation.bic(),
        total_bic: bic(k_total, decision.n_obs, decision.log_likelihood() + initiation.log_likelihood())?,
        formula: "k_total*ln(n_decision) - 2*(LL_decision + LL_initiation)".into(),
    };
    Ok(ModelFit {
        params,
        decision,
        initiation,
        bic: summary,
    })
}
