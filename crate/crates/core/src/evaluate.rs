//! Goodness-of-fit and model selection statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::calibrate::{nll_decision, nll_initiation, TrialRecord};
use crate::data::condition_key;
use crate::decision::{logistic, utility};
use crate::params::ModelParams;
use crate::{Error, Result};

/// Summary statistics of one model against one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodnessReport {
    pub bic: f64,
    pub ks_d: f64,
    pub ks_p: f64,
    /// Absent when fewer than two conditions differ in observed rate.
    pub r_squared: Option<f64>,
    pub rmse: f64,
    pub n_obs: usize,
}

/// Bayesian information criterion `k·ln n − 2·LL`.
pub fn bic(k: usize, n: usize, log_likelihood: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidCounts("sample size must be at least 1".into()));
    }
    Ok(k as f64 * (n as f64).ln() - 2.0 * log_likelihood)
}

/// The sample size that makes `k·ln n − 2·LL` equal a reported BIC.
pub fn implied_sample_size(k: usize, log_likelihood: f64, reported_bic: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidCounts("cannot recover n without parameters".into()));
    }
    Ok(((reported_bic + 2.0 * log_likelihood) / k as f64).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub d: f64,
    pub p: f64,
}

/// Asymptotic Kolmogorov survival function `Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        // the alternating series is not yet convergent; Q is 1 to double precision here
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn sorted(sample: &[f64]) -> Vec<f64> {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let a = sorted(a);
    let b = sorted(b);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = n * m / (n + m);
    Ok(KsResult {
        d,
        p: kolmogorov_sf(ne.sqrt() * d),
    })
}

/// One-sample Kolmogorov–Smirnov test against a model CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(a: &[f64], model_cdf: F) -> Result<KsResult> {
    if a.is_empty() {
        return Err(Error::EmptySample);
    }
    let a = sorted(a);
    let n = a.len() as f64;
    let mut d: f64 = 0.0;
    let mut prev = 0.0;
    for (i, &x) in a.iter().enumerate() {
        let f = model_cdf(x);
        if !(-1e-12..=1.0 + 1e-12).contains(&f) || f < prev - 1e-12 {
            return Err(Error::NonMonotoneCdf(x));
        }
        prev = f;
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(KsResult {
        d,
        p: kolmogorov_sf(n.sqrt() * d),
    })
}

fn check_pair(observed: &[f64], predicted: &[f64]) -> Result<()> {
    if observed.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: observed.len(),
            right: predicted.len(),
        });
    }
    if observed.len() < 2 {
        return Err(Error::InvalidCounts("need at least two observations".into()));
    }
    Ok(())
}

/// Coefficient of determination `1 − SS_res / SS_tot`; may be negative.
pub fn r_squared(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(observed, predicted)?;
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let ss_tot: f64 = observed.iter().map(|o| (o - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let ss_res: f64 = observed.iter().zip(predicted).map(|(o, p)| (o - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn rmse(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(observed, predicted)?;
    let mse = observed.iter().zip(predicted).map(|(o, p)| (o - p).powi(2)).sum::<f64>() / observed.len() as f64;
    Ok(mse.sqrt())
}

/// Observed and predicted acceptance rate of one group of trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub condition: String,
    pub n: usize,
    pub observed: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub report: GoodnessReport,
    pub decision_ll: f64,
    pub initiation_ll: f64,
    pub conditions: Vec<ConditionRow>,
}

/// Single-gap trials group by speed and gap; trials from sequences also by
/// the two rule indicators, so each group shares one model probability.
fn group_label(r: &TrialRecord, sequences: bool) -> String {
    if sequences {
        format!("{}_x1{}_x2{}", condition_key(r), r.x1, r.x2)
    } else {
        condition_key(r)
    }
}

/// Score fixed parameters against trial data.
///
/// BIC uses the total parameter count and the number of decision trials.
/// K-S compares accepted initiation times with the model mixture over the
/// same cues; R² and RMSE compare per-condition acceptance rates.
pub fn assess(data: &[TrialRecord], params: &ModelParams) -> Result<Assessment> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    params.validate()?;
    let accepted: Vec<&TrialRecord> = data.iter().filter(|r| r.accepted).collect();
    if accepted.is_empty() {
        return Err(Error::EmptySample);
    }
    let decision_ll = -nll_decision(data, &params.decision)?;
    let owned: Vec<TrialRecord> = accepted.iter().map(|&r| r.clone()).collect();
    let initiation_ll = -nll_initiation(&owned, &params.initiation)?;

    let dists = accepted
        .iter()
        .map(|r| params.initiation.link(r.theta_dot))
        .collect::<Result<Vec<_>>>()?;
    let times: Vec<f64> = accepted.iter().filter_map(|r| r.t_int_s).collect();
    let mixture_cdf = |t: f64| dists.iter().map(|d| d.cdf(t)).sum::<f64>() / dists.len() as f64;
    let ks = ks_one_sample(&times, mixture_cdf)?;

    let sequences = data.iter().any(|r| r.gap_index > 1);
    let mut groups: BTreeMap<String, (usize, usize, f64)> = BTreeMap::new();
    for r in data {
        let p = logistic(utility(r.theta_dot, r.x1, r.x2, &params.decision)?);
        let g = groups.entry(group_label(r, sequences)).or_default();
        g.0 += 1;
        g.1 += usize::from(r.accepted);
        g.2 += p;
    }
    let conditions: Vec<ConditionRow> = groups
        .into_iter()
        .map(|(condition, (n, a, p))| ConditionRow {
            condition,
            n,
            observed: a as f64 / n as f64,
            predicted: p / n as f64,
        })
        .collect();
    let observed: Vec<f64> = conditions.iter().map(|c| c.observed).collect();
    let predicted: Vec<f64> = conditions.iter().map(|c| c.predicted).collect();

    Ok(Assessment {
        report: GoodnessReport {
            bic: bic(params.free_parameter_count(), data.len(), decision_ll + initiation_ll)?,
            ks_d: ks.d,
            ks_p: ks.p,
            r_squared: r_squared(&observed, &predicted).ok(),
            rmse: (observed.iter().zip(&predicted).map(|(o, p)| (o - p).powi(2)).sum::<f64>() / observed.len() as f64).sqrt(),
            n_obs: data.len(),
        },
        decision_ll,
        initiation_ll,
        conditions,
    })
}
