//! Long-format tables behind gap-acceptance, initiation-time and density plots.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::calibrate::TrialRecord;
use crate::cue::units::MPS_PER_MPH;
use crate::decision::{logistic, unconditional_gap_probs, utility};
use crate::initiation::{InitiationDist, Mixture};
use crate::params::ModelParams;
use crate::sim::GapSchedule;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    GapAcceptanceGrid,
    InitiationMeans,
    DensityTimeline,
}

impl std::str::FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gap-acceptance-grid" => Ok(PlotKind::GapAcceptanceGrid),
            "initiation-means" => Ok(PlotKind::InitiationMeans),
            "density-timeline" => Ok(PlotKind::DensityTimeline),
            other => Err(Error::Config(format!("unknown plot kind `{other}`"))),
        }
    }
}

/// Percentile by linear interpolation between order statistics
/// (`h = (n − 1)·q`). `sorted` must be ascending.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty() && (0.0..=1.0).contains(&q));
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

type ConditionKey = (i64, i64);

fn key(r: &TrialRecord) -> ConditionKey {
    let mph = r.vehicle_speed_mps / MPS_PER_MPH;
    ((mph * 100.0).round() as i64, (r.gap_size_s * 1000.0).round() as i64)
}

fn by_condition<'a>(data: impl Iterator<Item = &'a TrialRecord>) -> BTreeMap<ConditionKey, Vec<&'a TrialRecord>> {
    let mut groups: BTreeMap<ConditionKey, Vec<&TrialRecord>> = BTreeMap::new();
    for r in data {
        groups.entry(key(r)).or_default().push(r);
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub speed_mph: f64,
    pub gap_s: f64,
    pub n: usize,
    pub observed: f64,
    pub predicted: f64,
    /// 2.5% and 97.5% percentiles of the acceptance rate of `n` model trials.
    pub predicted_p2_5: f64,
    pub predicted_p97_5: f64,
}

/// Observed and predicted acceptance rate per speed × gap condition.
pub fn gap_acceptance_grid(data: &[TrialRecord], params: &ModelParams) -> Result<Vec<GridRow>> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if let Some(r) = data.iter().find(|r| r.gap_index != 1) {
        return Err(Error::ShapeMismatch(format!(
            "the acceptance grid needs single-gap trials, found gap_index {}",
            r.gap_index
        )));
    }
    by_condition(data.iter())
        .into_iter()
        .map(|((mph, gap), rs)| {
            let n = rs.len();
            let accepted = rs.iter().filter(|r| r.accepted).count();
            let predicted = rs
                .iter()
                .map(|r| utility(r.theta_dot, r.x1, r.x2, &params.decision).map(logistic))
                .sum::<Result<f64>>()?
                / n as f64;
            let binom = Binomial::new(predicted, n as u64)
                .map_err(|e| Error::InvalidParams(format!("binomial band: {e}")))?;
            Ok(GridRow {
                speed_mph: mph as f64 / 100.0,
                gap_s: gap as f64 / 1000.0,
                n,
                observed: accepted as f64 / n as f64,
                predicted,
                predicted_p2_5: binom.inverse_cdf(0.025) as f64 / n as f64,
                predicted_p97_5: binom.inverse_cdf(0.975) as f64 / n as f64,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitiationMeanRow {
    pub speed_mph: f64,
    pub gap_s: f64,
    pub n: usize,
    pub observed_mean: f64,
    pub observed_p2_5: f64,
    pub observed_p97_5: f64,
    pub predicted_mean: f64,
    pub predicted_p2_5: f64,
    pub predicted_p97_5: f64,
}

/// Quantile of an equal-weight mixture by bisection on its CDF.
fn mixture_quantile(dists: &[InitiationDist], q: f64) -> f64 {
    let cdf = |t: f64| dists.iter().map(|d| d.cdf(t)).sum::<f64>() / dists.len() as f64;
    let mut lo = dists.iter().map(|d| d.quantile(q)).fold(f64::INFINITY, f64::min);
    let mut hi = dists.iter().map(|d| d.quantile(q)).fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-12 {
        return lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Observed and predicted initiation-time mean and 2.5/97.5% percentiles
/// per speed × gap condition, over accepted trials.
pub fn initiation_means(data: &[TrialRecord], params: &ModelParams) -> Result<Vec<InitiationMeanRow>> {
    let groups = by_condition(data.iter().filter(|r| r.accepted));
    if groups.is_empty() {
        return Err(Error::EmptyData);
    }
    groups
        .into_iter()
        .map(|((mph, gap), rs)| {
            let mut times = rs
                .iter()
                .map(|r| r.t_int_s.ok_or(Error::MissingInitiationTime(r.gap_index)))
                .collect::<Result<Vec<f64>>>()?;
            times.sort_by(f64::total_cmp);
            let dists = rs
                .iter()
                .map(|r| params.initiation.link(r.theta_dot))
                .collect::<Result<Vec<_>>>()?;
            let n = times.len();
            Ok(InitiationMeanRow {
                speed_mph: mph as f64 / 100.0,
                gap_s: gap as f64 / 1000.0,
                n,
                observed_mean: times.iter().sum::<f64>() / n as f64,
                observed_p2_5: percentile(&times, 0.025),
                observed_p97_5: percentile(&times, 0.975),
                predicted_mean: dists.iter().map(InitiationDist::mean).sum::<f64>() / n as f64,
                predicted_p2_5: mixture_quantile(&dists, 0.025),
                predicted_p97_5: mixture_quantile(&dists, 0.975),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub t_s: f64,
    pub density: f64,
    pub cumulative: f64,
    /// Index of the gap whose clearance time falls in `[t, t + dt)`.
    pub t_pass_marker: Option<usize>,
}

/// Crossing-start density on the scenario clock at resolution `dt_s`, up to
/// `tail_s` seconds after the last vehicle clears.
pub fn density_timeline(schedule: &GapSchedule, params: &ModelParams, dt_s: f64, tail_s: f64) -> Result<Vec<DensityRow>> {
    if !(dt_s > 0.0) || !(tail_s >= 0.0) {
        return Err(Error::Config("timeline step must be positive and tail non-negative".into()));
    }
    let probs = unconditional_gap_probs(&schedule.survivor_contexts(), &params.decision)?;
    let mixture = Mixture::new(&schedule.mixture_components(), &probs, &params.initiation)?;
    let steps = ((schedule.fleet_clear_s + tail_s) / dt_s).ceil() as usize;
    Ok((0..=steps)
        .map(|i| {
            let t = i as f64 * dt_s;
            DensityRow {
                t_s: t,
                density: mixture.density(t),
                cumulative: mixture.cdf(t),
                t_pass_marker: schedule
                    .gaps
                    .iter()
                    .find(|g| g.t_pass_s >= t && g.t_pass_s < t + dt_s)
                    .map(|g| g.index),
            }
        })
        .collect())
}
