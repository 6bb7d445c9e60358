//! Trial files, synthetic datasets, configuration files and plot tables.

mod config;
mod export;
mod ingest;
mod synth;

pub use config::{load_model, load_scenario, parse_design, parse_key_values, scenario_from_pairs, KeyValues};
pub use export::{
    density_timeline, gap_acceptance_grid, initiation_means, percentile, DensityRow, GridRow, InitiationMeanRow,
    PlotKind,
};
pub use ingest::{ingest_trials, read_trials, write_trials, IngestOptions, ReadOutcome, WidthMode, TRIAL_COLUMNS};
pub use synth::{synth_dataset, Design, DesignKind, SynthManifest};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::calibrate::TrialRecord;
use crate::cue::units::MPS_PER_MPH;

/// A problem with one line of a trial file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowError {
    /// 1-based line number, header included.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IngestError {
    #[error("schema mismatch: {problem}; expected columns [{}]", TRIAL_COLUMNS.join(", "))]
    Schema { problem: String },
    #[error("{} invalid row(s): {}", .0.len(), summarize(.0))]
    Rows(Vec<RowError>),
}

fn summarize(rows: &[RowError]) -> String {
    let mut parts: Vec<String> = rows.iter().take(5).map(ToString::to_string).collect();
    if rows.len() > 5 {
        parts.push(format!("… and {} more", rows.len() - 5));
    }
    parts.join("; ")
}

/// Speed × gap condition label such as `30mph_3s`.
pub fn condition_key(r: &TrialRecord) -> String {
    let mph = r.vehicle_speed_mps / MPS_PER_MPH;
    format!("{}mph_{}s", round_label(mph), round_label(r.gap_size_s))
}

fn round_label(x: f64) -> String {
    let r = (x * 100.0).round() / 100.0;
    if r.fract() == 0.0 {
        format!("{r:.0}")
    } else {
        format!("{r}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitBy {
    Condition,
    Scenario,
}

impl std::str::FromStr for SplitBy {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "condition" => Ok(SplitBy::Condition),
            "scenario" => Ok(SplitBy::Scenario),
            other => Err(crate::Error::Config(format!("unknown split key `{other}`"))),
        }
    }
}

/// Partition records into (training, validation) by condition or scenario label.
pub fn split_trials(records: &[TrialRecord], by: SplitBy, validation: &[String]) -> (Vec<TrialRecord>, Vec<TrialRecord>) {
    records.iter().cloned().partition(|r| {
        let key = match by {
            SplitBy::Condition => condition_key(r),
            SplitBy::Scenario => r.scenario_id.clone(),
        };
        !validation.contains(&key)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(scenario: &str, speed_mph: f64, gap: f64) -> TrialRecord {
        TrialRecord {
            participant_id: "p".into(),
            scenario_id: scenario.into(),
            gap_index: 1,
            gap_size_s: gap,
            vehicle_speed_mps: speed_mph * MPS_PER_MPH,
            vehicle_width_m: 1.95,
            theta_dot: 0.01,
            x1: 0,
            x2: 0,
            accepted: false,
            t_int_s: None,
        }
    }

    #[test]
    fn condition_labels() {
        assert_eq!(condition_key(&record("a", 30.0, 3.0)), "30mph_3s");
        assert_eq!(condition_key(&record("a", 25.0, 2.5)), "25mph_2.5s");
    }

    #[test]
    fn splits_by_label() {
        let rs = vec![record("s1", 25.0, 2.0), record("s2", 30.0, 3.0), record("s1", 35.0, 5.0)];
        let (train, val) = split_trials(&rs, SplitBy::Condition, &["30mph_3s".into()]);
        assert_eq!((train.len(), val.len()), (2, 1));
        let (train, val) = split_trials(&rs, SplitBy::Scenario, &["s1".into()]);
        assert_eq!((train.len(), val.len()), (1, 2));
    }
}
