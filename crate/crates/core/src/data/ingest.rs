//! Trial CSV reading and writing.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IngestError, RowError};
use crate::calibrate::TrialRecord;
use crate::cue::theta_dot;
use crate::cue::units::{kmh_to_mps, mph_to_mps};
use crate::params::fixtures;
use crate::Result;

/// Trial file columns in canonical order.
pub const TRIAL_COLUMNS: [&str; 12] = [
    "participant_id",
    "scenario_id",
    "gap_index",
    "gap_size_s",
    "vehicle_speed",
    "speed_units",
    "vehicle_width_m",
    "theta_dot_radps",
    "x1",
    "x2",
    "u",
    "t_int_s",
];

const OPTIONAL_COLUMNS: [&str; 4] = ["theta_dot_radps", "x1", "x2", "t_int_s"];

/// Which vehicle width feeds a recomputed cue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthMode {
    /// The width on the row itself.
    #[default]
    PerTrial,
    /// The mean width over all rows sharing the scenario id and gap index.
    ScenarioAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub vehicle_length_m: f64,
    pub width_mode: WidthMode,
    /// Known gap sequences by scenario id, used to find the gap after the
    /// last recorded one when `x2` has to be recomputed.
    pub sequences: BTreeMap<String, Vec<f64>>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            vehicle_length_m: 4.5,
            width_mode: WidthMode::PerTrial,
            sequences: fixtures::flow_scenarios()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        }
    }
}

/// Records that passed validation and the diagnostics of those that did not.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadOutcome {
    pub records: Vec<TrialRecord>,
    pub rejected: Vec<RowError>,
}

struct Raw {
    line: usize,
    participant_id: String,
    scenario_id: String,
    gap_index: usize,
    gap_size_s: f64,
    speed_mps: f64,
    width_m: f64,
    theta_dot: Option<f64>,
    x1: Option<u8>,
    x2: Option<u8>,
    accepted: bool,
    t_int_s: Option<f64>,
}

fn header_index(headers: &csv::StringRecord) -> std::result::Result<HashMap<&'static str, usize>, IngestError> {
    let mut index = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        let h = h.trim();
        let Some(&known) = TRIAL_COLUMNS.iter().find(|c| **c == h) else {
            return Err(IngestError::Schema {
                problem: format!("unknown column `{h}`"),
            });
        };
        if index.insert(known, i).is_some() {
            return Err(IngestError::Schema {
                problem: format!("duplicate column `{h}`"),
            });
        }
    }
    let missing: Vec<&str> = TRIAL_COLUMNS
        .iter()
        .filter(|c| !OPTIONAL_COLUMNS.contains(c) && !index.contains_key(*c))
        .copied()
        .collect();
    if !missing.is_empty() {
        return Err(IngestError::Schema {
            problem: format!("missing column(s) {}", missing.join(", ")),
        });
    }
    Ok(index)
}

fn parse_row(rec: &csv::StringRecord, idx: &HashMap<&'static str, usize>, line: usize) -> std::result::Result<Raw, String> {
    let field = |name: &str| idx.get(name).and_then(|&i| rec.get(i)).map(str::trim).unwrap_or("");
    let number = |name: &str| -> std::result::Result<f64, String> {
        let s = field(name);
        let v: f64 = s.parse().map_err(|_| format!("{name} `{s}` is not a number"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("{name} must be finite"))
        }
    };
    let optional = |name: &str| -> std::result::Result<Option<f64>, String> {
        if field(name).is_empty() {
            Ok(None)
        } else {
            number(name).map(Some)
        }
    };
    let flag = |name: &str| -> std::result::Result<Option<u8>, String> {
        match field(name) {
            "" => Ok(None),
            "0" => Ok(Some(0)),
            "1" => Ok(Some(1)),
            other => Err(format!("{name} must be 0 or 1, got `{other}`")),
        }
    };

    let gap_index: usize = field("gap_index")
        .parse()
        .ok()
        .filter(|&g| g >= 1)
        .ok_or_else(|| format!("gap_index `{}` must be an integer ≥ 1", field("gap_index")))?;
    let gap_size_s = number("gap_size_s")?;
    if !(gap_size_s > 0.0) {
        return Err("gap_size_s must be positive".into());
    }
    let speed = number("vehicle_speed")?;
    let speed_mps = match field("speed_units").to_ascii_lowercase().as_str() {
        "mph" => mph_to_mps(speed),
        "mps" | "m/s" => speed,
        "kmh" | "km/h" | "kph" => kmh_to_mps(speed),
        other => return Err(format!("unknown speed_units `{other}`")),
    };
    if !(speed_mps > 0.0) {
        return Err("vehicle_speed must be positive".into());
    }
    let width_m = number("vehicle_width_m")?;
    if !(width_m > 0.0) {
        return Err("vehicle_width_m must be positive".into());
    }
    let theta_dot = optional("theta_dot_radps")?;
    if theta_dot.is_some_and(|t| !(t > 0.0)) {
        return Err("theta_dot_radps must be positive".into());
    }
    let accepted = flag("u")?.ok_or("u is required")? == 1;
    let t_int_s = optional("t_int_s")?;
    match (accepted, t_int_s) {
        (false, Some(_)) => return Err("t_int_s is set on a rejected gap (u = 0)".into()),
        (true, None) => return Err("accepted gap (u = 1) has no t_int_s".into()),
        _ => {}
    }
    let participant_id = field("participant_id").to_string();
    if participant_id.is_empty() {
        return Err("participant_id is empty".into());
    }
    Ok(Raw {
        line,
        participant_id,
        scenario_id: field("scenario_id").to_string(),
        gap_index,
        gap_size_s,
        speed_mps,
        width_m,
        theta_dot,
        x1: flag("x1")?,
        x2: flag("x2")?,
        accepted,
        t_int_s,
    })
}

/// Read a trial CSV, keeping the rows that validate.
///
/// Missing cues are computed from the kinematic columns with the clear
/// distance `v·gap − L`; missing rule indicators are recomputed from each
/// participant's sequence within a scenario.
pub fn read_trials<R: Read>(reader: R, opts: &IngestOptions) -> Result<ReadOutcome> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let idx = header_index(rdr.headers()?)?;
    let mut raws = Vec::new();
    let mut rejected = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        match rec {
            Ok(rec) => match parse_row(&rec, &idx, line) {
                Ok(raw) => raws.push(raw),
                Err(message) => rejected.push(RowError { line, message }),
            },
            Err(e) => rejected.push(RowError {
                line,
                message: e.to_string(),
            }),
        }
    }

    let mut widths: HashMap<(String, usize), (f64, usize)> = HashMap::new();
    if opts.width_mode == WidthMode::ScenarioAverage {
        for r in &raws {
            let e = widths.entry((r.scenario_id.clone(), r.gap_index)).or_default();
            e.0 += r.width_m;
            e.1 += 1;
        }
    }
    let width_of = |r: &Raw| match opts.width_mode {
        WidthMode::PerTrial => r.width_m,
        WidthMode::ScenarioAverage => {
            let (sum, n) = widths[&(r.scenario_id.clone(), r.gap_index)];
            sum / n as f64
        }
    };
    let cue_of = |width: f64, gap: f64, v: f64| theta_dot(width, v * gap - opts.vehicle_length_m, v);

    // cues first, so the rules can look at neighbours
    let mut cues: Vec<Option<f64>> = Vec::with_capacity(raws.len());
    for r in &raws {
        match r.theta_dot.map(Ok).unwrap_or_else(|| cue_of(width_of(r), r.gap_size_s, r.speed_mps)) {
            Ok(c) => cues.push(Some(c)),
            Err(e) => {
                rejected.push(RowError {
                    line: r.line,
                    message: e.to_string(),
                });
                cues.push(None);
            }
        }
    }

    let mut groups: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for (i, r) in raws.iter().enumerate() {
        if cues[i].is_some() {
            groups.entry((&r.participant_id, &r.scenario_id)).or_default().push(i);
        }
    }
    let mut records: Vec<(usize, TrialRecord)> = Vec::with_capacity(raws.len());
    for members in groups.values_mut() {
        members.sort_by_key(|&i| raws[i].gap_index);
        let mut max_rejected: Option<f64> = None;
        for (k, &i) in members.iter().enumerate() {
            let r = &raws[i];
            let cue = cues[i].unwrap();
            if k > 0 && raws[members[k - 1]].gap_index == r.gap_index {
                rejected.push(RowError {
                    line: r.line,
                    message: format!("gap_index {} repeated for this participant and scenario", r.gap_index),
                });
                continue;
            }
            let x1 = r.x1.unwrap_or_else(|| u8::from(max_rejected.is_some_and(|m| cue >= m)));
            let x2 = match r.x2 {
                Some(x) => x,
                None => {
                    let following = match members.get(k + 1) {
                        Some(&j) if raws[j].gap_index == r.gap_index + 1 => cues[j],
                        _ => opts
                            .sequences
                            .get(&r.scenario_id)
                            .and_then(|seq| seq.get(r.gap_index))
                            .and_then(|&g| cue_of(width_of(r), g, r.speed_mps).ok()),
                    };
                    u8::from(following.is_some_and(|f| cue >= f))
                }
            };
            if !r.accepted {
                max_rejected = Some(max_rejected.map_or(cue, |m| m.max(cue)));
            }
            records.push((
                r.line,
                TrialRecord {
                    participant_id: r.participant_id.clone(),
                    scenario_id: r.scenario_id.clone(),
                    gap_index: r.gap_index,
                    gap_size_s: r.gap_size_s,
                    vehicle_speed_mps: r.speed_mps,
                    vehicle_width_m: r.width_m,
                    theta_dot: cue,
                    x1,
                    x2,
                    accepted: r.accepted,
                    t_int_s: r.t_int_s,
                },
            ));
        }
    }
    // file order
    records.sort_by_key(|(line, _)| *line);
    rejected.sort_by_key(|e| e.line);
    Ok(ReadOutcome {
        records: records.into_iter().map(|(_, r)| r).collect(),
        rejected,
    })
}

/// Read a trial file, failing with every row diagnostic if any row is invalid.
pub fn ingest_trials(path: &Path, opts: &IngestOptions) -> Result<Vec<TrialRecord>> {
    let file = std::fs::File::open(path)?;
    let out = read_trials(std::io::BufReader::new(file), opts)?;
    if out.rejected.is_empty() {
        Ok(out.records)
    } else {
        Err(IngestError::Rows(out.rejected).into())
    }
}

/// Write records with the full header; speeds in m/s.
pub fn write_trials<W: Write>(writer: W, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRIAL_COLUMNS)?;
    for r in records {
        w.write_record([
            r.participant_id.clone(),
            r.scenario_id.clone(),
            r.gap_index.to_string(),
            r.gap_size_s.to_string(),
            r.vehicle_speed_mps.to_string(),
            "mps".to_string(),
            r.vehicle_width_m.to_string(),
            r.theta_dot.to_string(),
            r.x1.to_string(),
            r.x2.to_string(),
            u8::from(r.accepted).to_string(),
            r.t_int_s.map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
