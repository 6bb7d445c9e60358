//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored; lists are
//! comma-separated. Unknown keys are an error so typos do not pass silently.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use super::synth::{Design, DesignKind};
use crate::cue::units::mph_to_mps;
use crate::params::{fixtures, ModelParams};
use crate::sim::{AcceptanceMode, InitiationSampler, ScenarioConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    pairs: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
}

pub fn parse_key_values(text: &str) -> Result<KeyValues> {
    let mut pairs = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected `key = value`", i + 1)));
        };
        let k = k.trim().to_string();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        if pairs.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{k}`", i + 1)));
        }
    }
    Ok(KeyValues {
        pairs,
        used: RefCell::default(),
    })
}

impl KeyValues {
    pub fn raw(&self, key: &str) -> Option<&str> {
        let v = self.pairs.get(key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some(v.as_str())
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("`{key}` has an invalid value `{v}`"))),
        }
    }

    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("`{key}` has an invalid entry `{}`", s.trim())))
                })
                .collect::<Result<Vec<f64>>>()
                .map(Some),
        }
    }

    /// Keys matching `prefix.` with the prefix stripped.
    pub fn with_prefix(&self, prefix: &str) -> Vec<String> {
        let p = format!("{prefix}.");
        self.pairs
            .keys()
            .filter_map(|k| k.strip_prefix(&p).map(str::to_string))
            .collect()
    }

    /// Apply `key = value` overrides on top of the file contents.
    pub fn set(&mut self, key: &str, value: &str) {
        self.pairs.insert(key.to_string(), value.to_string());
    }

    /// Fail on any key that was never read.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<&str> = self
            .pairs
            .keys()
            .filter(|k| !used.contains(*k))
            .map(String::as_str)
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("unknown key(s): {}", unknown.join(", "))))
        }
    }
}

fn named_sequence(name: &str) -> Result<Vec<f64>> {
    fixtures::flow_scenarios()
        .into_iter()
        .find(|(k, _)| *k == name)
        .map(|(_, v)| v)
        .ok_or_else(|| Error::Config(format!("unknown scenario `{name}`")))
}

/// A built-in fixture name or a path to model-parameter JSON.
pub fn load_model(spec: &str, base_dir: &Path) -> Result<ModelParams> {
    let model = match spec {
        "single_gap_sw" => fixtures::single_gap_sw(),
        "single_gap_gauss" => fixtures::single_gap_gauss(),
        "flow_sw" => fixtures::flow_sw(),
        "flow_gauss" => fixtures::flow_gauss(),
        path => {
            let p = base_dir.join(path);
            let text = std::fs::read_to_string(&p)
                .map_err(|e| Error::Config(format!("cannot read model file {}: {e}", p.display())))?;
            serde_json::from_str(&text)?
        }
    };
    model.validate()?;
    Ok(model)
}

fn bool_value(kv: &KeyValues, key: &str) -> Result<Option<bool>> {
    match kv.raw(key) {
        None => Ok(None),
        Some("true" | "1" | "yes" | "on") => Ok(Some(true)),
        Some("false" | "0" | "no" | "off") => Ok(Some(false)),
        Some(v) => Err(Error::Config(format!("`{key}` must be true or false, got `{v}`"))),
    }
}

/// Build a scenario from parsed pairs. Relative model paths resolve against `base_dir`.
pub fn scenario_from_pairs(kv: &KeyValues, base_dir: &Path) -> Result<ScenarioConfig> {
    let gaps = match (kv.list("gap_sequence_s")?, kv.raw("scenario")) {
        (Some(g), None) => g,
        (None, Some(name)) => named_sequence(name)?,
        (Some(_), Some(_)) => return Err(Error::Config("give either gap_sequence_s or scenario".into())),
        (None, None) => return Err(Error::Config("gap_sequence_s is required".into())),
    };
    let speed = match (kv.parse::<f64>("vehicle_speed_mps")?, kv.parse::<f64>("vehicle_speed_mph")?) {
        (Some(v), None) => v,
        (None, Some(mph)) => mph_to_mps(mph),
        (None, None) => mph_to_mps(fixtures::FLOW_SPEED_MPH),
        (Some(_), Some(_)) => return Err(Error::Config("give the vehicle speed once".into())),
    };
    let model = match kv.raw("model") {
        Some(spec) => load_model(spec, base_dir)?,
        None => fixtures::flow_sw(),
    };
    let mut cfg = ScenarioConfig::new(gaps, speed, model);
    if let Some(w) = kv.list("vehicle_widths_m")? {
        cfg.vehicle_widths_m = w;
    }
    let reals: [(&str, &mut f64); 6] = [
        ("vehicle_length_m", &mut cfg.vehicle_length_m),
        ("lane_width_m", &mut cfg.lane_width_m),
        ("crosswalk_width_m", &mut cfg.crosswalk_width_m),
        ("pavement_width_m", &mut cfg.pavement_width_m),
        ("spawn_distance_m", &mut cfg.spawn_distance_m),
        ("timestep_s", &mut cfg.timestep_s),
    ];
    for (key, slot) in reals {
        if let Some(v) = kv.parse(key)? {
            *slot = v;
        }
    }
    let sf = &mut cfg.social_force;
    let forces: [(&str, &mut f64); 5] = [
        ("social_force.desired_speed_mps", &mut sf.desired_speed_mps),
        ("social_force.relaxation_s", &mut sf.relaxation_s),
        ("social_force.repulsion_strength", &mut sf.repulsion_strength),
        ("social_force.repulsion_range_m", &mut sf.repulsion_range_m),
        ("social_force.max_speed_factor", &mut sf.max_speed_factor),
    ];
    for (key, slot) in forces {
        if let Some(v) = kv.parse(key)? {
            *slot = v;
        }
    }
    if let Some(n) = kv.parse("pedestrian_count")? {
        cfg.pedestrian_count = n;
    }
    if let Some(s) = kv.parse("rng_seed")? {
        cfg.rng_seed = s;
    }
    cfg.acceptance_mode = match kv.raw("acceptance_mode") {
        None | Some("conditional") => AcceptanceMode::Conditional,
        Some("unconditional") => AcceptanceMode::Unconditional,
        Some(v) => return Err(Error::Config(format!("unknown acceptance_mode `{v}`"))),
    };
    cfg.initiation_sampler = match kv.raw("initiation_sampler") {
        None | Some("exact") => InitiationSampler::Exact,
        Some("metropolis") => InitiationSampler::Metropolis,
        Some(v) => return Err(Error::Config(format!("unknown initiation_sampler `{v}`"))),
    };
    if let Some(b) = bool_value(kv, "record_trajectories")? {
        cfg.record_trajectories = b;
    }
    kv.finish()?;
    cfg.validate()?;
    Ok(cfg)
}

/// Read a scenario file.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    scenario_from_pairs(&parse_key_values(&text)?, base)
}

/// Parse a synthetic-data design.
pub fn parse_design(text: &str) -> Result<Design> {
    let kv = parse_key_values(text)?;
    let kind = kv.raw("kind").unwrap_or("grid").to_string();
    let mut design = match kind.as_str() {
        "grid" => {
            let mut d = Design::grid();
            if let DesignKind::Grid { speeds_mph, gaps_s } = &mut d.kind {
                if let Some(s) = kv.list("speeds_mph")? {
                    *speeds_mph = s;
                }
                if let Some(g) = kv.list("gaps_s")? {
                    *gaps_s = g;
                }
            }
            d
        }
        "flow" => {
            let mut d = Design::flow();
            if let DesignKind::Flow { speed_mph, scenarios } = &mut d.kind {
                if let Some(s) = kv.parse("speed_mph")? {
                    *speed_mph = s;
                }
                let custom = kv.with_prefix("scenario");
                let names = kv.raw("scenarios");
                if names.is_some() || !custom.is_empty() {
                    scenarios.clear();
                }
                if let Some(names) = names {
                    for name in names.split(',').map(str::trim) {
                        scenarios.push((name.to_string(), named_sequence(name)?));
                    }
                }
                for name in custom {
                    let gaps = kv.list(&format!("scenario.{name}"))?.unwrap_or_default();
                    scenarios.push((name, gaps));
                }
            }
            d
        }
        "random_flow" => {
            let mut d = Design::random_flow();
            if let DesignKind::RandomFlow {
                speeds_mph,
                gaps_s,
                sequence_length,
            } = &mut d.kind
            {
                if let Some(s) = kv.list("speeds_mph")? {
                    *speeds_mph = s;
                }
                if let Some(g) = kv.list("gaps_s")? {
                    *gaps_s = g;
                }
                if let Some(l) = kv.parse("sequence_length")? {
                    *sequence_length = l;
                }
            }
            d
        }
        other => return Err(Error::Config(format!("unknown design kind `{other}`"))),
    };
    if let Some(w) = kv.parse("vehicle_width_m")? {
        design.vehicle_width_m = w;
    }
    if let Some(l) = kv.parse("vehicle_length_m")? {
        design.vehicle_length_m = l;
    }
    design.total_trials = kv.parse("total_trials")?;
    kv.finish()?;
    Ok(design)
}
