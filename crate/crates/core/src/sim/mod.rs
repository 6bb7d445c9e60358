//! Single-lane traffic scenes, per-gap cue schedules and the agent-based
//! crossing simulation.
//!
//! Geometry: the road runs along `x`, the lane occupies `0 ≤ y ≤ lane_width`,
//! the near pavement is `y < 0` and the crosswalk is the band
//! `|x| ≤ crosswalk_width / 2`. Vehicles travel at constant speed with fixed
//! front-to-front time gaps.

mod mh;
mod run;
mod social_force;

pub use mh::{mh_sample, MetropolisHastings};
pub use run::{run_simulation, AgentOutcome, Phase, PedestrianAgent, SimResult, TrajectorySample};
pub use social_force::{social_force_step, LaneGeometry, SocialForceParams};

use serde::{Deserialize, Serialize};

use crate::cue::theta_dot;
use crate::decision::{with_rejection_history, GapContext};
use crate::initiation::MixtureComponent;
use crate::params::{fixtures, ModelParams};
use crate::{Error, Result};

/// How the per-agent acceptance draw uses the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptanceMode {
    /// Remaining agents draw with the conditional `p_n`; population
    /// frequencies then match the unconditional `P_n`.
    #[default]
    Conditional,
    /// Remaining agents draw with the unconditional `P_n` itself.
    Unconditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitiationSampler {
    #[default]
    Exact,
    Metropolis,
}

/// A customizable single-lane traffic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Front-to-front time gaps between consecutive vehicles, seconds.
    pub gap_sequence_s: Vec<f64>,
    pub vehicle_speed_mps: f64,
    /// Width of the approaching vehicle of each gap; one value is broadcast.
    pub vehicle_widths_m: Vec<f64>,
    pub vehicle_length_m: f64,
    pub lane_width_m: f64,
    pub crosswalk_width_m: f64,
    pub pavement_width_m: f64,
    pub spawn_distance_m: f64,
    pub pedestrian_count: usize,
    pub rng_seed: u64,
    pub model: ModelParams,
    pub timestep_s: f64,
    pub acceptance_mode: AcceptanceMode,
    pub initiation_sampler: InitiationSampler,
    pub social_force: SocialForceParams,
    pub record_trajectories: bool,
}

impl ScenarioConfig {
    pub fn new(gap_sequence_s: Vec<f64>, vehicle_speed_mps: f64, model: ModelParams) -> Self {
        Self {
            gap_sequence_s,
            vehicle_speed_mps,
            vehicle_widths_m: vec![fixtures::VEHICLE_WIDTH_M],
            vehicle_length_m: 4.5,
            lane_width_m: fixtures::LANE_WIDTH_M,
            crosswalk_width_m: 2.5,
            pavement_width_m: fixtures::PAVEMENT_WIDTH_M,
            spawn_distance_m: fixtures::SPAWN_DISTANCE_M,
            pedestrian_count: 1,
            rng_seed: 0,
            model,
            timestep_s: 0.02,
            acceptance_mode: AcceptanceMode::Conditional,
            initiation_sampler: InitiationSampler::Exact,
            social_force: SocialForceParams::default(),
            record_trajectories: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.gap_sequence_s.is_empty() {
            return bad("gap sequence is empty");
        }
        if self.gap_sequence_s.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
            return bad("every gap must be positive");
        }
        if !(self.vehicle_speed_mps > 0.0) {
            return bad("vehicle speed must be positive");
        }
        if self.pedestrian_count == 0 {
            return bad("at least one pedestrian is required");
        }
        let n = self.gap_sequence_s.len();
        if !(self.vehicle_widths_m.len() == 1 || self.vehicle_widths_m.len() == n) {
            return bad("vehicle widths must be one value or one per gap");
        }
        if self.vehicle_widths_m.iter().any(|w| !(*w > 0.0)) {
            return bad("vehicle widths must be positive");
        }
        if !(self.vehicle_length_m >= 0.0) {
            return bad("vehicle length must be non-negative");
        }
        for (name, v) in [
            ("lane width", self.lane_width_m),
            ("crosswalk width", self.crosswalk_width_m),
            ("timestep", self.timestep_s),
            ("spawn distance", self.spawn_distance_m),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.pavement_width_m >= 0.0) {
            return bad("pavement width must be non-negative");
        }
        self.model.validate()
    }

    pub fn width_of_gap(&self, i: usize) -> f64 {
        if self.vehicle_widths_m.len() == 1 {
            self.vehicle_widths_m[0]
        } else {
            self.vehicle_widths_m[i]
        }
    }

    pub fn geometry(&self) -> LaneGeometry {
        LaneGeometry {
            lane_width_m: self.lane_width_m,
            crosswalk_width_m: self.crosswalk_width_m,
        }
    }
}

/// One decidable gap on the scenario clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledGap {
    pub index: usize,
    pub gap_s: f64,
    /// Time the leading vehicle's rear clears the pedestrian line.
    pub t_pass_s: f64,
    /// Distance from the pedestrian line to the approaching vehicle's front at `t_pass_s`.
    pub clear_distance_m: f64,
    pub width_m: f64,
    pub theta_dot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSchedule {
    pub gaps: Vec<ScheduledGap>,
    /// Time the last vehicle's rear clears the pedestrian line.
    pub fleet_clear_s: f64,
}

impl GapSchedule {
    pub fn theta_dots(&self) -> Vec<f64> {
        self.gaps.iter().map(|g| g.theta_dot).collect()
    }

    pub fn mixture_components(&self) -> Vec<MixtureComponent> {
        self.gaps
            .iter()
            .map(|g| MixtureComponent {
                t_pass_s: g.t_pass_s,
                theta_dot: g.theta_dot,
            })
            .collect()
    }

    /// Gap contexts as seen by a pedestrian who rejected every earlier gap.
    pub fn survivor_contexts(&self) -> Vec<GapContext> {
        with_rejection_history(&annotate_flow_rules(self))
    }
}

/// Clearance times and collision cues of every gap in the scene.
pub fn build_schedule(cfg: &ScenarioConfig) -> Result<GapSchedule> {
    cfg.validate()?;
    let v = cfg.vehicle_speed_mps;
    let len = cfg.vehicle_length_m;
    let mut lead_offset_s = 0.0;
    let mut gaps = Vec::with_capacity(cfg.gap_sequence_s.len());
    for (i, &gap) in cfg.gap_sequence_s.iter().enumerate() {
        let t_pass = (cfg.spawn_distance_m + v * lead_offset_s + len) / v;
        let distance = v * gap - len;
        if !(distance > 0.0) {
            return Err(Error::GapTooSmall {
                index: i + 1,
                distance_m: distance,
            });
        }
        let width = cfg.width_of_gap(i);
        gaps.push(ScheduledGap {
            index: i + 1,
            gap_s: gap,
            t_pass_s: t_pass,
            clear_distance_m: distance,
            width_m: width,
            theta_dot: theta_dot(width, distance, v)?,
        });
        lead_offset_s += gap;
    }
    let fleet_clear_s = (cfg.spawn_distance_m + v * lead_offset_s + len) / v;
    Ok(GapSchedule { gaps, fleet_clear_s })
}

/// Decision contexts with the look-ahead cue filled in.
///
/// Rejection history is left empty; it belongs to each pedestrian.
pub fn annotate_flow_rules(schedule: &GapSchedule) -> Vec<GapContext> {
    schedule
        .gaps
        .iter()
        .enumerate()
        .map(|(i, g)| {
            GapContext::new(g.index, g.theta_dot).with_following(schedule.gaps.get(i + 1).map(|n| n.theta_dot))
        })
        .collect()
}
