//! Agent-based Monte Carlo over a gap sequence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mh::MetropolisHastings;
use super::social_force::social_force_step;
use super::{annotate_flow_rules, build_schedule, AcceptanceMode, GapSchedule, InitiationSampler, ScenarioConfig};
use crate::decision::{gap_acceptance_prob, unconditional_gap_probs};
use crate::initiation::InitiationDist;
use crate::{Error, Result};

/// Longest a crossing may take before the agent is considered stuck.
const MAX_CROSSING_S: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Waiting,
    Initiating,
    Crossing,
    Done,
    NeverCrossed,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Waiting => "waiting",
            Phase::Initiating => "initiating",
            Phase::Crossing => "crossing",
            Phase::Done => "done",
            Phase::NeverCrossed => "never_crossed",
        }
    }

    /// Whether `next` may follow `self`.
    pub fn can_advance_to(&self, next: Phase) -> bool {
        match (self, next) {
            (Phase::Waiting, Phase::NeverCrossed) => true,
            (_, Phase::NeverCrossed) | (Phase::NeverCrossed, _) => false,
            (a, b) => b >= *a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PedestrianAgent {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub destination: [f64; 2],
    pub phase: Phase,
    pub rejection_history_max_cue: Option<f64>,
    pub accepted_gap: Option<usize>,
    pub t_int_sampled: Option<f64>,
}

impl PedestrianAgent {
    pub fn new(position: [f64; 2]) -> Self {
        Self {
            position,
            velocity: [0.0, 0.0],
            destination: position,
            phase: Phase::Waiting,
            rejection_history_max_cue: None,
            accepted_gap: None,
            t_int_sampled: None,
        }
    }

    fn advance(&mut self, next: Phase) {
        debug_assert!(self.phase.can_advance_to(next), "{:?} -> {:?}", self.phase, next);
        self.phase = next;
    }

    fn reject(&mut self, cue: f64) {
        self.rejection_history_max_cue = Some(self.rejection_history_max_cue.map_or(cue, |m| m.max(cue)));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t_s: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOutcome {
    pub agent: usize,
    pub spawn: [f64; 2],
    pub accepted_gap: Option<usize>,
    pub t_int_s: Option<f64>,
    /// Scenario-clock time of the first crossing step.
    pub crossing_start_s: Option<f64>,
    /// Scenario-clock time the far curb is reached.
    pub crossing_end_s: Option<f64>,
    pub max_lateral_offset_m: f64,
    pub final_phase: Phase,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trajectory: Vec<TrajectorySample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub pedestrian_count: usize,
    pub rng_seed: u64,
    pub schedule: GapSchedule,
    pub accepted_per_gap: Vec<usize>,
    pub never_crossed: usize,
    pub outcomes: Vec<AgentOutcome>,
}

impl SimResult {
    /// Fraction of all agents that crossed in each gap.
    pub fn acceptance_frequencies(&self) -> Vec<f64> {
        let n = self.pedestrian_count as f64;
        self.accepted_per_gap.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn is_conserved(&self) -> bool {
        self.accepted_per_gap.iter().sum::<usize>() + self.never_crossed == self.pedestrian_count
    }

    /// Sampled initiation times of every agent that crossed.
    pub fn initiation_times(&self) -> Vec<f64> {
        self.outcomes.iter().filter_map(|o| o.t_int_s).collect()
    }
}

struct Shared<'a> {
    cfg: &'a ScenarioConfig,
    schedule: &'a GapSchedule,
    contexts: Vec<crate::decision::GapContext>,
    unconditional: Vec<f64>,
    links: Vec<Option<InitiationDist>>,
}

fn agent_rng(seed: u64, agent: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(agent as u64);
    rng
}

fn draw_initiation<R: Rng + ?Sized>(dist: &InitiationDist, sampler: InitiationSampler, rng: &mut R) -> Result<f64> {
    match sampler {
        InitiationSampler::Exact => dist.sample(rng),
        InitiationSampler::Metropolis => {
            let mh = MetropolisHastings {
                proposal_width: 2.0 * dist.std_dev(),
                burn_in: 200,
                thin: 1,
            };
            let start = dist.quantile(0.5);
            Ok(mh.chain(|t| dist.pdf(t), start, 1, rng)?.samples[0])
        }
    }
}

fn simulate_agent(id: usize, sh: &Shared<'_>) -> Result<AgentOutcome> {
    let cfg = sh.cfg;
    let mut rng = agent_rng(cfg.rng_seed, id);
    let half = 0.5 * cfg.crosswalk_width_m;
    let spawn = [
        rng.random_range(-half..=half),
        -cfg.pavement_width_m * rng.random::<f64>(),
    ];
    let mut agent = PedestrianAgent::new(spawn);
    let mut trajectory = Vec::new();
    if cfg.record_trajectories {
        trajectory.push(TrajectorySample {
            t_s: 0.0,
            x_m: spawn[0],
            y_m: spawn[1],
            phase: Phase::Waiting,
        });
    }

    for (i, ctx) in sh.contexts.iter().enumerate() {
        let p = match cfg.acceptance_mode {
            AcceptanceMode::Conditional => {
                gap_acceptance_prob(&ctx.with_max_rejected(agent.rejection_history_max_cue), &cfg.model.decision)?
            }
            AcceptanceMode::Unconditional => sh.unconditional[i],
        };
        if rng.random::<f64>() < p {
            agent.accepted_gap = Some(ctx.index);
            agent.advance(Phase::Initiating);
            let Some(dist) = &sh.links[i] else {
                // degenerate link at this cue; re-link to surface the error
                return Err(cfg.model.initiation.link(ctx.theta_dot_current).unwrap_err());
            };
            agent.t_int_sampled = Some(draw_initiation(dist, cfg.initiation_sampler, &mut rng)?);
            break;
        }
        agent.reject(ctx.theta_dot_current);
    }

    let Some(t_int) = agent.t_int_sampled else {
        agent.advance(Phase::NeverCrossed);
        return Ok(AgentOutcome {
            agent: id,
            spawn,
            accepted_gap: None,
            t_int_s: None,
            crossing_start_s: None,
            crossing_end_s: None,
            max_lateral_offset_m: spawn[0].abs(),
            final_phase: agent.phase,
            trajectory,
        });
    };

    let gap = &sh.schedule.gaps[agent.accepted_gap.unwrap() - 1];
    let start = gap.t_pass_s + t_int;
    agent.advance(Phase::Crossing);
    agent.destination = [spawn[0], cfg.lane_width_m];
    let geometry = cfg.geometry();
    let dt = cfg.timestep_s;
    let mut t = start;
    let mut max_offset = spawn[0].abs();
    if cfg.record_trajectories {
        trajectory.push(TrajectorySample {
            t_s: start,
            x_m: spawn[0],
            y_m: spawn[1],
            phase: Phase::Crossing,
        });
    }
    while agent.position[1] < cfg.lane_width_m {
        if t - start > MAX_CROSSING_S {
            return Err(Error::Config(format!("agent {id} failed to finish its crossing")));
        }
        agent = social_force_step(&agent, &geometry, &cfg.social_force, dt);
        t += dt;
        max_offset = max_offset.max(agent.position[0].abs());
        if cfg.record_trajectories {
            trajectory.push(TrajectorySample {
                t_s: t,
                x_m: agent.position[0],
                y_m: agent.position[1],
                phase: Phase::Crossing,
            });
        }
    }
    agent.advance(Phase::Done);
    if let Some(last) = trajectory.last_mut() {
        last.phase = Phase::Done;
    }
    Ok(AgentOutcome {
        agent: id,
        spawn,
        accepted_gap: agent.accepted_gap,
        t_int_s: Some(t_int),
        crossing_start_s: Some(start),
        crossing_end_s: Some(t),
        max_lateral_offset_m: max_offset,
        final_phase: agent.phase,
        trajectory,
    })
}

/// Run every pedestrian through the gap sequence.
///
/// Each agent owns a random stream derived from the seed and its index, so
/// results do not depend on thread count or scheduling.
pub fn run_simulation(cfg: &ScenarioConfig) -> Result<SimResult> {
    let schedule = build_schedule(cfg)?;
    let contexts = annotate_flow_rules(&schedule);
    let unconditional = unconditional_gap_probs(&schedule.survivor_contexts(), &cfg.model.decision)?;
    let links = schedule
        .gaps
        .iter()
        .map(|g| cfg.model.initiation.link(g.theta_dot).ok())
        .collect();
    let shared = Shared {
        cfg,
        schedule: &schedule,
        contexts,
        unconditional,
        links,
    };
    let results: Vec<Result<AgentOutcome>> = (0..cfg.pedestrian_count)
        .into_par_iter()
        .map(|i| simulate_agent(i, &shared))
        .collect();
    let outcomes = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut accepted_per_gap = vec![0; schedule.gaps.len()];
    let mut never_crossed = 0;
    for o in &outcomes {
        match o.accepted_gap {
            Some(n) => accepted_per_gap[n - 1] += 1,
            None => never_crossed += 1,
        }
    }
    Ok(SimResult {
        pedestrian_count: cfg.pedestrian_count,
        rng_seed: cfg.rng_seed,
        schedule,
        accepted_per_gap,
        never_crossed,
        outcomes,
    })
}
