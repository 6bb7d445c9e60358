//! Synthetic trial data drawn from the model itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibrate::TrialRecord;
use crate::cue::units::mph_to_mps;
use crate::decision::{gap_acceptance_prob, GapContext};
use crate::params::{fixtures, ModelParams};
use crate::sim::{annotate_flow_rules, build_schedule, ScenarioConfig};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DesignKind {
    /// One gap per trial over a speed × gap grid; `n` trials per condition.
    Grid { speeds_mph: Vec<f64>, gaps_s: Vec<f64> },
    /// Fixed gap sequences at one speed; `n` participants per scenario.
    Flow {
        speed_mph: f64,
        scenarios: Vec<(String, Vec<f64>)>,
    },
    /// Random sequences drawn from the gap and speed lists; `n` records in total.
    RandomFlow {
        speeds_mph: Vec<f64>,
        gaps_s: Vec<f64>,
        sequence_length: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    #[serde(flatten)]
    pub kind: DesignKind,
    pub vehicle_width_m: f64,
    pub vehicle_length_m: f64,
    /// Overrides `n` for grid designs: this many trials spread over the cells.
    pub total_trials: Option<usize>,
}

impl Design {
    pub fn grid() -> Self {
        Self::with_kind(DesignKind::Grid {
            speeds_mph: fixtures::GRID_SPEEDS_MPH.to_vec(),
            gaps_s: fixtures::GRID_GAPS_S.to_vec(),
        })
    }

    pub fn flow() -> Self {
        Self::with_kind(DesignKind::Flow {
            speed_mph: fixtures::FLOW_SPEED_MPH,
            scenarios: fixtures::flow_scenarios()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        })
    }

    pub fn random_flow() -> Self {
        Self::with_kind(DesignKind::RandomFlow {
            speeds_mph: fixtures::GRID_SPEEDS_MPH.to_vec(),
            gaps_s: fixtures::GRID_GAPS_S.to_vec(),
            sequence_length: 6,
        })
    }

    pub fn with_kind(kind: DesignKind) -> Self {
        Self {
            kind,
            vehicle_width_m: fixtures::VEHICLE_WIDTH_M,
            vehicle_length_m: 4.5,
            total_trials: None,
        }
    }
}

/// Ground truth written beside a synthetic CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub params: ModelParams,
    pub design: Design,
    pub n: usize,
    pub seed: u64,
    pub records: usize,
}

struct Run<'a> {
    params: &'a ModelParams,
    rng: ChaCha8Rng,
}

impl Run<'_> {
    /// Walk one participant through `contexts` until a gap is accepted.
    fn sequence(
        &mut self,
        contexts: &[GapContext],
        gaps_s: &[f64],
        base: &TrialRecord,
        out: &mut Vec<TrialRecord>,
    ) -> Result<()> {
        let mut max_rejected: Option<f64> = None;
        for (ctx, &gap) in contexts.iter().zip(gaps_s) {
            let ctx = ctx.with_max_rejected(max_rejected);
            let p = gap_acceptance_prob(&ctx, &self.params.decision)?;
            let accepted = self.rng.random::<f64>() < p;
            let t_int_s = if accepted {
                Some(self.params.initiation.link(ctx.theta_dot_current)?.sample(&mut self.rng)?)
            } else {
                None
            };
            out.push(TrialRecord {
                gap_index: ctx.index,
                gap_size_s: gap,
                theta_dot: ctx.theta_dot_current,
                x1: crate::decision::rule_x1(&ctx),
                x2: crate::decision::rule_x2(&ctx),
                accepted,
                t_int_s,
                ..base.clone()
            });
            if accepted {
                break;
            }
            max_rejected = Some(max_rejected.map_or(ctx.theta_dot_current, |m| m.max(ctx.theta_dot_current)));
        }
        Ok(())
    }
}

fn run_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn contexts(design: &Design, params: &ModelParams, gaps: &[f64], speed_mps: f64) -> Result<Vec<GapContext>> {
    let mut cfg = ScenarioConfig::new(gaps.to_vec(), speed_mps, *params);
    cfg.vehicle_widths_m = vec![design.vehicle_width_m];
    cfg.vehicle_length_m = design.vehicle_length_m;
    Ok(annotate_flow_rules(&build_schedule(&cfg)?))
}

/// Draw trials from the exact model. Each trial or participant sequence owns
/// a random stream derived from `seed` and its position in the design.
pub fn synth_dataset(params: &ModelParams, design: &Design, n: usize, seed: u64) -> Result<Vec<TrialRecord>> {
    params.validate()?;
    let mut out = Vec::new();
    let base = |participant: String, scenario: String, speed_mps: f64| TrialRecord {
        participant_id: participant,
        scenario_id: scenario,
        gap_index: 1,
        gap_size_s: 0.0,
        vehicle_speed_mps: speed_mps,
        vehicle_width_m: design.vehicle_width_m,
        theta_dot: 0.0,
        x1: 0,
        x2: 0,
        accepted: false,
        t_int_s: None,
    };
    match &design.kind {
        DesignKind::Grid { speeds_mph, gaps_s } => {
            let cells: Vec<(f64, f64)> = speeds_mph
                .iter()
                .flat_map(|&s| gaps_s.iter().map(move |&g| (s, g)))
                .collect();
            let counts: Vec<usize> = match design.total_trials {
                Some(total) if !cells.is_empty() => (0..cells.len())
                    .map(|i| total / cells.len() + usize::from(i < total % cells.len()))
                    .collect(),
                _ => vec![n; cells.len()],
            };
            let mut trial = 0;
            for (&(mph, gap), &count) in cells.iter().zip(&counts) {
                let v = mph_to_mps(mph);
                let ctx = contexts(design, params, &[gap], v)?;
                for _ in 0..count {
                    let mut run = Run {
                        params,
                        rng: run_rng(seed, trial),
                    };
                    run.sequence(&ctx, &[gap], &base(format!("p{trial}"), "grid".into(), v), &mut out)?;
                    trial += 1;
                }
            }
        }
        DesignKind::Flow { speed_mph, scenarios } => {
            let v = mph_to_mps(*speed_mph);
            let mut participant = 0;
            for (name, gaps) in scenarios {
                let ctx = contexts(design, params, gaps, v)?;
                for _ in 0..n {
                    let mut run = Run {
                        params,
                        rng: run_rng(seed, participant),
                    };
                    run.sequence(&ctx, gaps, &base(format!("p{participant}"), name.clone(), v), &mut out)?;
                    participant += 1;
                }
            }
        }
        DesignKind::RandomFlow {
            speeds_mph,
            gaps_s,
            sequence_length,
        } => {
            if speeds_mph.is_empty() || gaps_s.is_empty() || *sequence_length == 0 {
                return Err(crate::Error::Config("random flow design needs speeds, gaps and a length".into()));
            }
            let mut participant = 0;
            while out.len() < n {
                let mut rng = run_rng(seed, participant);
                let mph = speeds_mph[rng.random_range(0..speeds_mph.len())];
                let gaps: Vec<f64> = (0..*sequence_length)
                    .map(|_| gaps_s[rng.random_range(0..gaps_s.len())])
                    .collect();
                let v = mph_to_mps(mph);
                let ctx = contexts(design, params, &gaps, v)?;
                let mut run = Run { params, rng };
                let record = base(format!("p{participant}"), format!("seq{participant}"), v);
                run.sequence(&ctx, &gaps, &record, &mut out)?;
                participant += 1;
            }
            out.truncate(n);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{condition_key, write_trials};
    use std::collections::BTreeMap;

    #[test]
    fn zero_trials_gives_header_only() {
        let rs = synth_dataset(&fixtures::single_gap_sw(), &Design::grid(), 0, 1).unwrap();
        assert!(rs.is_empty());
        let mut buf = Vec::new();
        write_trials(&mut buf, &rs).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    }

    #[test]
    fn byte_identical_on_rerun() {
        let write = |seed| {
            let rs = synth_dataset(&fixtures::flow_sw(), &Design::flow(), 20, seed).unwrap();
            let mut buf = Vec::new();
            write_trials(&mut buf, &rs).unwrap();
            buf
        };
        assert_eq!(write(5), write(5));
        assert_ne!(write(5), write(6));
    }

    #[test]
    fn grid_total_is_spread_over_cells() {
        let mut d = Design::grid();
        d.total_trials = Some(4270);
        let rs = synth_dataset(&fixtures::single_gap_sw(), &d, 0, 3).unwrap();
        assert_eq!(rs.len(), 4270);
        let mut per: BTreeMap<String, usize> = BTreeMap::new();
        for r in &rs {
            *per.entry(condition_key(r)).or_default() += 1;
        }
        assert_eq!(per.len(), 12);
        assert!(per.values().all(|&c| c == 355 || c == 356));
        assert!(rs.iter().all(|r| r.x1 == 0 && r.x2 == 0 && r.gap_index == 1));
        assert!(rs.iter().all(|r| r.validate().is_ok()));
    }

    #[test]
    fn flow_sequences_stop_at_acceptance() {
        let rs = synth_dataset(&fixtures::flow_sw(), &Design::flow(), 50, 9).unwrap();
        let mut by: BTreeMap<(String, String), Vec<&TrialRecord>> = BTreeMap::new();
        for r in &rs {
            by.entry((r.participant_id.clone(), r.scenario_id.clone())).or_default().push(r);
        }
        assert_eq!(by.len(), 200);
        for seq in by.values() {
            assert!(seq.iter().enumerate().all(|(i, r)| r.gap_index == i + 1));
            assert!(seq[..seq.len() - 1].iter().all(|r| !r.accepted));
        }
    }

    #[test]
    fn random_flow_has_exact_length() {
        let rs = synth_dataset(&fixtures::flow_sw(), &Design::random_flow(), 777, 2).unwrap();
        assert_eq!(rs.len(), 777);
        assert!(rs.iter().any(|r| r.x1 == 1) && rs.iter().any(|r| r.x2 == 1));
    }
}
