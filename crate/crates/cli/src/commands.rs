use std::path::{Path, PathBuf};

use serde::Serialize;

use crossing_core::calibrate::{fit_model, FitOptions, ModelFit, TrialRecord};
use crossing_core::data::{
    density_timeline, gap_acceptance_grid, ingest_trials, initiation_means, load_model, parse_design,
    parse_key_values, scenario_from_pairs, split_trials, synth_dataset, write_trials, Design, IngestOptions,
    PlotKind, SplitBy, SynthManifest, WidthMode,
};
use crossing_core::decision::{gap_acceptance_prob, rule_x1, rule_x2, unconditional_gap_probs};
use crossing_core::evaluate::assess;
use crossing_core::sim::{build_schedule, run_simulation, ScenarioConfig};
use crossing_core::{Family, ModelParams};

use crate::manifest::{create, out_dir, sidecar, write_csv, write_json, RunManifest, Seed};
use crate::{FamilyArg, Failure, WidthArg};

fn input(path: &Path) -> Result<&Path, Failure> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Failure::invalid(format!("input file {} does not exist", path.display())))
    }
}

fn model(spec: &str) -> Result<ModelParams, Failure> {
    let path = Path::new(spec);
    if path.extension().is_some_and(|e| e == "json") {
        input(path)?;
    }
    Ok(load_model(spec, Path::new("."))?)
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(input(path)?).map_err(|e| Failure::io(path, e))
}

/// Scenario file plus whether it fixed its own seed.
fn scenario(path: &Path) -> Result<(ScenarioConfig, bool), Failure> {
    let kv = parse_key_values(&read_text(path)?)?;
    let has_seed = kv.raw("rng_seed").is_some();
    let cfg = scenario_from_pairs(&kv, path.parent().unwrap_or(Path::new(".")))?;
    Ok((cfg, has_seed))
}

fn trials(path: &Path, opts: &IngestOptions) -> Result<Vec<TrialRecord>, Failure> {
    Ok(ingest_trials(input(path)?, opts)?)
}

pub struct CalibrateArgs {
    pub trials: PathBuf,
    pub family: FamilyArg,
    pub flow_rules: bool,
    pub out: PathBuf,
    pub starts: usize,
    pub max_iter: usize,
    pub width_mode: WidthArg,
    pub holdout: Vec<String>,
    pub split_by: String,
    pub seed: Seed,
}

#[derive(Serialize)]
struct CalibrateConfig<'a> {
    family: Family,
    flow_rules: bool,
    fit: &'a FitOptions,
    width_mode: WidthMode,
    holdout: &'a [String],
    split_by: &'a str,
    training_records: usize,
    validation_records: usize,
}

#[derive(Serialize)]
struct Diagnostics<'a> {
    decision_converged: bool,
    initiation_converged: bool,
    decision_iterations: usize,
    initiation_iterations: usize,
    decision_start_nlls: &'a [f64],
    initiation_start_nlls: &'a [f64],
    singular_information: bool,
}

pub fn calibrate(a: CalibrateArgs) -> Result<(), Failure> {
    if a.starts == 0 {
        return Err(Failure::invalid("--starts must be at least 1"));
    }
    let dir = out_dir(&a.out)?;
    let opts = IngestOptions {
        width_mode: match a.width_mode {
            WidthArg::PerTrial => WidthMode::PerTrial,
            WidthArg::ScenarioAverage => WidthMode::ScenarioAverage,
        },
        ..IngestOptions::default()
    };
    let records = trials(&a.trials, &opts)?;
    let by: SplitBy = a.split_by.parse()?;
    let (train, validation) = split_trials(&records, by, &a.holdout);
    if train.is_empty() {
        return Err(Failure::invalid("no training records left after the hold-out split"));
    }
    let family = match a.family {
        FamilyArg::Sw => Family::ShiftedWald,
        FamilyArg::Gauss => Family::Gaussian,
    };
    let mut fit_opts = FitOptions {
        starts: a.starts,
        seed: a.seed.value,
        ..FitOptions::default()
    };
    fit_opts.optim.max_iterations = a.max_iter;
    let manifest = RunManifest::new("calibrate", a.seed, &dir)
        .input("trials", &a.trials)
        .config(CalibrateConfig {
            family,
            flow_rules: a.flow_rules,
            fit: &fit_opts,
            width_mode: opts.width_mode,
            holdout: &a.holdout,
            split_by: &a.split_by,
            training_records: train.len(),
            validation_records: validation.len(),
        });
    write_json(&dir.join("manifest.json"), &manifest)?;

    let fit: ModelFit = fit_model(&train, family, a.flow_rules, &fit_opts)?;
    write_json(&dir.join("fit.json"), &fit)?;
    write_json(&dir.join("params.json"), &fit.params)?;
    if !validation.is_empty() {
        write_json(&dir.join("validation.json"), &assess(&validation, &fit.params)?)?;
    }
    if !fit.converged() {
        write_json(
            &dir.join("diagnostics.json"),
            &Diagnostics {
                decision_converged: fit.decision.converged,
                initiation_converged: fit.initiation.converged,
                decision_iterations: fit.decision.iterations,
                initiation_iterations: fit.initiation.iterations,
                decision_start_nlls: &fit.decision.start_nlls,
                initiation_start_nlls: &fit.initiation.start_nlls,
                singular_information: fit.decision.singular_information || fit.initiation.singular_information,
            },
        )?;
        return Err(Failure::Numerical(anyhow::anyhow!(
            "fit did not converge; see {}",
            dir.join("diagnostics.json").display()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct GapPrediction {
    index: usize,
    gap_s: f64,
    t_pass_s: f64,
    theta_dot_radps: f64,
    x1: u8,
    x2: u8,
    /// Acceptance probability for a pedestrian who rejected every earlier gap.
    p_conditional: f64,
    /// Probability that a pedestrian crosses in this gap.
    p_unconditional: f64,
    initiation_mean_s: f64,
    initiation_sd_s: f64,
}

#[derive(Serialize)]
struct Prediction {
    gaps: Vec<GapPrediction>,
    total_crossing_probability: f64,
    never_cross_probability: f64,
    fleet_clear_s: f64,
}

pub fn predict(params: Option<&str>, scenario_path: &Path, out: &Path, dt: f64, tail: f64, seed: Seed) -> Result<(), Failure> {
    let dir = out_dir(out)?;
    let (mut cfg, _) = scenario(scenario_path)?;
    if let Some(spec) = params {
        cfg.model = model(spec)?;
    }
    let mut manifest = RunManifest::new("predict", seed, &dir)
        .input("scenario", scenario_path)
        .config(&cfg);
    if let Some(spec) = params {
        manifest.inputs.insert("params", spec.to_string());
    }
    write_json(&dir.join("manifest.json"), &manifest)?;

    let schedule = build_schedule(&cfg)?;
    let contexts = schedule.survivor_contexts();
    let big_p = unconditional_gap_probs(&contexts, &cfg.model.decision)?;
    let mut gaps = Vec::with_capacity(contexts.len());
    for ((g, ctx), &p) in schedule.gaps.iter().zip(&contexts).zip(&big_p) {
        let dist = cfg.model.initiation.link(g.theta_dot)?;
        gaps.push(GapPrediction {
            index: g.index,
            gap_s: g.gap_s,
            t_pass_s: g.t_pass_s,
            theta_dot_radps: g.theta_dot,
            x1: rule_x1(ctx),
            x2: rule_x2(ctx),
            p_conditional: gap_acceptance_prob(ctx, &cfg.model.decision)?,
            p_unconditional: p,
            initiation_mean_s: dist.mean(),
            initiation_sd_s: dist.std_dev(),
        });
    }
    let total: f64 = big_p.iter().sum();
    write_json(
        &dir.join("prediction.json"),
        &Prediction {
            gaps,
            total_crossing_probability: total,
            never_cross_probability: 1.0 - total,
            fleet_clear_s: schedule.fleet_clear_s,
        },
    )?;
    write_csv(&dir.join("density.csv"), &density_timeline(&schedule, &cfg.model, dt, tail)?)
}

#[derive(Serialize)]
struct SimSummary<'a> {
    pedestrian_count: usize,
    rng_seed: u64,
    schedule: &'a crossing_core::sim::GapSchedule,
    accepted_per_gap: &'a [usize],
    never_crossed: usize,
    acceptance_frequencies: Vec<f64>,
    analytic_probabilities: Vec<f64>,
    conserved: bool,
}

#[derive(Serialize)]
struct OutcomeRow {
    agent: usize,
    spawn_x_m: f64,
    spawn_y_m: f64,
    accepted_gap: Option<usize>,
    t_int_s: Option<f64>,
    crossing_start_s: Option<f64>,
    crossing_end_s: Option<f64>,
    max_lateral_offset_m: f64,
    final_phase: &'static str,
}

#[derive(Serialize)]
struct TrajectoryRow {
    agent: usize,
    t: f64,
    x: f64,
    y: f64,
    phase: &'static str,
}

pub fn simulate(
    scenario_path: &Path,
    agents: Option<usize>,
    out: &Path,
    trajectories: bool,
    seed_arg: Option<u64>,
) -> Result<(), Failure> {
    let dir = out_dir(out)?;
    let (mut cfg, has_seed) = scenario(scenario_path)?;
    let seed = match (seed_arg, has_seed) {
        (None, true) => Seed {
            value: cfg.rng_seed,
            generated: false,
        },
        _ => Seed::resolve(seed_arg),
    };
    cfg.rng_seed = seed.value;
    if let Some(n) = agents {
        cfg.pedestrian_count = n;
    }
    cfg.record_trajectories |= trajectories;
    cfg.validate()?;
    write_json(
        &dir.join("manifest.json"),
        &RunManifest::new("simulate", seed, &dir).input("scenario", scenario_path).config(&cfg),
    )?;

    let result = run_simulation(&cfg)?;
    let analytic = unconditional_gap_probs(&result.schedule.survivor_contexts(), &cfg.model.decision)?;
    write_json(
        &dir.join("result.json"),
        &SimSummary {
            pedestrian_count: result.pedestrian_count,
            rng_seed: result.rng_seed,
            schedule: &result.schedule,
            accepted_per_gap: &result.accepted_per_gap,
            never_crossed: result.never_crossed,
            acceptance_frequencies: result.acceptance_frequencies(),
            analytic_probabilities: analytic,
            conserved: result.is_conserved(),
        },
    )?;
    let rows: Vec<OutcomeRow> = result
        .outcomes
        .iter()
        .map(|o| OutcomeRow {
            agent: o.agent,
            spawn_x_m: o.spawn[0],
            spawn_y_m: o.spawn[1],
            accepted_gap: o.accepted_gap,
            t_int_s: o.t_int_s,
            crossing_start_s: o.crossing_start_s,
            crossing_end_s: o.crossing_end_s,
            max_lateral_offset_m: o.max_lateral_offset_m,
            final_phase: o.final_phase.as_str(),
        })
        .collect();
    write_csv(&dir.join("outcomes.csv"), &rows)?;
    if cfg.record_trajectories {
        let steps: Vec<TrajectoryRow> = result
            .outcomes
            .iter()
            .flat_map(|o| {
                o.trajectory.iter().map(move |s| TrajectoryRow {
                    agent: o.agent,
                    t: s.t_s,
                    x: s.x_m,
                    y: s.y_m,
                    phase: s.phase.as_str(),
                })
            })
            .collect();
        write_csv(&dir.join("trajectories.csv"), &steps)?;
    }
    Ok(())
}

pub fn evaluate(pred: &str, trials_path: &Path, out: &Path, seed: Seed) -> Result<(), Failure> {
    let dir = out_dir(out)?;
    let params = model(pred)?;
    let mut manifest = RunManifest::new("evaluate", seed, &dir).input("trials", trials_path).config(params);
    manifest.inputs.insert("pred", pred.to_string());
    write_json(&dir.join("manifest.json"), &manifest)?;
    let data = trials(trials_path, &IngestOptions::default())?;
    let result = assess(&data, &params)?;
    write_json(&dir.join("evaluation.json"), &result)?;
    write_csv(&dir.join("conditions.csv"), &result.conditions)
}

#[derive(Serialize)]
struct SynthSidecar<'a> {
    run: RunManifest,
    ground_truth: &'a SynthManifest,
}

pub fn synth(params: &str, design_path: Option<&Path>, n: usize, out: &Path, seed: Seed) -> Result<(), Failure> {
    let truth = model(params)?;
    let design = match design_path {
        Some(p) => parse_design(&read_text(p)?)?,
        None => Design::grid(),
    };
    let records = synth_dataset(&truth, &design, n, seed.value)?;
    write_trials(create(out)?, &records)?;
    let ground_truth = SynthManifest {
        params: truth,
        design: design.clone(),
        n,
        seed: seed.value,
        records: records.len(),
    };
    let mut run = RunManifest::new("synth", seed, out).config(&design);
    run.inputs.insert("params", params.to_string());
    if let Some(p) = design_path {
        run = run.input("design", p);
    }
    write_json(
        &sidecar(out, "manifest.json"),
        &SynthSidecar {
            run,
            ground_truth: &ground_truth,
        },
    )
}

pub struct ExportArgs {
    pub kind: String,
    pub params: String,
    pub trials: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
    pub dt: f64,
    pub tail: f64,
    pub out: PathBuf,
    pub seed: Seed,
}

fn emit<T: Serialize>(out: &Path, rows: &[T]) -> Result<(), Failure> {
    if out.extension().is_some_and(|e| e == "json") {
        write_json(out, &rows)
    } else {
        write_csv(out, rows)
    }
}

pub fn export_plots(a: ExportArgs) -> Result<(), Failure> {
    let kind: PlotKind = a.kind.parse()?;
    let params = model(&a.params)?;
    let mut run = RunManifest::new("export-plots", a.seed, &a.out).config(serde_json::json!({
        "kind": kind,
        "params": params,
        "dt_s": a.dt,
        "tail_s": a.tail,
    }));
    run.inputs.insert("params", a.params.clone());
    let need_trials = || {
        a.trials
            .as_deref()
            .ok_or_else(|| Failure::invalid(format!("--trials is required for {}", a.kind)))
    };
    match kind {
        PlotKind::GapAcceptanceGrid | PlotKind::InitiationMeans => {
            let path = need_trials()?;
            run = run.input("trials", path);
            let data = trials(path, &IngestOptions::default())?;
            if kind == PlotKind::GapAcceptanceGrid {
                emit(&a.out, &gap_acceptance_grid(&data, &params)?)?;
            } else {
                emit(&a.out, &initiation_means(&data, &params)?)?;
            }
        }
        PlotKind::DensityTimeline => {
            let path = a
                .scenario
                .as_deref()
                .ok_or_else(|| Failure::invalid("--scenario is required for density-timeline"))?;
            run = run.input("scenario", path);
            let (mut cfg, _) = scenario(path)?;
            cfg.model = params;
            let schedule = build_schedule(&cfg)?;
            emit(&a.out, &density_timeline(&schedule, &params, a.dt, a.tail)?)?;
        }
    }
    write_json(&sidecar(&a.out, "manifest.json"), &run)
}
