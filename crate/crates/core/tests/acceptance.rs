//! Acceptance criteria. Runs as a plain binary so every criterion prints one
//! PASS/FAIL line whether or not output capture is on.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crossing_core::calibrate::{
    decision_to_vec, default_decision_init, fit_decision, fit_model, initiation_to_vec, nll_decision, FitOptions,
};
use crossing_core::cue::units::mph_to_mps;
use crossing_core::cue::{collision_cue, theta_dot, visual_angle, VehicleObservation};
use crossing_core::data::{synth_dataset, Design};
use crossing_core::decision::{
    gap_acceptance_prob, logistic, rule_x1, rule_x2, survival_weighted, unconditional_gap_probs, utility,
    with_rejection_history, DecisionParams, GapContext,
};
use crossing_core::evaluate::{bic, implied_sample_size, ks_one_sample, ks_two_sample};
use crossing_core::initiation::{sample_sw, sw_cdf, sw_pdf, SwParams};
use crossing_core::params::fixtures;
use crossing_core::quad::integrate;
use crossing_core::sim::{
    build_schedule, run_simulation, social_force_step, MetropolisHastings, PedestrianAgent,
    Phase, ScenarioConfig, SocialForceParams,
};
use crossing_core::Family;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within_time(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    check(
        elapsed.as_secs_f64() < limit_s,
        format!("took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64()),
    )
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let w = rng.random_range(1.0..3.0);
        let v = rng.random_range(5.0..30.0);
        let z = rng.random_range(5.0..100.0);
        let angle = |d: f64| visual_angle(&VehicleObservation::new(w, d, v).unwrap()).unwrap();
        // the gap closes at speed v, so dθ/dt = (θ(Z − v·h) − θ(Z + v·h)) / 2h
        let h = 1e-4 * z / v;
        let fd = (angle(z - v * h) - angle(z + v * h)) / (2.0 * h);
        let exact = collision_cue(&VehicleObservation::new(w, z, v).unwrap()).unwrap().theta_dot_radps;
        worst = worst.max(((fd - exact) / exact).abs());
    }
    check(worst < 1e-5, format!("finite-difference relative error {worst:.2e}"))?;

    let speeds = [5.0, 10.0, 15.0, 20.0, 25.0];
    for w in [1.5, 1.95, 2.5] {
        for d in [10.0, 30.0, 60.0] {
            let at_distance: Vec<f64> = speeds.iter().map(|&v| theta_dot(w, d, v).unwrap()).collect();
            check(
                at_distance.windows(2).all(|p| p[1] > p[0]),
                "fixed distance: faster vehicle should give a larger cue",
            )?;
        }
        for ttc in [2.0, 3.0, 5.0] {
            let at_ttc: Vec<f64> = speeds.iter().map(|&v| theta_dot(w, v * ttc, v).unwrap()).collect();
            check(
                at_ttc.windows(2).all(|p| p[1] < p[0]),
                "fixed time to collision: faster vehicle should give a smaller cue",
            )?;
        }
    }
    within_time(start.elapsed(), 1.0)?;
    Ok(format!("max FD rel. error {worst:.1e}; speed crossover holds on grid"))
}

fn inverse_gaussian_pdf(x: f64, b: f64, gamma: f64, tau: f64) -> f64 {
    let y = x - tau;
    if y <= 0.0 {
        return 0.0;
    }
    let mu = b / gamma;
    let lambda = b * b;
    (lambda / (2.0 * std::f64::consts::PI * y.powi(3))).sqrt() * (-lambda * (y - mu).powi(2) / (2.0 * mu * mu * y)).exp()
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_pdf: f64 = 0.0;
    let mut worst_mass: f64 = 0.0;
    for _ in 0..100 {
        let p = SwParams::new(rng.random_range(0.5..10.0), rng.random_range(0.2..5.0), rng.random_range(-2.0..2.0)).unwrap();
        let (mu, lambda) = p.inverse_gaussian();
        let sd = (mu.powi(3) / lambda).sqrt();
        for k in 1..=200 {
            let x = p.tau + k as f64 * (mu + 8.0 * sd) / 200.0;
            let a = sw_pdf(x, &p).unwrap();
            let e = inverse_gaussian_pdf(x, p.b, p.gamma, p.tau);
            if e > 0.0 {
                worst_pdf = worst_pdf.max(((a - e) / e).abs());
            }
        }
        let q = integrate(|x| sw_pdf(x, &p).unwrap(), p.tau, p.tau + mu + 60.0 * sd, 1e-11);
        worst_mass = worst_mass.max((q.value - 1.0).abs());
    }
    check(worst_pdf < 1e-12, format!("pdf relative error {worst_pdf:.2e}"))?;
    check(worst_mass < 1e-6, format!("|∫pdf − 1| = {worst_mass:.2e}"))?;

    let triples = [(1.0, 1.0, 0.0), (7.76, 2.5, -1.5), (6.06, 4.4, -1.3), (2.0, 0.5, 0.3), (0.8, 3.0, 1.0)];
    let mut min_p: f64 = 1.0;
    for (i, &(b, g, t)) in triples.iter().enumerate() {
        let p = SwParams::new(b, g, t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        let xs: Vec<f64> = (0..100_000).map(|_| sample_sw(&p, &mut rng).unwrap()).collect();
        let ks = ks_one_sample(&xs, |x| sw_cdf(x, &p).unwrap()).unwrap();
        min_p = min_p.min(ks.p);
    }
    check(min_p > 0.01, format!("exact sampler one-sample K-S min p = {min_p:.3}"))?;

    let p = SwParams::new(1.0, 1.0, 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let exact: Vec<f64> = (0..100_000).map(|_| sample_sw(&p, &mut rng).unwrap()).collect();
    let mh = MetropolisHastings {
        proposal_width: 2.0,
        burn_in: 1000,
        thin: 20,
    };
    let chain = mh.chain(|x| sw_pdf(x, &p).unwrap(), 1.0, 100_000, &mut rng).unwrap();
    let mh_ks = ks_two_sample(&exact, &chain.samples).unwrap();
    check(mh_ks.p > 0.01, format!("MH vs exact two-sample K-S p = {:.3}", mh_ks.p))?;
    within_time(start.elapsed(), 30.0)?;
    Ok(format!(
        "pdf err {worst_pdf:.1e}, mass err {worst_mass:.1e}, sampler K-S min p {min_p:.3}, MH K-S p {:.3}",
        mh_ks.p
    ))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let n = rng.random_range(1..15);
        let cues: Vec<f64> = (0..n).map(|_| rng.random_range(0.001..0.5)).collect();
        let p = DecisionParams::with_flow(
            rng.random_range(-4.0..0.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-15.0..0.0),
        );
        let raw: Vec<GapContext> = cues
            .iter()
            .enumerate()
            .map(|(i, &c)| GapContext::new(i + 1, c).with_following(cues.get(i + 1).copied()))
            .collect();
        let ctx = with_rejection_history(&raw);
        let got = unconditional_gap_probs(&ctx, &p).map_err(|e| e.to_string())?;
        check(got.iter().sum::<f64>() <= 1.0 + 1e-15, "sum of P_n exceeds 1")?;
        // unrolled: p_n · Π_{k<n} (1 − p_k)
        for (i, g) in got.iter().enumerate() {
            let cond = |c: &GapContext| logistic(utility(c.theta_dot_current, rule_x1(c), rule_x2(c), &p).unwrap());
            let survive: f64 = ctx[..i].iter().map(|c| 1.0 - cond(c)).product();
            worst = worst.max((g - cond(&ctx[i]) * survive).abs());
        }
    }
    check(worst < 1e-12, format!("max deviation from product form {worst:.2e}"))?;

    check(survival_weighted(&[0.5, 0.5, 0.5]) == vec![0.5, 0.25, 0.125], "p = 0.5 fixture via survival weights")?;
    let half = DecisionParams::without_flow(0.0, 0.0);
    let ctx: Vec<GapContext> = (1..=3).map(|i| GapContext::new(i, 0.02)).collect();
    let fixture = unconditional_gap_probs(&with_rejection_history(&ctx), &half).map_err(|e| e.to_string())?;
    check(fixture == vec![0.5, 0.25, 0.125], format!("p = 0.5 fixture gave {fixture:?}"))?;
    Ok(format!("10^4 sequences, max deviation {worst:.1e}; (0.5,0.5,0.5) -> (0.5,0.25,0.125)"))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let truth = fixtures::flow_sw();
    let truth_vec: Vec<f64> = decision_to_vec(&truth.decision)
        .into_iter()
        .chain(initiation_to_vec(&truth.initiation))
        .collect();
    let seeds = 25;
    let mut covered = vec![0usize; truth_vec.len()];
    let mut max_spread: f64 = 0.0;
    for seed in 0..seeds {
        let data = synth_dataset(&truth, &Design::random_flow(), 5000, 4000 + seed).map_err(|e| e.to_string())?;
        let opts = FitOptions {
            seed,
            ..FitOptions::default()
        };
        let fit = fit_model(&data, Family::ShiftedWald, true, &opts).map_err(|e| e.to_string())?;
        for i in 0..4 {
            covered[i] += usize::from(fit.decision.covers(i, truth_vec[i]));
        }
        for i in 0..5 {
            covered[4 + i] += usize::from(fit.initiation.covers(i, truth_vec[4 + i]));
        }
        max_spread = max_spread.max(fit.decision.start_spread()).max(fit.initiation.start_spread());
    }
    let total: usize = covered.iter().sum();
    let rate = total as f64 / (seeds as usize * truth_vec.len()) as f64;
    check(rate >= 0.8, format!("pooled CI coverage {rate:.3}"))?;
    check(max_spread < 1e-3, format!("multi-start NLL spread {max_spread:.2e}"))?;
    within_time(start.elapsed(), 120.0)?;
    Ok(format!(
        "pooled coverage {rate:.3} (per parameter of 25: {covered:?}), max start spread {max_spread:.1e}"
    ))
}

fn criterion_5() -> Outcome {
    let params = fixtures::single_gap_sw();
    let speeds = fixtures::GRID_SPEEDS_MPH;
    let gaps = fixtures::GRID_GAPS_S;
    let mut accept = [[0.0; 4]; 3];
    let mut mean_t = [[0.0; 4]; 3];
    for (i, &mph) in speeds.iter().enumerate() {
        let v = mph_to_mps(mph);
        for (j, &gap) in gaps.iter().enumerate() {
            let cue = theta_dot(fixtures::VEHICLE_WIDTH_M, v * gap - 4.5, v).map_err(|e| e.to_string())?;
            accept[i][j] = gap_acceptance_prob(&GapContext::new(1, cue), &params.decision).map_err(|e| e.to_string())?;
            mean_t[i][j] = params.initiation.link(cue).map_err(|e| e.to_string())?.mean();
        }
    }
    for i in 0..3 {
        check(accept[i].windows(2).all(|w| w[1] > w[0]), format!("acceptance not increasing in gap at {} mph", speeds[i]))?;
        check(mean_t[i].windows(2).all(|w| w[1] > w[0]), format!("mean t_int not increasing in gap at {} mph", speeds[i]))?;
    }
    for j in 0..4 {
        check((0..2).all(|i| accept[i + 1][j] > accept[i][j]), format!("acceptance not increasing in speed at {} s", gaps[j]))?;
        check((0..2).all(|i| mean_t[i + 1][j] > mean_t[i][j]), format!("mean t_int not increasing in speed at {} s", gaps[j]))?;
    }
    Ok(format!(
        "acceptance 25mph {:.3?} .. 35mph {:.3?}; mean t_int 25mph {:.3?} .. 35mph {:.3?}",
        accept[0], accept[2], mean_t[0], mean_t[2]
    ))
}

fn criterion_6() -> Outcome {
    let v = mph_to_mps(fixtures::FLOW_SPEED_MPH);
    let cfg = ScenarioConfig::new(fixtures::SCENARIO_ONE.to_vec(), v, fixtures::flow_sw());
    let schedule = build_schedule(&cfg).map_err(|e| e.to_string())?;
    let survivors = schedule.survivor_contexts();
    let big_p = unconditional_gap_probs(&survivors, &cfg.model.decision).map_err(|e| e.to_string())?;
    let three = &big_p[3..6];
    check(three[0] > three[1] && three[1] > three[2], format!("P over the 3 s gaps {three:?}"))?;

    let mut no_flow = fixtures::flow_sw().decision;
    no_flow.flow_rules_enabled = false;
    let cond: Vec<f64> = survivors
        .iter()
        .map(|c| gap_acceptance_prob(c, &no_flow))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    check(cond[3] == cond[4] && cond[4] == cond[5], format!("no-flow p over 3 s gaps {:?}", &cond[3..6]))?;
    check(cond[0] == cond[1] && cond[1] == cond[2], "no-flow p over the 1 s gaps differs")?;
    let g_prd = fixtures::flow_gauss().decision;
    let g_cond: Vec<f64> = survivors.iter().map(|c| gap_acceptance_prob(c, &g_prd).unwrap()).collect();
    check(g_cond[3] == g_cond[5], "G-PRD decision p differs between identical gaps")?;
    Ok(format!(
        "P(3 s gaps) = {:.4}, {:.4}, {:.4}; no-flow p = {:.4} for each",
        three[0], three[1], three[2], cond[3]
    ))
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut cfg = ScenarioConfig::new(
        fixtures::SCENARIO_ONE.to_vec(),
        mph_to_mps(fixtures::FLOW_SPEED_MPH),
        fixtures::flow_sw(),
    );
    cfg.pedestrian_count = 100_000;
    cfg.rng_seed = 2024;
    let a = run_simulation(&cfg).map_err(|e| e.to_string())?;
    let analytic = unconditional_gap_probs(&a.schedule.survivor_contexts(), &cfg.model.decision).map_err(|e| e.to_string())?;
    let worst = a
        .acceptance_frequencies()
        .iter()
        .zip(&analytic)
        .map(|(f, p)| (f - p).abs())
        .fold(0.0f64, f64::max);
    check(worst <= 0.01, format!("max |freq − P_n| = {worst:.4}"))?;
    check(a.is_conserved(), "accepted + never crossed != agents")?;
    let b = run_simulation(&cfg).map_err(|e| e.to_string())?;
    check(a == b, "rerun with the same seed differs")?;
    Ok(format!(
        "max |freq − P_n| = {worst:.4}; conserved; deterministic ({:.1} s for two runs)",
        start.elapsed().as_secs_f64()
    ))
}

fn criterion_8() -> Outcome {
    check((bic(0, 10, -5.0).unwrap() - 10.0).abs() < 1e-9, "bic(0,10,-5)")?;
    check((bic(2, 100, -50.0).unwrap() - (2.0 * 100f64.ln() + 100.0)).abs() < 1e-9, "bic(2,100,-50)")?;
    check((bic(2, 100, -50.0).unwrap() - 109.2103).abs() < 1e-4, "bic(2,100,-50) ≈ 109.2103")?;
    let implied = implied_sample_size(7, -108.43, 252.37).unwrap();
    let single_gap_bic = bic(7, implied.round() as usize, -108.43).unwrap();
    check((single_gap_bic - 252.37).abs() <= 0.5, format!("single-gap BIC {single_gap_bic:.2} at n = {}", implied.round()))?;

    let a = [1.0, 2.0, 3.0];
    let same = ks_two_sample(&a, &a).unwrap();
    check(same.d == 0.0 && same.p == 1.0, "identical samples")?;
    check(ks_two_sample(&a, &[10.0, 20.0, 30.0]).unwrap().d == 1.0, "disjoint samples")?;
    let third = ks_two_sample(&a, &[1.5, 2.5, 3.5]).unwrap().d;
    check((third - 1.0 / 3.0).abs() < 1e-15, format!("the 1/3 case gave {third}"))?;

    let truth = fixtures::flow_sw();
    let mut worst_gap = f64::INFINITY;
    let mut fits = 0;
    for (seed, design) in [Design::flow(), Design::random_flow()].iter().cycle().take(6).enumerate() {
        let n = if matches!(design.kind, crossing_core::data::DesignKind::Flow { .. }) { 150 } else { 3000 };
        let data = synth_dataset(&truth, design, n, 800 + seed as u64).map_err(|e| e.to_string())?;
        let opts = FitOptions::default();
        let flow = fit_decision(&data, &default_decision_init(true), &opts).map_err(|e| e.to_string())?;
        let plain = fit_decision(&data, &default_decision_init(false), &opts).map_err(|e| e.to_string())?;
        // the nested model's optimum, evaluated in the larger model, must not beat the larger fit
        worst_gap = worst_gap.min(plain.neg_log_likelihood - flow.neg_log_likelihood);
        let embedded = DecisionParams::with_flow(plain.estimates[0], 0.0, 0.0, plain.estimates[1]);
        check(
            (nll_decision(&data, &embedded).unwrap() - plain.neg_log_likelihood).abs() < 1e-9,
            "nested embedding",
        )?;
        fits += 1;
    }
    check(worst_gap >= -1e-9, format!("flow NLL exceeds no-flow NLL by {:.2e}", -worst_gap))?;
    Ok(format!(
        "BIC cases exact; single-gap implied n = {implied:.1} -> BIC {single_gap_bic:.2}; K-S fixtures exact; flow ≤ no-flow on {fits} fits (min margin {worst_gap:.2})"
    ))
}

fn criterion_9() -> Outcome {
    let params = SocialForceParams::default();
    let cfg = ScenarioConfig::new(vec![4.0], 13.4112, fixtures::flow_sw());
    let geometry = cfg.geometry();
    let mut agent = PedestrianAgent::new([0.0, 0.0]);
    agent.destination = [0.0, cfg.lane_width_m];
    agent.phase = Phase::Crossing;
    let mut t = 0.0;
    while agent.position[1] < cfg.lane_width_m {
        agent = social_force_step(&agent, &geometry, &params, cfg.timestep_s);
        t += cfg.timestep_s;
        check(t < 10.0, "crossing did not finish")?;
    }
    check((2.0..=3.5).contains(&t), format!("crossing took {t:.2} s"))?;

    let mut sim = ScenarioConfig::new(
        fixtures::SCENARIO_ONE.to_vec(),
        mph_to_mps(fixtures::FLOW_SPEED_MPH),
        fixtures::flow_sw(),
    );
    sim.pedestrian_count = 2000;
    sim.rng_seed = 9;
    sim.record_trajectories = true;
    let r = run_simulation(&sim).map_err(|e| e.to_string())?;
    let limit = 0.5 * sim.crosswalk_width_m;
    let worst = r
        .outcomes
        .iter()
        .flat_map(|o| o.trajectory.iter())
        .map(|s| s.x_m.abs())
        .fold(0.0f64, f64::max);
    check(worst <= limit, format!("lateral excursion {worst:.3} m beyond band limit {limit} m"))?;
    Ok(format!("3.5 m lane crossed in {t:.2} s; max |x| {worst:.3} m ≤ {limit} m"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("cue exactness", criterion_1),
        ("distribution correctness", criterion_2),
        ("recursion correctness", criterion_3),
        ("calibration recovery", criterion_4),
        ("dataset one pattern", criterion_5),
        ("dataset two pattern", criterion_6),
        ("simulation vs analytic", criterion_7),
        ("statistics exactness", criterion_8),
        ("kinematics sanity", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({secs:.1} s) {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({secs:.1} s) {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
