use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::pipeline::{cmd_solve_dp, cmd_train, load_train_summary, Layout, World};
use super::report::{cmd_benchmark, traffic_solution, BenchmarkRun};
use crate::dp::{
    backward_induction, bellman_residual, brute_force_oracle, GridSpec, Problem, SuccessorScheme, TerminalPenalty,
};
use crate::error::{Error, Result};
use crate::mpc::{detect_lead, run_closed_loop, ClosedLoopSetup, TerminalSource};
use crate::nn::{Branch, Ensemble, TerminalCostNet, Variant};
use crate::vehicle::{ControlInput, EgoState, VehicleParams};
use crate::world::{build_scenario, greenshield_speed, LimitChange, Route, TrafficJam, TrafficLight};

/// One named property of the suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Property {
    pub id: usize,
    pub name: &'static str,
    pub summary: &'static str,
}

pub const PROPERTIES: [Property; 9] = [
    Property { id: 1, name: "oracle_equivalence", summary: "DP equals exhaustive search on 50 tiny instances" },
    Property { id: 2, name: "bellman_residual", summary: "zero residual on a 50-step sweep" },
    Property { id: 3, name: "principle_of_optimality", summary: "exact-terminal MPC within 1% of DP on route1/route2" },
    Property { id: 4, name: "trend_ordering", summary: "EFC dp <= ensemble <= ag, ensemble >= 1% below ag, time <= +3%" },
    Property { id: 5, name: "constraint_safety", summary: "no signal or lead-gap violations in benchmark runs" },
    Property { id: 6, name: "nn_fidelity", summary: "ag relative RMSE <= 10%, gradients match finite differences" },
    Property { id: 7, name: "ensemble_switching", summary: "ag branch without a lead, aw exactly when the lead is sensed" },
    Property { id: 8, name: "jam_model", summary: "Greenshield slope, window branch, value dominance" },
    Property { id: 9, name: "determinism", summary: "two pipeline runs give byte-identical reports" },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyOutcome {
    pub id: usize,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    /// Seed that reproduces the check.
    pub seed: u64,
    pub elapsed_s: f64,
}

impl PropertyOutcome {
    pub fn line(&self) -> String {
        format!(
            "{} {}. {} ({:.1} s, seed {}): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.elapsed_s,
            self.seed,
            self.detail
        )
    }
}

pub const ORACLE_INSTANCES: usize = 50;
pub const PRINCIPLE_REL_TOL: f64 = 0.01;
pub const MIN_EFC_REDUCTION_PCT: f64 = 1.0;
pub const MAX_TIME_INCREASE_PCT: f64 = 3.0;
pub const MAX_AG_REL_RMSE: f64 = 0.10;
pub const GRADIENT_POINTS: usize = 100;
pub const GRADIENT_REL_TOL: f64 = 1e-4;
pub const MAX_NODES_PER_STEP: usize = 5000;

type Check = (bool, String);

fn tiny_grid() -> GridSpec {
    GridSpec {
        dsoc: 0.01,
        time_slack_s: 12.0,
        slack_per_light_s: 0.0,
        ..GridSpec::default()
    }
}

fn limit(v: f64) -> Vec<LimitChange> {
    vec![LimitChange { start_m: 0.0, limit_mps: v }]
}

/// Seeded instance with `n <= 8` steps and at most six controls.
pub fn tiny_instance(seed: u64) -> Result<(Route, Vec<ControlInput>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=8usize);
    let k = if n <= 6 { 6 } else { 4 };
    let accels = [-2.0, -1.0, 0.0, 0.5, 1.0, 2.0];
    let mut controls: Vec<ControlInput> = Vec::new();
    while controls.len() < k {
        let u = ControlInput::new(accels[rng.random_range(0..accels.len())], rng.random_bool(0.5));
        if !controls.contains(&u) {
            controls.push(u);
        }
    }
    // At least one positive acceleration so the start can move.
    if controls.iter().all(|u| u.accel_mps2 <= 0.0) {
        controls[0] = ControlInput::new(1.0, false);
    }
    let length = 10.0 * n as f64;
    let lights = if rng.random_bool(0.5) {
        let pos = 10.0 * rng.random_range(1..n) as f64;
        vec![TrafficLight { position_m: pos, cycle_s: 20.0, green_s: 10.0, offset_s: rng.random_range(0..20) as f64 }]
    } else {
        Vec::new()
    };
    let jams = if rng.random_bool(0.3) {
        vec![TrafficJam {
            x_start_m: 10.0,
            x_end_m: length,
            t_start_s: 0.0,
            t_end_s: 10.0,
            density_veh_per_km: 150.0,
            greenshield_c1: 0.1,
            greenshield_c2: 20.0,
        }]
    } else {
        Vec::new()
    };
    let route = Route::new(format!("tiny{seed}"), length, 10.0, limit(rng.random_range(8..=15) as f64), lights, jams)?;
    Ok((route, controls))
}

/// Criterion 1.
pub fn check_oracle_equivalence(seed: u64) -> Result<Check> {
    let params = VehicleParams::default();
    let penalty = TerminalPenalty::default();
    let spec = tiny_grid();
    let mut compared = 0;
    let mut infeasible = 0;
    for i in 0..ORACLE_INSTANCES as u64 {
        let (route, controls) = tiny_instance(seed.wrapping_add(i))?;
        let x0 = EgoState::new(0.0, 0.25, 0.0);
        let grid = spec.build(&route, &x0, None)?;
        let problem = Problem::new(&route, &params, 0.8, controls).with_scheme(SuccessorScheme::Snap);
        let sol = backward_induction(&problem, &grid, &penalty, "")?;
        let start = problem
            .corners(grid.layer(0), &x0)
            .ok_or_else(|| Error::Config("tiny start outside its grid".into()))?;
        let node = grid.layer(0).state(start.idx[0]);
        let dp = sol.value.node_value(0, start.idx[0]);
        match brute_force_oracle(&problem, &grid, &node, &penalty) {
            Ok((best, _)) => {
                if best.to_bits() != dp.to_bits() {
                    return Ok((false, format!("instance seed {}: dp {dp} vs oracle {best}", seed + i)));
                }
                compared += 1;
            }
            Err(Error::NoSolution(_)) if dp.is_infinite() => infeasible += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((
        compared > 0,
        format!("{compared} feasible and {infeasible} infeasible instances agree bit for bit"),
    ))
}

/// Criterion 2.
pub fn check_bellman_residual() -> Result<Check> {
    let params = VehicleParams::default();
    let penalty = TerminalPenalty::default();
    let spec = GridSpec {
        dsoc: 0.01,
        slack_per_light_s: 0.0,
        ..GridSpec::default()
    };
    let route = Route::new(
        "residual",
        500.0,
        10.0,
        limit(15.0),
        vec![TrafficLight { position_m: 250.0, cycle_s: 60.0, green_s: 30.0, offset_s: 10.0 }],
        Vec::new(),
    )?;
    let x0 = EgoState::new(0.0, 0.25, 0.0);
    let grid = spec.build(&route, &x0, None)?;
    let widest = (0..=grid.last_step()).map(|s| grid.layer(s).node_count()).max().unwrap_or(0);
    let problem = Problem::new(&route, &params, 0.8, spec.controls());
    let sol = backward_induction(&problem, &grid, &penalty, "")?;
    let (residual, mismatches) = bellman_residual(&problem, &sol);
    Ok((
        residual == 0.0 && mismatches == 0 && widest <= MAX_NODES_PER_STEP && route.step_count() == 50,
        format!("max residual {residual:e}, {mismatches} policy mismatches, widest layer {widest} nodes"),
    ))
}

/// Criterion 3.
pub fn check_principle_of_optimality(cfg: &PipelineConfig, layout: &Layout) -> Result<Check> {
    let mut details = Vec::new();
    let mut ok = true;
    for id in &cfg.benchmark.routes {
        let world = World::resolve(build_scenario(id)?, cfg)?;
        let (sol, traj) = traffic_solution(&world, cfg, layout)?;
        let dp = traj.metrics().total_cost + cfg.penalty.eval(&traj.final_state);
        let setup = ClosedLoopSetup {
            route: &world.scenario.route,
            x0: world.scenario.ego.state(),
            lead: world.lead.as_ref(),
            params: &cfg.vehicle,
            grid: &cfg.grid,
            penalty: &cfg.penalty,
        };
        let r = run_closed_loop(&setup, &cfg.mpc, TerminalSource::ExactDp(&sol))?;
        let mpc = r.objective();
        let pass = mpc >= dp && mpc <= (1.0 + PRINCIPLE_REL_TOL) * dp;
        ok &= pass;
        details.push(format!("{id}: mpc {mpc:.4} vs dp {dp:.4} ({:+.4}%)", 100.0 * (mpc - dp) / dp));
    }
    Ok((ok, details.join("; ")))
}

/// Criterion 4.
pub fn check_trend(run: &BenchmarkRun) -> Check {
    let mut ok = true;
    let mut details = Vec::new();
    for d in &run.report.deltas {
        let get = |c: &str| run.report.row(&d.route, c).and_then(|r| r.efc_g);
        let (Some(dp), Some(en), Some(ag)) = (get("dp"), get("ensemble_mpc"), get("ag_nn_mpc")) else {
            ok = false;
            details.push(format!("{}: missing controller result", d.route));
            continue;
        };
        let efc = d.efc_pct.unwrap_or(f64::NAN);
        let time = d.time_pct.unwrap_or(f64::NAN);
        let pass = dp <= en && en <= ag && efc <= -MIN_EFC_REDUCTION_PCT && time <= MAX_TIME_INCREASE_PCT;
        ok &= pass;
        details.push(format!(
            "{}: efc dp {dp:.2} / ensemble {en:.2} / ag {ag:.2}, ensemble vs ag efc {efc:+.2}% time {time:+.2}%",
            d.route
        ));
    }
    (ok, details.join("; "))
}

/// Criterion 5.
pub fn check_safety(run: &BenchmarkRun) -> Check {
    let mut signal = 0;
    let mut gap = 0;
    let mut runs = 0;
    for r in &run.report.rows {
        if let Some(v) = r.violations {
            signal += v.signal;
            gap += v.lead_gap;
            runs += 1;
        }
    }
    let all = run.report.rows.len();
    (
        runs == all && signal == 0 && gap == 0,
        format!("{runs}/{all} runs audited, {signal} signal and {gap} lead-gap violations"),
    )
}

/// Largest relative gap between the analytic input gradient and central
/// differences over `points` seeded inputs around the training data.
pub fn gradient_check(net: &TerminalCostNet, points: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..points {
        let x: Vec<f64> = net
            .in_mean
            .iter()
            .zip(&net.in_scale)
            .map(|(m, s)| m + s * rng.random_range(-2.0..2.0))
            .collect();
        let g = net.input_gradient(&x)?;
        let mut fd = vec![0.0; x.len()];
        for i in 0..x.len() {
            let h = 1e-4 * net.in_scale[i];
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            fd[i] = (net.forward_raw(&xp)? - net.forward_raw(&xm)?) / (2.0 * h);
        }
        let err: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let norm: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
        worst = worst.max(err / norm);
    }
    Ok(worst)
}

/// Criterion 6.
pub fn check_nn_fidelity(layout: &Layout, seed: u64) -> Result<Check> {
    let summary = load_train_summary(layout, Variant::Ag)?;
    let ag = TerminalCostNet::load(&layout.net(Variant::Ag))?;
    let aw = TerminalCostNet::load(&layout.net(Variant::Aw))?;
    let g_ag = gradient_check(&ag, GRADIENT_POINTS, seed)?;
    let g_aw = gradient_check(&aw, GRADIENT_POINTS, seed)?;
    let rmse = summary.val_relative_rmse;
    Ok((
        rmse <= MAX_AG_REL_RMSE && g_ag <= GRADIENT_REL_TOL && g_aw <= GRADIENT_REL_TOL,
        format!("ag held-out relative RMSE {:.2}%, gradient rel. error ag {g_ag:.2e} aw {g_aw:.2e}", 100.0 * rmse),
    ))
}

/// Criterion 7. The lead-free comparison runs on the first benchmark route
/// with its jams removed.
pub fn check_switching(cfg: &PipelineConfig, layout: &Layout, run: &BenchmarkRun) -> Result<Check> {
    let ag = TerminalCostNet::load(&layout.net(Variant::Ag))?;
    let aw = TerminalCostNet::load(&layout.net(Variant::Aw))?;
    let ensemble = Ensemble::new(ag.clone(), aw)?;
    let mut details = Vec::new();
    let mut ok = true;

    if let Some(world) = run.worlds.first() {
        let route = world.scenario.route.without_jams();
        let setup = ClosedLoopSetup {
            route: &route,
            x0: world.scenario.ego.state(),
            lead: None,
            params: &cfg.vehicle,
            grid: &cfg.grid,
            penalty: &cfg.penalty,
        };
        let a = run_closed_loop(&setup, &cfg.mpc, TerminalSource::AgNn(&ag))?;
        let e = run_closed_loop(&setup, &cfg.mpc, TerminalSource::EnsembleNn(&ensemble))?;
        let same = a.trajectory == e.trajectory && e.diagnostics.iter().all(|d| d.branch == Branch::Ag);
        ok &= same;
        details.push(format!("{} without lead or jam: identical {same}", world.name()));
    }

    for (route_id, controller, r) in run.mpc.iter().filter(|m| m.1 == "ensemble_mpc") {
        let Some(world) = run.worlds.iter().find(|w| w.name() == route_id) else { continue };
        let mut bad = 0;
        let mut aw_steps = 0;
        for d in &r.diagnostics {
            let x = world.scenario.route.position(d.s);
            let sensed = world.lead.as_ref().is_some_and(|l| detect_lead(x, l.state_at(d.t_s).0, cfg.mpc.sensing_range_m));
            let aw = d.branch == Branch::Aw;
            aw_steps += usize::from(aw);
            if sensed != aw || d.lead_detected != sensed {
                bad += 1;
            }
        }
        ok &= bad == 0;
        details.push(format!("{route_id} {controller}: {aw_steps} aw steps, {bad} mismatches"));
    }
    Ok((ok, details.join("; ")))
}

/// Criterion 8.
pub fn check_jam_model() -> Result<Check> {
    let (c1, c2) = (0.1, 20.0);
    let slope = (greenshield_speed(c1, c2, 120.0) - greenshield_speed(c1, c2, 40.0)) / 80.0;
    let linear = (slope + c1).abs() <= 1e-12;

    let jam = TrafficJam {
        x_start_m: 100.0,
        x_end_m: 300.0,
        t_start_s: 10.0,
        t_end_s: 50.0,
        density_veh_per_km: 100.0,
        greenshield_c1: c1,
        greenshield_c2: c2,
    };
    let base = Route::new("jam", 500.0, 10.0, limit(15.0), Vec::new(), Vec::new())?;
    let jammed = base.with_jams(vec![jam])?;
    let v_jam = jam.jam_speed()?;
    let probes = [
        (200.0, 20.0, v_jam),
        (100.0, 10.0, v_jam),
        (300.0, 20.0, 15.0),
        (200.0, 50.0, 15.0),
        (50.0, 20.0, 15.0),
        (200.0, 5.0, 15.0),
    ];
    let branch = probes.iter().all(|&(x, t, want)| jammed.effective_speed_limit(x, t) == want);

    // Dominance on a shared grid, so both sweeps see the same nodes.
    let params = VehicleParams::default();
    let penalty = TerminalPenalty::default();
    let spec = GridSpec { dsoc: 0.01, ..GridSpec::default() };
    let x0 = EgoState::new(0.0, 0.25, 0.0);
    let grid = spec.build(&base, &x0, None)?;
    let mut dominance = true;
    let mut values = Vec::new();
    for scheme in [SuccessorScheme::Snap, SuccessorScheme::Interpolate] {
        let j = |route: &Route| -> Result<f64> {
            let p = Problem::new(route, &params, 0.8, spec.controls()).with_scheme(scheme);
            backward_induction(&p, &grid, &penalty, "")?.initial_value(&x0)
        };
        let (free, slowed) = (j(&base)?, j(&jammed)?);
        dominance &= slowed >= free;
        values.push(format!("{scheme:?} {free:.4} -> {slowed:.4}"));
    }
    Ok((
        linear && branch && dominance,
        format!("slope {slope}, window branch {branch}, J0 without -> with jam: {}", values.join(", ")),
    ))
}

/// Settings for the determinism rerun: fewer and shorter scenarios, smaller
/// training sets and the first benchmark route only.
pub fn reduced_config(cfg: &PipelineConfig) -> PipelineConfig {
    let mut r = cfg.clone();
    r.corpus.synthetic = 2;
    r.corpus.include_benchmark = false;
    r.corpus.scenario_files.clear();
    r.corpus.ag_budget = 4000;
    r.corpus.aw_budget = 4000;
    r.train.epochs = 20;
    r.benchmark.routes.truncate(1);
    r
}

/// Solve, train both nets and benchmark.
pub fn run_pipeline(cfg: &PipelineConfig, layout: &Layout) -> Result<BenchmarkRun> {
    cmd_solve_dp(cfg, layout)?;
    cmd_train(cfg, layout, Variant::Ag)?;
    cmd_train(cfg, layout, Variant::Aw)?;
    cmd_benchmark(cfg, layout)
}

const REPORT_FILES: [&str; 3] = ["report.txt", "report.json", "report.csv"];

/// Criterion 9.
pub fn check_determinism(cfg: &PipelineConfig, root: &Path) -> Result<Check> {
    let reduced = reduced_config(cfg);
    let dirs = [root.join("a"), root.join("b")];
    for d in &dirs {
        run_pipeline(&reduced, &Layout::new(d))?;
    }
    let mut differing = Vec::new();
    let mut files: Vec<String> = REPORT_FILES.iter().map(|f| format!("benchmark/{f}")).collect();
    files.extend(["dp_summary.csv", "corpus/manifest.json", "nets/ag.nn", "nets/aw.nn"].map(String::from));
    for f in &files {
        let read = |d: &Path| std::fs::read(d.join(f)).map_err(|e| Error::io(d.join(f), e));
        if read(&dirs[0])? != read(&dirs[1])? {
            differing.push(f.clone());
        }
    }
    Ok((
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} artifacts byte-identical across two runs", files.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    ))
}

/// Runs the selected properties (all when `only` is empty), writing pipeline
/// artifacts under `layout`. Errors that are not property failures, such as
/// unreadable value functions, are returned as errors.
pub fn verify(cfg: &PipelineConfig, layout: &Layout, only: &[usize]) -> Result<Vec<PropertyOutcome>> {
    let wanted = |id: usize| only.is_empty() || only.contains(&id);
    let mut out = Vec::new();
    let mut record = |id: usize, seed: u64, f: &mut dyn FnMut() -> Result<Check>| -> Result<()> {
        let t = Instant::now();
        let (passed, detail) = f()?;
        let p = PROPERTIES[id - 1];
        out.push(PropertyOutcome {
            id,
            name: p.name.to_string(),
            passed,
            detail,
            seed,
            elapsed_s: t.elapsed().as_secs_f64(),
        });
        Ok(())
    };
    let seed = cfg.seed;
    if wanted(1) {
        record(1, seed, &mut || check_oracle_equivalence(seed))?;
    }
    if wanted(2) {
        record(2, seed, &mut || check_bellman_residual())?;
    }
    if wanted(8) {
        record(8, seed, &mut || check_jam_model())?;
    }
    let needs_run = [4, 5, 6, 7].iter().any(|&i| wanted(i));
    let run = if needs_run {
        let t = Instant::now();
        let run = run_pipeline(cfg, layout)?;
        Some((run, t.elapsed().as_secs_f64()))
    } else {
        None
    };
    if wanted(3) {
        record(3, seed, &mut || check_principle_of_optimality(cfg, layout))?;
    }
    if let Some((run, pipeline_s)) = &run {
        if wanted(4) {
            record(4, seed, &mut || {
                let (ok, d) = check_trend(run);
                Ok((ok, format!("{d}; pipeline {pipeline_s:.0} s")))
            })?;
        }
        if wanted(5) {
            record(5, seed, &mut || Ok(check_safety(run)))?;
        }
        if wanted(6) {
            record(6, seed, &mut || check_nn_fidelity(layout, seed))?;
        }
        if wanted(7) {
            record(7, seed, &mut || check_switching(cfg, layout, run))?;
        }
    }
    if wanted(9) {
        let root = layout.root.join("determinism");
        record(9, seed, &mut || check_determinism(cfg, &root))?;
    }
    out.sort_by_key(|o| o.id);
    Ok(out)
}
