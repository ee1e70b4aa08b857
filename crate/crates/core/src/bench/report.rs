use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::pipeline::{write_json, write_text, CorpusVariant, Layout, World};
use crate::dp::{audit, load_solution, DpSolution, LeadConstraint, Trajectory, TripMetrics};
use crate::error::{Error, Result};
use crate::mpc::{run_closed_loop, ClosedLoopResult, ClosedLoopSetup, PlanStatus, TerminalSource};
use crate::nn::{Branch, Ensemble, TerminalCostNet, Variant};
use crate::world::{build_scenario, fmt_f64, LeadTrajectory, Route};

pub const CONTROLLERS: [&str; 3] = ["dp", "ag_nn_mpc", "ensemble_mpc"];

pub const REPORT_FOOTER: &str = "Absolute values come from a surrogate powertrain and are not comparable to \
published figures. Compare orderings and relative deltas only.";

pub const PLOT_COLUMNS: [&str; 5] = ["x_m", "v_mps", "soc", "cum_efc_g", "lead_gap_m"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportProvenance {
    pub config_hash: String,
    pub ag_net_sha256: String,
    pub aw_net_sha256: String,
    pub seed: u64,
    pub code_version: String,
}

/// Violation counts from an independent audit of a trajectory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violations {
    pub signal: usize,
    pub lead_gap: usize,
    pub speed: usize,
}

impl Violations {
    pub fn count(route: &Route, lead: Option<&LeadConstraint>, traj: &Trajectory) -> Self {
        let mut v = Violations::default();
        for e in audit(route, lead, traj) {
            let detail = match &e {
                Error::ConstraintViolation { detail, .. } => detail.as_str(),
                _ => "",
            };
            if detail.starts_with("crossed light") {
                v.signal += 1;
            } else if detail.starts_with("lead gap") {
                v.lead_gap += 1;
            } else {
                v.speed += 1;
            }
        }
        v
    }

    pub fn total(&self) -> usize {
        self.signal + self.lead_gap + self.speed
    }
}

/// One controller on one route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerRow {
    pub route: String,
    pub controller: String,
    /// `ok` or `failed: <reason>`.
    pub status: String,
    pub efc_g: Option<f64>,
    pub travel_time_s: Option<f64>,
    pub final_soc_pct: Option<f64>,
    /// Stage costs plus terminal penalty.
    pub objective: Option<f64>,
    pub violations: Option<Violations>,
    pub fallback_steps: usize,
    pub aw_steps: usize,
}

impl ControllerRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    fn failed(route: &str, controller: &str, e: &Error) -> Self {
        Self {
            route: route.into(),
            controller: controller.into(),
            status: format!("failed: {e}"),
            efc_g: None,
            travel_time_s: None,
            final_soc_pct: None,
            objective: None,
            violations: None,
            fallback_steps: 0,
            aw_steps: 0,
        }
    }

    fn from_metrics(route: &str, controller: &str, m: &TripMetrics, objective: f64, v: Violations) -> Self {
        Self {
            route: route.into(),
            controller: controller.into(),
            status: "ok".into(),
            efc_g: Some(m.efc_g),
            travel_time_s: Some(m.travel_time_s),
            final_soc_pct: Some(m.final_soc_pct),
            objective: Some(objective),
            violations: Some(v),
            fallback_steps: 0,
            aw_steps: 0,
        }
    }
}

/// Ensemble relative to ag, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteDeltas {
    pub route: String,
    pub efc_pct: Option<f64>,
    pub time_pct: Option<f64>,
}

pub fn percent_delta(new: f64, base: f64) -> f64 {
    100.0 * (new - base) / base
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub provenance: ReportProvenance,
    pub rows: Vec<ControllerRow>,
    pub deltas: Vec<RouteDeltas>,
    pub footer: String,
}

impl BenchmarkReport {
    pub fn row(&self, route: &str, controller: &str) -> Option<&ControllerRow> {
        self.rows.iter().find(|r| r.route == route && r.controller == controller)
    }

    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(ControllerRow::ok)
    }

    fn compute_deltas(rows: &[ControllerRow], routes: &[String]) -> Vec<RouteDeltas> {
        routes
            .iter()
            .map(|r| {
                let get = |c: &str| rows.iter().find(|x| &x.route == r && x.controller == c);
                let (ag, en) = (get("ag_nn_mpc"), get("ensemble_mpc"));
                let d = |f: fn(&ControllerRow) -> Option<f64>| match (ag.and_then(f), en.and_then(f)) {
                    (Some(a), Some(e)) => Some(percent_delta(e, a)),
                    _ => None,
                };
                RouteDeltas {
                    route: r.clone(),
                    efc_pct: d(|x| x.efc_g),
                    time_pct: d(|x| x.travel_time_s),
                }
            })
            .collect()
    }

    /// Stored deltas agree with deltas recomputed from the rows to `tol_pp`
    /// percentage points.
    pub fn deltas_consistent(&self, tol_pp: f64) -> bool {
        let routes: Vec<String> = self.deltas.iter().map(|d| d.route.clone()).collect();
        let fresh = Self::compute_deltas(&self.rows, &routes);
        let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => (a - b).abs() <= tol_pp,
            (None, None) => true,
            _ => false,
        };
        fresh.iter().zip(&self.deltas).all(|(f, d)| close(f.efc_pct, d.efc_pct) && close(f.time_pct, d.time_pct))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = &self.provenance;
        let _ = writeln!(s, "benchmark report");
        let _ = writeln!(s, "config  {}", p.config_hash);
        let _ = writeln!(s, "ag net  {}", p.ag_net_sha256);
        let _ = writeln!(s, "aw net  {}", p.aw_net_sha256);
        let _ = writeln!(s, "seed    {}", p.seed);
        let _ = writeln!(s, "version {}", p.code_version);
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<10} {:<14} {:>10} {:>10} {:>8} {:>11} {:>5} {:>5} status",
            "route", "controller", "efc_g", "time_s", "soc_%", "objective", "viol", "fb"
        );
        let f = |v: Option<f64>, w: usize, p: usize| v.map_or(format!("{:>w$}", "-"), |x| format!("{x:>w$.p$}"));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<10} {:<14} {} {} {} {} {:>5} {:>5} {}",
                r.route,
                r.controller,
                f(r.efc_g, 10, 2),
                f(r.travel_time_s, 10, 1),
                f(r.final_soc_pct, 8, 2),
                f(r.objective, 11, 3),
                r.violations.map_or("-".into(), |v| v.total().to_string()),
                r.fallback_steps,
                r.status
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "ensemble vs ag");
        let pct = |v: Option<f64>| v.map_or("-".into(), |x| format!("{x:+.2}%"));
        for d in &self.deltas {
            let _ = writeln!(s, "{:<10} efc {:>9}  time {:>9}", d.route, pct(d.efc_pct), pct(d.time_pct));
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{}", self.footer);
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "route",
            "controller",
            "status",
            "efc_g",
            "travel_time_s",
            "final_soc_pct",
            "objective",
            "signal_violations",
            "gap_violations",
            "speed_violations",
            "fallback_steps",
            "aw_steps",
        ])?;
        let f = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for r in &self.rows {
            let v = r.violations;
            let n = |g: fn(&Violations) -> usize| v.as_ref().map(|v| g(v).to_string()).unwrap_or_default();
            w.write_record([
                r.route.clone(),
                r.controller.clone(),
                r.status.clone(),
                f(r.efc_g),
                f(r.travel_time_s),
                f(r.final_soc_pct),
                f(r.objective),
                n(|v| v.signal),
                n(|v| v.lead_gap),
                n(|v| v.speed),
                r.fallback_steps.to_string(),
                r.aw_steps.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Distance-indexed series of one run: `N + 1` rows.
pub fn write_plot_series(route: &Route, lead: Option<&LeadTrajectory>, traj: &Trajectory, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(PLOT_COLUMNS)?;
    let mut cum = 0.0;
    let states = traj.states();
    for (k, st) in states.iter().enumerate() {
        if k > 0 {
            cum += traj.steps[k - 1].efc_g;
        }
        let x = route.position(traj.first_step + k);
        let gap = lead.map(|l| fmt_f64(l.state_at(st.time_s).0 - x)).unwrap_or_default();
        w.write_record([fmt_f64(x), fmt_f64(st.v_mps), fmt_f64(st.soc_frac), fmt_f64(cum), gap])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Everything one benchmark run produced, kept in memory for checks.
#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub report: BenchmarkReport,
    pub worlds: Vec<World>,
    pub dp: Vec<Option<Trajectory>>,
    pub mpc: Vec<(String, String, ClosedLoopResult)>,
}

fn load_net(layout: &Layout, v: Variant) -> Result<TerminalCostNet> {
    let path = layout.net(v);
    if !path.is_file() {
        return Err(Error::Config(format!("{} not found; run train --variant {} first", path.display(), v.as_str())));
    }
    TerminalCostNet::load(&path)
}

/// Full-route solution of a benchmark route, reused from `solve-dp` output
/// when the stored hash matches.
pub(crate) fn traffic_solution(world: &World, cfg: &PipelineConfig, layout: &Layout) -> Result<(DpSolution, Trajectory)> {
    let hash = world.variant_hash(CorpusVariant::Traffic, cfg);
    let path = layout.value_function(world.name(), CorpusVariant::Traffic);
    if path.is_file() {
        let sol = load_solution(&path)?;
        if sol.value.scenario_hash == hash {
            let traj = world.trajectory(CorpusVariant::Traffic, &sol, cfg)?;
            return Ok((sol, traj));
        }
    }
    world.solve(CorpusVariant::Traffic, cfg)
}

/// `benchmark`: DP, ag-net MPC and ensemble MPC on every benchmark route.
/// Controller failures become annotated rows; the report is always written.
pub fn cmd_benchmark(cfg: &PipelineConfig, layout: &Layout) -> Result<BenchmarkRun> {
    let ag = load_net(layout, Variant::Ag)?;
    let aw = load_net(layout, Variant::Aw)?;
    let provenance = ReportProvenance {
        config_hash: cfg.hash(),
        ag_net_sha256: ag.digest(),
        aw_net_sha256: aw.digest(),
        seed: cfg.seed,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let ensemble = Ensemble::new(ag.clone(), aw)?;

    let mut rows = Vec::new();
    let mut worlds = Vec::new();
    let mut dp = Vec::new();
    let mut mpc = Vec::new();
    let bench = layout.bench()?;
    let traj_dir = bench.join("trajectories");
    let diag_dir = bench.join("diagnostics");
    let plot_dir = bench.join("plots");
    for d in [&traj_dir, &diag_dir, &plot_dir] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut plots = Vec::new();

    for id in &cfg.benchmark.routes {
        let world = World::resolve(build_scenario(id)?, cfg)?;
        let route = &world.scenario.route;
        let lead = world.lead.as_ref();
        let gap = lead.map(|l| LeadConstraint::new(l, cfg.mpc.t_gap_s));
        let x0 = world.scenario.ego.state();

        match traffic_solution(&world, cfg, layout) {
            Ok((_, traj)) => {
                let m = traj.metrics();
                let obj = m.total_cost + cfg.penalty.eval(&traj.final_state);
                rows.push(ControllerRow::from_metrics(id, "dp", &m, obj, Violations::count(route, gap.as_ref(), &traj)));
                let p = plot_dir.join(format!("{id}.dp.csv"));
                write_plot_series(route, lead, &traj, &p)?;
                plots.push(format!("plots/{id}.dp.csv"));
                dp.push(Some(traj));
            }
            Err(e) => {
                rows.push(ControllerRow::failed(id, "dp", &e));
                dp.push(None);
            }
        }

        let setup = ClosedLoopSetup {
            route,
            x0,
            lead,
            params: &cfg.vehicle,
            grid: &cfg.grid,
            penalty: &cfg.penalty,
        };
        let sources = [("ag_nn_mpc", TerminalSource::AgNn(&ag)), ("ensemble_mpc", TerminalSource::EnsembleNn(&ensemble))];
        let runs: Vec<Result<ClosedLoopResult>> = {
            use rayon::prelude::*;
            sources.par_iter().map(|(_, src)| run_closed_loop(&setup, &cfg.mpc, *src)).collect()
        };
        for ((name, _), res) in sources.iter().zip(runs) {
            match res {
                Ok(r) => {
                    let mut row = ControllerRow::from_metrics(
                        id,
                        name,
                        &r.metrics,
                        r.objective(),
                        Violations::count(route, gap.as_ref(), &r.trajectory),
                    );
                    row.fallback_steps = r.diagnostics.iter().filter(|d| d.status == PlanStatus::Fallback).count();
                    row.aw_steps = r.diagnostics.iter().filter(|d| d.branch == Branch::Aw).count();
                    rows.push(row);
                    r.write_csv(&traj_dir.join(format!("{id}.{name}.csv")))?;
                    r.write_diagnostics(&diag_dir.join(format!("{id}.{name}.jsonl")))?;
                    write_plot_series(route, lead, &r.trajectory, &plot_dir.join(format!("{id}.{name}.csv")))?;
                    plots.push(format!("plots/{id}.{name}.csv"));
                    mpc.push((id.clone(), name.to_string(), r));
                }
                Err(e) => rows.push(ControllerRow::failed(id, name, &e)),
            }
        }
        worlds.push(world);
    }

    let deltas = BenchmarkReport::compute_deltas(&rows, &cfg.benchmark.routes);
    let report = BenchmarkReport {
        provenance,
        rows,
        deltas,
        footer: REPORT_FOOTER.to_string(),
    };
    write_text(&bench.join("report.txt"), &report.to_text())?;
    write_json(&bench.join("report.json"), &report)?;
    report.write_csv(&bench.join("report.csv"))?;
    write_json(
        &bench.join("plots.json"),
        &serde_json::json!({ "columns": PLOT_COLUMNS, "files": plots }),
    )?;
    Ok(BenchmarkRun { report, worlds, dp, mpc })
}
