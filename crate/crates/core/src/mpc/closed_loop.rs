use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::MpcConfig;
use super::horizon::{max_braking, HorizonPlan, HorizonSolver, PlanStatus};
use super::proxy::{project_proxy, LeadObservation};
use crate::dp::{
    DpSolution, GridSpec, LeadConstraint, Problem, StateGrid, TerminalPenalty, Trajectory, TrajectoryStep, TripMetrics,
};
use crate::error::{Error, Result};
use crate::nn::{detect_lead, extract_features_ag, lead_observation, Branch, Ensemble, TerminalCostNet, Variant};
use crate::vehicle::{EgoState, VehicleParams};
use crate::world::{fmt_f64, LeadTrajectory, Route};

/// Terminal cost of the horizon problem.
#[derive(Debug, Clone, Copy)]
pub enum TerminalSource<'a> {
    /// Node values of a full-route solution; the horizon reuses its grid.
    ExactDp(&'a DpSolution),
    AgNn(&'a TerminalCostNet),
    EnsembleNn(&'a Ensemble),
}

impl TerminalSource<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            TerminalSource::ExactDp(_) => "exact_dp",
            TerminalSource::AgNn(_) => "ag_nn",
            TerminalSource::EnsembleNn(_) => "ensemble_nn",
        }
    }

    fn check(&self, gamma: f64) -> Result<()> {
        let (g, what) = match self {
            TerminalSource::ExactDp(sol) => (sol.value.gamma, "value function"),
            TerminalSource::AgNn(net) => {
                if net.meta.variant != Variant::Ag {
                    return Err(Error::Schema {
                        expected: "an ag net".into(),
                        found: net.meta.variant.as_str().into(),
                    });
                }
                net.validate()?;
                (net.meta.gamma, "ag net")
            }
            TerminalSource::EnsembleNn(e) => {
                e.ag.validate()?;
                e.aw.validate()?;
                (e.ag.meta.gamma, "ensemble nets")
            }
        };
        if g != gamma {
            return Err(Error::Config(format!("{what} built for gamma {g}, controller uses {gamma}")));
        }
        Ok(())
    }
}

/// Everything fixed for one closed-loop run.
#[derive(Debug, Clone, Copy)]
pub struct ClosedLoopSetup<'a> {
    pub route: &'a Route,
    pub x0: EgoState,
    pub lead: Option<&'a LeadTrajectory>,
    pub params: &'a VehicleParams,
    pub grid: &'a GridSpec,
    pub penalty: &'a TerminalPenalty,
}

/// Solver record of one closed-loop step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostic {
    pub s: usize,
    pub t_s: f64,
    pub horizon_cost: f64,
    pub terminal_value: f64,
    pub branch: Branch,
    pub status: PlanStatus,
    pub lead_detected: bool,
    pub lead_gap_m: Option<f64>,
    pub lead_accel_est_mps2: Option<f64>,
    pub proxy_jam_interaction: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopResult {
    pub controller: String,
    pub route: String,
    pub ds_m: f64,
    pub trajectory: Trajectory,
    pub metrics: TripMetrics,
    /// Terminal penalty of the final state, not part of `metrics.total_cost`.
    pub terminal_penalty: f64,
    pub diagnostics: Vec<StepDiagnostic>,
}

pub const TRAJECTORY_COLUMNS: [&str; 13] = [
    "s", "x_m", "t_s", "v_mps", "soc", "accel", "engine_on", "F_tr_N", "P_batt_W", "mf_gps", "mfeq_gps", "cT_value",
    "branch",
];

impl ClosedLoopResult {
    /// Stage costs plus the terminal penalty.
    pub fn objective(&self) -> f64 {
        self.metrics.total_cost + self.terminal_penalty
    }

    /// Stored metrics agree with a recomputation from the trajectory to
    /// `1e-9` relative.
    pub fn metrics_consistent(&self) -> bool {
        let m = self.trajectory.metrics();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-12);
        close(m.efc_g, self.metrics.efc_g)
            && close(m.travel_time_s, self.metrics.travel_time_s)
            && close(m.final_soc_pct, self.metrics.final_soc_pct)
            && close(m.total_cost, self.metrics.total_cost)
    }

    /// One row per node; the final node has no control.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(TRAJECTORY_COLUMNS)?;
        for (st, d) in self.trajectory.steps.iter().zip(&self.diagnostics) {
            w.write_record([
                st.step.to_string(),
                fmt_f64(st.x_m),
                fmt_f64(st.state.time_s),
                fmt_f64(st.state.v_mps),
                fmt_f64(st.state.soc_frac),
                fmt_f64(st.accel_eff_mps2),
                u8::from(st.control.engine_on).to_string(),
                fmt_f64(st.flows.tractive_force_n),
                fmt_f64(st.flows.batt_power_w),
                fmt_f64(st.flows.fuel_rate_gps),
                fmt_f64(st.flows.equiv_fuel_rate_gps),
                fmt_f64(d.terminal_value),
                d.branch.as_str().to_string(),
            ])?;
        }
        let f = self.trajectory.final_state;
        let s = self.trajectory.first_step + self.trajectory.steps.len();
        let x = s as f64 * self.ds_m;
        let mut row = vec![s.to_string(), fmt_f64(x), fmt_f64(f.time_s), fmt_f64(f.v_mps), fmt_f64(f.soc_frac)];
        row.extend(std::iter::repeat_n(String::new(), 8));
        w.write_record(&row)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Diagnostics as line-delimited JSON.
    pub fn write_diagnostics(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for d in &self.diagnostics {
            serde_json::to_writer(&mut out, d)?;
            out.push(b'\n');
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&out))
            .map_err(|e| Error::io(path, e))
    }
}

/// Drives the ego from `setup.x0` to the end of the route, re-solving the
/// horizon problem on every distance step and applying its first control.
pub fn run_closed_loop(setup: &ClosedLoopSetup, cfg: &MpcConfig, source: TerminalSource) -> Result<ClosedLoopResult> {
    cfg.validate()?;
    source.check(cfg.gamma)?;
    let route = setup.route;
    if (route.ds_m - cfg.ds_m).abs() > 1e-12 {
        return Err(Error::Config(format!("route ds {} m differs from controller ds {} m", route.ds_m, cfg.ds_m)));
    }
    let n = route.step_count();
    let h = cfg.horizon_steps();
    let controls = setup.grid.controls();
    let true_gap = setup.lead.map(|l| LeadConstraint::new(l, cfg.t_gap_s));
    if let TerminalSource::ExactDp(sol) = source {
        let g = &sol.value.grid;
        if g.first_step != 0 || g.last_step() != n {
            return Err(Error::Config("exact terminal cost needs a full-route solution".into()));
        }
    }

    let mut state = setup.x0;
    let mut steps: Vec<TrajectoryStep> = Vec::with_capacity(n);
    let mut diagnostics = Vec::with_capacity(n);
    let mut solver = HorizonSolver::new();

    for s in 0..n {
        let last = (s + h).min(n);
        let x_now = route.position(s);
        let (plan, diag_base) = match source {
            TerminalSource::ExactDp(sol) => {
                let full = &sol.value.grid;
                let grid = StateGrid::new(s, route.ds_m, full.layers[s..=last].to_vec())?;
                let problem = Problem::new(route, setup.params, cfg.gamma, controls.clone()).with_lead(true_gap);
                let plan = solver.solve(&problem, &grid, &state, &mut |step, idx, _| sol.value.node_value(step, idx));
                let fallback = || max_braking(&problem, s, &state);
                (resolve(plan, fallback, s)?, (Branch::Exact, false, None, None, false))
            }
            TerminalSource::AgNn(_) | TerminalSource::EnsembleNn(_) => {
                let obs = setup.lead.map(|l| {
                    let tp = state.time_s - cfg.accel_window_s;
                    let prev = (tp >= l.samples()[0].t_s).then(|| (tp, l.state_at(tp).1));
                    LeadObservation::observe(l, state.time_s, prev, cfg.accel_est_limit_mps2)
                });
                let detected = obs.is_some_and(|o| detect_lead(x_now, o.x_m, cfg.sensing_range_m));
                let proxy = match (detected, obs, setup.lead) {
                    (true, Some(o), Some(l)) => Some(project_proxy(
                        &o,
                        l.samples(),
                        route,
                        cfg.horizon_m + cfg.proxy_projection_m,
                        cfg.proxy_dt_s,
                    )),
                    _ => None,
                };
                let lc = proxy.as_ref().map(|p| LeadConstraint {
                    trajectory: &p.trajectory,
                    gap_s: cfg.t_gap_s,
                    block_beyond: true,
                });
                let grid = setup.grid.build_range(route, s, last, &state, lc)?;
                let problem = Problem::new(route, setup.params, cfg.gamma, controls.clone()).with_lead(lc);
                let use_aw = matches!(source, TerminalSource::EnsembleNn(_)) && proxy.is_some();
                let x_t = route.position(last);
                let mut terminal = |step: usize, _idx: usize, st: &EgoState| -> f64 {
                    if step == n {
                        return setup.penalty.eval(st);
                    }
                    let out = match (source, &proxy) {
                        (TerminalSource::EnsembleNn(e), Some(p)) if use_aw => {
                            let o = lead_observation(&p.trajectory, x_t, st.time_s);
                            e.terminal_cost(route, st, step, Some(o)).map(|r| r.0)
                        }
                        (TerminalSource::EnsembleNn(e), _) => e.ag.forward(&extract_features_ag(route, st, step)),
                        (TerminalSource::AgNn(net), _) => net.forward(&extract_features_ag(route, st, step)),
                        (TerminalSource::ExactDp(_), _) => unreachable!(),
                    };
                    out.unwrap_or(f64::INFINITY)
                };
                let plan = solver.solve(&problem, &grid, &state, &mut terminal);
                let fallback = || max_braking(&problem, s, &state);
                let branch = if use_aw { Branch::Aw } else { Branch::Ag };
                let gap = obs.map(|o| o.x_m - x_now);
                (
                    resolve(plan, fallback, s)?,
                    (
                        branch,
                        detected,
                        gap,
                        proxy.as_ref().map(|p| p.anchor.accel_est_mps2),
                        proxy.as_ref().is_some_and(|p| p.jam_interaction),
                    ),
                )
            }
        };
        let (plan, status) = plan;
        let tr = plan.transition;
        if let Some(e) = true_gap.and_then(|l| l.earliest(route.position(s + 1))) {
            if tr.next.time_s + 1e-9 < e {
                return Err(Error::ConstraintViolation {
                    step: s + 1,
                    detail: format!("lead gap: t = {} < {e}", tr.next.time_s),
                });
            }
        }
        let (branch, lead_detected, lead_gap_m, lead_accel_est_mps2, proxy_jam_interaction) = diag_base;
        diagnostics.push(StepDiagnostic {
            s,
            t_s: state.time_s,
            horizon_cost: plan.horizon_cost,
            terminal_value: plan.terminal_value,
            branch,
            status,
            lead_detected,
            lead_gap_m,
            lead_accel_est_mps2,
            proxy_jam_interaction,
        });
        steps.push(TrajectoryStep::from_transition(s, x_now, state, plan.control, &tr));
        state = tr.next;
    }

    let trajectory = Trajectory {
        first_step: 0,
        steps,
        final_state: state,
    };
    Ok(ClosedLoopResult {
        controller: source.name().to_string(),
        route: route.name.clone(),
        ds_m: route.ds_m,
        metrics: trajectory.metrics(),
        terminal_penalty: setup.penalty.eval(&state),
        trajectory,
        diagnostics,
    })
}

fn resolve(
    plan: Result<HorizonPlan>,
    fallback: impl FnOnce() -> Option<(crate::vehicle::ControlInput, crate::dp::Transition)>,
    step: usize,
) -> Result<(HorizonPlan, PlanStatus)> {
    match plan {
        Ok(p) => Ok((p, PlanStatus::Solved)),
        Err(e) => {
            let (control, transition) = fallback().ok_or_else(|| Error::ConstraintViolation {
                step,
                detail: format!("horizon infeasible ({e}) and no braking control is admissible"),
            })?;
            Ok((
                HorizonPlan {
                    control,
                    transition,
                    horizon_cost: f64::INFINITY,
                    terminal_value: f64::INFINITY,
                    planned: Vec::new(),
                },
                PlanStatus::Fallback,
            ))
        }
    }
}
