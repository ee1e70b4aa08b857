use serde::{Deserialize, Serialize};

use super::grid::{GridSpec, LeadConstraint};
use super::solve::{backward_induction, DpSolution, TerminalPenalty};
use super::transition::{Problem, Transition};
use crate::error::{Error, Result};
use crate::vehicle::{ControlInput, EgoState, PowerFlows, VehicleParams};
use crate::world::{LeadSample, LeadTrajectory, Provenance, Route};

/// One distance step of a driven trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub step: usize,
    pub x_m: f64,
    /// State on arrival at node `step`.
    pub state: EgoState,
    pub control: ControlInput,
    pub accel_eff_mps2: f64,
    pub flows: PowerFlows,
    pub move_dt_s: f64,
    /// Time spent standing at a red light before moving off.
    pub wait_s: f64,
    pub efc_g: f64,
    pub cost: f64,
}

impl TrajectoryStep {
    pub fn from_transition(step: usize, x_m: f64, state: EgoState, control: ControlInput, tr: &Transition) -> Self {
        let wait_s = tr.wait.map_or(0.0, |w| w.duration_s);
        let wait_g = tr.wait.map_or(0.0, |w| w.equiv_fuel_g);
        Self {
            step,
            x_m,
            state,
            control,
            accel_eff_mps2: tr.mv.accel_eff,
            flows: tr.mv.flows,
            move_dt_s: tr.mv.dt,
            wait_s,
            efc_g: tr.mv.flows.equiv_fuel_rate_gps * tr.mv.dt + wait_g,
            cost: tr.cost,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub first_step: usize,
    pub steps: Vec<TrajectoryStep>,
    pub final_state: EgoState,
}

/// Headline numbers of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripMetrics {
    pub efc_g: f64,
    pub travel_time_s: f64,
    pub final_soc_pct: f64,
    pub total_cost: f64,
}

impl Trajectory {
    pub fn initial_state(&self) -> EgoState {
        self.steps.first().map_or(self.final_state, |s| s.state)
    }

    /// States on every node, `N + 1` entries.
    pub fn states(&self) -> Vec<EgoState> {
        let mut out: Vec<EgoState> = self.steps.iter().map(|s| s.state).collect();
        out.push(self.final_state);
        out
    }

    pub fn metrics(&self) -> TripMetrics {
        TripMetrics {
            efc_g: self.steps.iter().map(|s| s.efc_g).sum(),
            travel_time_s: self.final_state.time_s - self.initial_state().time_s,
            final_soc_pct: 100.0 * self.final_state.soc_frac,
            total_cost: self.steps.iter().map(|s| s.cost).sum(),
        }
    }

    /// Time spent crossing each node, as a lead vehicle would report it. A stop
    /// at a light gives both its arrival and departure sample.
    pub fn to_lead(&self, ds: f64) -> Result<LeadTrajectory> {
        let mut samples = Vec::with_capacity(self.steps.len() + 8);
        for st in &self.steps {
            let x = st.step as f64 * ds;
            samples.push(LeadSample { t_s: st.state.time_s, x_m: x, v_mps: st.state.v_mps });
            if st.wait_s > 0.0 {
                samples.push(LeadSample { t_s: st.state.time_s + st.wait_s, x_m: x, v_mps: 0.0 });
            }
        }
        let last = self.steps.last().map_or(self.first_step, |s| s.step + 1);
        samples.push(LeadSample {
            t_s: self.final_state.time_s,
            x_m: last as f64 * ds,
            v_mps: self.final_state.v_mps,
        });
        LeadTrajectory::new(samples, Provenance::DpGenerated)
    }
}

/// Best control at a continuous state: stage cost plus interpolated
/// cost-to-go of the successor, over every admissible control.
pub fn lookahead(
    problem: &Problem,
    solution: &DpSolution,
    step: usize,
    state: &EgoState,
) -> Option<(ControlInput, Transition, f64)> {
    let vf = &solution.value;
    let layer = vf.grid.layer(step + 1);
    let next = vf.layer_values(step + 1);
    let mut best: Option<(ControlInput, Transition, f64)> = None;
    for &u in &problem.controls {
        let Some(tr) = problem.transition(step, state, u) else {
            continue;
        };
        let Some(c) = problem.corners(layer, &tr.next) else {
            continue;
        };
        let q = tr.cost + c.combine(|i| next[i]);
        if q.is_finite() && best.as_ref().is_none_or(|b| q < b.2) {
            best = Some((u, tr, q));
        }
    }
    best
}

/// Node expansions allowed to one [`guided_rollout`].
pub const ROLLOUT_BUDGET: usize = 200_000;

/// Depth-first rollout from `x0` at `first` to `last`. Controls are tried in
/// order of stage cost plus `value(step + 1, successor)`; a branch that runs
/// into a state with no admissible control is abandoned and the next best
/// control tried. Interpolated values can be finite on states that are
/// already committed to a violation, which is what the backtracking absorbs.
pub fn guided_rollout(
    problem: &Problem,
    first: usize,
    last: usize,
    x0: &EgoState,
    value: &mut dyn FnMut(usize, &EgoState) -> f64,
) -> Result<Vec<(ControlInput, Transition)>> {
    let mut path = Vec::with_capacity(last - first);
    let mut budget = ROLLOUT_BUDGET;
    if descend(problem, first, last, x0, value, &mut path, &mut budget) {
        Ok(path)
    } else if budget == 0 {
        Err(Error::NoSolution(format!("rollout budget exhausted from step {first}")))
    } else {
        Err(Error::ConstraintViolation {
            step: first,
            detail: format!("no admissible continuation from {x0:?}"),
        })
    }
}

fn descend(
    problem: &Problem,
    step: usize,
    last: usize,
    state: &EgoState,
    value: &mut dyn FnMut(usize, &EgoState) -> f64,
    path: &mut Vec<(ControlInput, Transition)>,
    budget: &mut usize,
) -> bool {
    if step == last {
        return true;
    }
    if *budget == 0 {
        return false;
    }
    *budget -= 1;
    let mut ranked: Vec<(f64, ControlInput, Transition)> = Vec::with_capacity(problem.controls.len());
    for &u in &problem.controls {
        let Some(tr) = problem.transition(step, state, u) else {
            continue;
        };
        let q = tr.cost + value(step + 1, &tr.next);
        if q.is_finite() {
            ranked.push((q, u, tr));
        }
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (_, u, tr) in ranked {
        path.push((u, tr));
        if descend(problem, step + 1, last, &tr.next, value, path, budget) {
            return true;
        }
        path.pop();
        if *budget == 0 {
            return false;
        }
    }
    false
}

/// Interpolated cost-to-go of `state` at `step`, `+inf` outside the hull.
pub(crate) fn value_or_inf(solution: &DpSolution, problem: &Problem, step: usize, state: &EgoState) -> f64 {
    let vf = &solution.value;
    let values = vf.layer_values(step);
    problem
        .corners(vf.grid.layer(step), state)
        .map_or(f64::INFINITY, |c| c.combine(|i| values[i]))
}

/// Forward rollout from `x0` guided by the value function, see [`guided_rollout`].
pub fn extract_trajectory(problem: &Problem, solution: &DpSolution, x0: &EgoState) -> Result<Trajectory> {
    let grid = &solution.value.grid;
    solution.initial_value(x0)?;
    let path = guided_rollout(problem, grid.first_step, grid.last_step(), x0, &mut |s, st| {
        value_or_inf(solution, problem, s, st)
    })?;
    let traj = trajectory_from_path(problem, grid.first_step, x0, &path);
    if let Some(v) = audit(problem.route, problem.lead.as_ref(), &traj).into_iter().next() {
        return Err(v);
    }
    Ok(traj)
}

pub(crate) fn trajectory_from_path(
    problem: &Problem,
    first: usize,
    x0: &EgoState,
    path: &[(ControlInput, Transition)],
) -> Trajectory {
    let mut state = *x0;
    let mut steps = Vec::with_capacity(path.len());
    for (k, (u, tr)) in path.iter().enumerate() {
        let step = first + k;
        steps.push(TrajectoryStep::from_transition(step, problem.route.position(step), state, *u, tr));
        state = tr.next;
    }
    Trajectory {
        first_step: first,
        steps,
        final_state: state,
    }
}

/// Every constraint violation along a trajectory: speed above the effective
/// limit, arrival at a light during red with nonzero speed, and lead gap.
pub fn audit(route: &Route, lead: Option<&LeadConstraint>, traj: &Trajectory) -> Vec<Error> {
    let mut out = Vec::new();
    let states = traj.states();
    for (k, st) in states.iter().enumerate() {
        let step = traj.first_step + k;
        let x = route.position(step);
        if st.v_mps > route.effective_speed_limit(x, st.time_s) + 1e-9 {
            out.push(Error::ConstraintViolation {
                step,
                detail: format!("speed {} above limit at t = {}", st.v_mps, st.time_s),
            });
        }
        if k > 0 {
            if let Some(light) = route.light_at_step(step) {
                if st.v_mps > 0.0 && !light.is_green(st.time_s) {
                    out.push(Error::ConstraintViolation {
                        step,
                        detail: format!("crossed light at {x} m during red (t = {})", st.time_s),
                    });
                }
            }
            if let Some(e) = lead.and_then(|l| l.earliest(x)) {
                if st.time_s + 1e-9 < e {
                    out.push(Error::ConstraintViolation {
                        step,
                        detail: format!("lead gap: t = {} < {e}", st.time_s),
                    });
                }
            }
        }
    }
    out
}

/// Lead vehicle driven by its own full-route optimum from rest at `x = 0`, `t = 0`.
pub fn generate_lead(
    route: &Route,
    params: &VehicleParams,
    spec: &GridSpec,
    penalty: &TerminalPenalty,
    gamma: f64,
    initial_soc: f64,
) -> Result<LeadTrajectory> {
    let x0 = EgoState::new(0.0, initial_soc, 0.0);
    let grid = spec.build(route, &x0, None)?;
    let problem = Problem::new(route, params, gamma, spec.controls());
    let sol = backward_induction(&problem, &grid, penalty, &route.fingerprint())?;
    let traj = extract_trajectory(&problem, &sol, &x0)?;
    traj.to_lead(route.ds_m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::LimitChange;

    #[test]
    fn zero_length_route_is_empty() {
        let r = Route::new("z", 0.0, 10.0, vec![LimitChange { start_m: 0.0, limit_mps: 10.0 }], vec![], vec![])
            .unwrap();
        let p = VehicleParams::default();
        let spec = GridSpec::default();
        let x0 = EgoState::new(0.0, 0.25, 0.0);
        let grid = spec.build(&r, &x0, None).unwrap();
        let prob = Problem::new(&r, &p, 0.8, spec.controls());
        let sol = backward_induction(&prob, &grid, &TerminalPenalty::default(), "").unwrap();
        let traj = extract_trajectory(&prob, &sol, &x0).unwrap();
        assert!(traj.steps.is_empty());
        let m = traj.metrics();
        assert_eq!((m.efc_g, m.travel_time_s, m.total_cost), (0.0, 0.0, 0.0));
    }
}
