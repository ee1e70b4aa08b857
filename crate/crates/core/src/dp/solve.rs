use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{AxisPos, StateGrid};
use super::transition::{Move, Problem};
use crate::error::{Error, Result};
use crate::vehicle::{ControlInput, EgoState};

/// Marks a node without an admissible control.
pub const NO_CONTROL: u8 = u8::MAX;

/// Cost-to-go at the last layer of a grid.
pub trait TerminalCost: Sync {
    fn terminal_cost(&self, step: usize, state: &EgoState) -> f64;
}

impl<F: Fn(usize, &EgoState) -> f64 + Sync> TerminalCost for F {
    fn terminal_cost(&self, step: usize, state: &EgoState) -> f64 {
        self(step, state)
    }
}

/// `w_soc * max(0, floor - soc)^2 + w_v * v^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerminalPenalty {
    pub soc_floor: f64,
    pub w_soc: f64,
    pub w_v: f64,
}

impl Default for TerminalPenalty {
    fn default() -> Self {
        Self {
            soc_floor: 0.25,
            w_soc: 2000.0,
            w_v: 0.01,
        }
    }
}

impl TerminalPenalty {
    pub const ZERO: TerminalPenalty = TerminalPenalty {
        soc_floor: 0.0,
        w_soc: 0.0,
        w_v: 0.0,
    };

    #[inline]
    pub fn eval(&self, state: &EgoState) -> f64 {
        let deficit = (self.soc_floor - state.soc_frac).max(0.0);
        self.w_soc * deficit * deficit + self.w_v * state.v_mps * state.v_mps
    }
}

impl TerminalCost for TerminalPenalty {
    fn terminal_cost(&self, _step: usize, state: &EgoState) -> f64 {
        self.eval(state)
    }
}

/// Optimal cost-to-go on every node of a grid; `+inf` where infeasible.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub grid: StateGrid,
    pub values: Vec<f64>,
    pub gamma: f64,
    pub scenario_hash: String,
}

impl ValueFunction {
    pub fn layer_values(&self, step: usize) -> &[f64] {
        &self.values[self.grid.range(step)]
    }

    pub fn node_value(&self, step: usize, idx: usize) -> f64 {
        self.layer_values(step)[idx]
    }

    /// Value at the node sitting exactly at `state`, `+inf` off-grid.
    pub fn exact_node_value(&self, step: usize, state: &EgoState) -> f64 {
        if !self.grid.contains_step(step) {
            return f64::INFINITY;
        }
        match self.grid.layer(step).node_of(state) {
            Some(idx) => self.node_value(step, idx),
            None => f64::INFINITY,
        }
    }

    /// Trilinear interpolation with infeasible neighbours dropped.
    pub fn interpolate_value(&self, step: usize, state: &EgoState) -> Result<f64> {
        if !self.grid.contains_step(step) {
            return Err(Error::OutOfHull {
                step,
                detail: "step outside the grid".into(),
            });
        }
        let layer = self.grid.layer(step);
        let locate = |axis: &super::grid::Axis, q: f64, name: &str| {
            axis.locate(q).ok_or_else(|| Error::OutOfHull {
                step,
                detail: format!("{name} = {q} not in [{}, {}]", axis.start, axis.last()),
            })
        };
        let pv = locate(&layer.v, state.v_mps, "v")?;
        let ps = locate(&layer.soc, state.soc_frac, "soc")?;
        let pt = locate(&layer.t, state.time_s, "t")?;
        let values = self.layer_values(step);
        let j = super::interp::Corners::new(layer, pv, ps, pt).combine(|i| values[i]);
        if j.is_finite() {
            Ok(j)
        } else {
            Err(Error::AllInfeasible { step })
        }
    }

    /// Number of finite nodes per layer.
    pub fn feasible_counts(&self) -> Vec<usize> {
        (self.grid.first_step..=self.grid.last_step())
            .map(|s| self.layer_values(s).iter().filter(|v| v.is_finite()).count())
            .collect()
    }
}

/// Minimizing control index per node.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalPolicy {
    pub controls: Vec<ControlInput>,
    pub index: Vec<u8>,
}

impl OptimalPolicy {
    pub fn control(&self, grid: &StateGrid, step: usize, idx: usize) -> Option<ControlInput> {
        let k = self.index[grid.range(step)][idx];
        (k != NO_CONTROL).then(|| self.controls[k as usize])
    }

    /// Control stored at the node nearest to `state`.
    pub fn nearest(&self, grid: &StateGrid, step: usize, state: &EgoState) -> Option<ControlInput> {
        let layer = grid.layer(step);
        let iv = layer.v.nearest(state.v_mps)?;
        let is = layer.soc.nearest(state.soc_frac)?;
        let it = layer.t.nearest(state.time_s)?;
        self.control(grid, step, layer.index(iv, is, it))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpSolution {
    pub value: ValueFunction,
    pub policy: OptimalPolicy,
}

impl DpSolution {
    /// `J` at the initial state; `NoSolution` if infeasible.
    pub fn initial_value(&self, x0: &EgoState) -> Result<f64> {
        self.value
            .interpolate_value(self.value.grid.first_step, x0)
            .map_err(|e| Error::NoSolution(format!("initial state {x0:?}: {e}")))
    }
}

/// Bellman backup of one node against the next layer's values. This is the
/// reference form; [`backward_induction`] computes the same numbers with the
/// time-independent part hoisted out of the time loop.
pub fn node_backup(
    problem: &Problem,
    grid: &StateGrid,
    step: usize,
    state: &EgoState,
    next_values: &[f64],
) -> (f64, u8) {
    let ctx = problem.context(step);
    let layer = grid.layer(step + 1);
    let mut best = f64::INFINITY;
    let mut arg = NO_CONTROL;
    for (k, &u) in problem.controls.iter().enumerate() {
        let Some(mv) = problem.move_part(state.v_mps, state.soc_frac, u) else {
            continue;
        };
        let Some(tr) = problem.complete(&ctx, state, &mv) else {
            continue;
        };
        let Some(c) = problem.corners(layer, &tr.next) else {
            continue;
        };
        let q = tr.cost + c.combine(|i| next_values[i]);
        if q < best {
            best = q;
            arg = k as u8;
        }
    }
    (best, arg)
}

struct CachedMove {
    k: u8,
    mv: Move,
    pv: AxisPos,
    ps: AxisPos,
}

/// Full sweep from the last layer back to the first.
pub fn backward_induction(
    problem: &Problem,
    grid: &StateGrid,
    terminal: &dyn TerminalCost,
    scenario_hash: &str,
) -> Result<DpSolution> {
    if problem.controls.len() >= NO_CONTROL as usize {
        return Err(Error::Config("too many controls".into()));
    }
    let total = grid.total_nodes();
    let mut values = vec![f64::INFINITY; total];
    let mut index = vec![NO_CONTROL; total];

    let last = grid.last_step();
    let last_layer = grid.layer(last);
    values[grid.range(last)]
        .par_iter_mut()
        .enumerate()
        .for_each(|(idx, j)| *j = terminal.terminal_cost(last, &last_layer.state(idx)));

    for step in (grid.first_step..last).rev() {
        let cur_range = grid.range(step);
        let next_range = grid.range(step + 1);
        let (head, tail) = values.split_at_mut(next_range.start);
        let cur = &mut head[cur_range.clone()];
        let next: &[f64] = &tail[..next_range.len()];
        let pol = &mut index[cur_range];
        let layer = grid.layer(step);
        let next_layer = grid.layer(step + 1);
        let ctx = problem.context(step);
        let block = layer.soc.len * layer.t.len;

        cur.par_chunks_mut(block)
            .zip(pol.par_chunks_mut(block))
            .enumerate()
            .for_each(|(iv, (jv, pv_block))| {
                let v = layer.v.value(iv);
                let mut cache: Vec<CachedMove> = Vec::with_capacity(problem.controls.len());
                for isoc in 0..layer.soc.len {
                    let soc = layer.soc.value(isoc);
                    cache.clear();
                    for (k, &u) in problem.controls.iter().enumerate() {
                        let Some(mv) = problem.move_part(v, soc, u) else {
                            continue;
                        };
                        let Some(pv) = next_layer.v.locate(mv.v_next) else {
                            continue;
                        };
                        // A wait only lowers SoC, so a move ending a full cell
                        // below the corridor cannot recover.
                        if mv.soc_next < next_layer.soc.start - next_layer.soc.step {
                            continue;
                        }
                        let ps = next_layer.soc.locate(mv.soc_next);
                        cache.push(CachedMove {
                            k: k as u8,
                            mv,
                            pv,
                            ps: ps.unwrap_or(AxisPos { i: usize::MAX, frac: f64::NAN }),
                        });
                    }
                    for it in 0..layer.t.len {
                        let state = EgoState::new(v, soc, layer.t.value(it));
                        let mut best = f64::INFINITY;
                        let mut arg = NO_CONTROL;
                        for cm in &cache {
                            let Some(tr) = problem.complete(&ctx, &state, &cm.mv) else {
                                continue;
                            };
                            let ps = if tr.wait.is_none() && cm.ps.i != usize::MAX {
                                cm.ps
                            } else {
                                match next_layer.soc.locate(tr.next.soc_frac) {
                                    Some(p) => p,
                                    None => continue,
                                }
                            };
                            let Some(pt) = next_layer.t.locate(tr.next.time_s) else {
                                continue;
                            };
                            let c = problem.corners_at(next_layer, cm.pv, ps, pt);
                            let q = tr.cost + c.combine(|i| next[i]);
                            if q < best {
                                best = q;
                                arg = cm.k;
                            }
                        }
                        let o = isoc * layer.t.len + it;
                        jv[o] = best;
                        pv_block[o] = arg;
                    }
                }
            });
    }

    Ok(DpSolution {
        value: ValueFunction {
            grid: grid.clone(),
            values,
            gamma: problem.gamma,
            scenario_hash: scenario_hash.to_string(),
        },
        policy: OptimalPolicy {
            controls: problem.controls.clone(),
            index,
        },
    })
}

/// Largest `|J(s, x) - backup(s, x)|` over every node with a finite value,
/// together with the number of policy mismatches.
pub fn bellman_residual(problem: &Problem, solution: &DpSolution) -> (f64, usize) {
    let vf = &solution.value;
    let grid = &vf.grid;
    let mut worst = 0.0f64;
    let mut mismatches = 0;
    for step in grid.first_step..grid.last_step() {
        let layer = grid.layer(step);
        let next = vf.layer_values(step + 1);
        let pol = &solution.policy.index[grid.range(step)];
        let (w, m) = (0..layer.node_count())
            .into_par_iter()
            .map(|idx| {
                let (j, k) = node_backup(problem, grid, step, &layer.state(idx), next);
                let stored = vf.node_value(step, idx);
                let r = if j.is_finite() || stored.is_finite() {
                    if j == stored {
                        0.0
                    } else {
                        (j - stored).abs().max(f64::MIN_POSITIVE)
                    }
                } else {
                    0.0
                };
                (r, usize::from(k != pol[idx]))
            })
            .reduce(|| (0.0, 0), |a, b| (a.0.max(b.0), a.1 + b.1));
        worst = worst.max(w);
        mismatches += m;
    }
    (worst, mismatches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::grid::GridSpec;
    use crate::vehicle::VehicleParams;
    use crate::world::{LimitChange, Route};

    fn flat(len: f64) -> Route {
        Route::new(
            "flat",
            len,
            10.0,
            vec![LimitChange { start_m: 0.0, limit_mps: 12.0 }],
            vec![],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn zero_objective_gives_zero_values() {
        let r = flat(200.0);
        let mut p = VehicleParams::default();
        p.fuel_idle_rate_gps = 0.0;
        p.willans_slope_g_per_j = 0.0;
        p.k_batt = 0.0;
        let spec = GridSpec::default();
        let x0 = EgoState::new(0.0, 0.25, 0.0);
        let grid = spec.build(&r, &x0, None).unwrap();
        // gamma = 1 with every fuel term zeroed leaves no stage cost.
        let prob = Problem::new(&r, &p, 1.0, spec.controls());
        let sol = backward_induction(&prob, &grid, &TerminalPenalty::ZERO, "").unwrap();
        assert!(sol.value.values.iter().all(|&j| j == 0.0 || j == f64::INFINITY));
        assert_eq!(sol.initial_value(&x0).unwrap(), 0.0);
    }

    #[test]
    fn single_control_accumulates_forward() {
        let r = flat(100.0);
        let p = VehicleParams::default();
        let mut spec = GridSpec::default();
        spec.accel_grid_mps2 = vec![0.5];
        spec.engine_states = vec![true];
        spec.time_margin_s = 10.0;
        let x0 = EgoState::new(0.0, 0.25, 0.0);
        let grid = spec.build(&r, &x0, None).unwrap();
        let prob = Problem::new(&r, &p, 0.7, spec.controls())
            .with_scheme(super::super::transition::SuccessorScheme::Snap);
        let sol = backward_induction(&prob, &grid, &TerminalPenalty::ZERO, "").unwrap();
        // Forward pass on the same snapped scheme.
        let mut state = x0;
        let mut costs = Vec::new();
        for s in 0..r.step_count() {
            let tr = prob.transition(s, &state, spec.controls()[0]).unwrap();
            let layer = grid.layer(s + 1);
            let c = prob.corners(layer, &tr.next).unwrap();
            state = layer.state(c.idx[0]);
            costs.push(tr.cost);
        }
        let total = costs.iter().rev().fold(0.0, |acc, c| c + acc);
        assert_eq!(sol.initial_value(&x0).unwrap(), total);
    }

    #[test]
    fn infeasible_start_is_no_solution() {
        let r = flat(100.0);
        let p = VehicleParams::default();
        let spec = GridSpec::default();
        let x0 = EgoState::new(0.0, 0.221, 0.0);
        let grid = spec.build(&r, &x0, None).unwrap();
        let prob = Problem::new(&r, &p, 0.8, vec![ControlInput::new(-1.0, false)]);
        let sol = backward_induction(&prob, &grid, &TerminalPenalty::default(), "").unwrap();
        assert!(matches!(sol.initial_value(&x0), Err(Error::NoSolution(_))));
    }
}
