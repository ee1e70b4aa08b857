use serde::{Deserialize, Serialize};

use crate::dp::{guided_rollout, Move, Problem, StateGrid, StepContext, Transition};
use crate::error::{Error, Result};
use crate::vehicle::{ControlInput, EgoState};

/// Result of one horizon solve.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonPlan {
    pub control: ControlInput,
    pub transition: Transition,
    /// Stage cost of the first step plus the horizon value of its successor.
    pub horizon_cost: f64,
    /// Terminal cost at the planned end state.
    pub terminal_value: f64,
    /// Planned states on steps `s ..= s + N`.
    pub planned: Vec<EgoState>,
}

/// Terminal cost on a node of the last horizon layer: `(step, node, state)`.
pub type NodeTerminal<'f> = dyn FnMut(usize, usize, &EgoState) -> f64 + 'f;

/// Move parts of every control from grid node `(iv, isoc)`, stored at
/// `(iv * n_soc + isoc) * n_controls`. Layers built from one [`GridSpec`]
/// share velocity and SoC values, so entries hold across layers and solves.
///
/// [`GridSpec`]: crate::dp::GridSpec
#[derive(Debug, Default)]
struct MoveTable {
    /// `(gamma, ds, dv, soc start, dsoc, soc len, controls)` as bits.
    key: Option<[u64; 7]>,
    n_soc: usize,
    n_controls: usize,
    moves: Vec<Option<Move>>,
    filled: Vec<bool>,
}

impl MoveTable {
    fn reset_for(&mut self, problem: &Problem, grid: &StateGrid) -> bool {
        let l0 = &grid.layers[0];
        let shared = grid
            .layers
            .iter()
            .all(|l| l.v.start == 0.0 && l.v.step == l0.v.step && l.soc == l0.soc);
        if !shared {
            return false;
        }
        let key = [
            problem.gamma.to_bits(),
            problem.route.ds_m.to_bits(),
            l0.v.step.to_bits(),
            l0.soc.start.to_bits(),
            l0.soc.step.to_bits(),
            l0.soc.len as u64,
            problem.controls.len() as u64,
        ];
        if self.key != Some(key) {
            *self = MoveTable {
                key: Some(key),
                n_soc: l0.soc.len,
                n_controls: problem.controls.len(),
                ..MoveTable::default()
            };
        }
        true
    }

    /// Offset of the node's block, filling it on first use.
    fn block(&mut self, problem: &Problem, iv: usize, isoc: usize, state: &EgoState) -> usize {
        let cell = iv * self.n_soc + isoc;
        if cell >= self.filled.len() {
            self.filled.resize(cell + 1, false);
            self.moves.resize((cell + 1) * self.n_controls, None);
        }
        let at = cell * self.n_controls;
        if !self.filled[cell] {
            for (k, &u) in problem.controls.iter().enumerate() {
                self.moves[at + k] = problem.move_part(state.v_mps, state.soc_frac, u);
            }
            self.filled[cell] = true;
        }
        at
    }
}

/// Horizon values computed on demand, from the terminal layer back.
struct Memo<'p, 'g, 't, 'f, 'c> {
    problem: &'p Problem<'p>,
    grid: &'g StateGrid,
    contexts: Vec<StepContext>,
    values: Vec<f64>,
    terminal: &'t mut NodeTerminal<'f>,
    moves: &'c mut MoveTable,
    cache_moves: bool,
}

impl Memo<'_, '_, '_, '_, '_> {
    fn node(&mut self, step: usize, idx: usize) -> f64 {
        let o = self.grid.range(step).start + idx;
        let cached = self.values[o];
        if !cached.is_nan() {
            return cached;
        }
        let layer = self.grid.layer(step);
        let state = layer.state(idx);
        let j = if step == self.grid.last_step() {
            (self.terminal)(step, idx, &state)
        } else {
            let problem = self.problem;
            let ctx = self.contexts[step - self.grid.first_step];
            let at = if self.cache_moves {
                let (iv, isoc, _) = layer.unindex(idx);
                Some(self.moves.block(problem, iv, isoc, &state))
            } else {
                None
            };
            let mut best = f64::INFINITY;
            for (k, &u) in problem.controls.iter().enumerate() {
                let mv = match at {
                    Some(at) => self.moves.moves[at + k],
                    None => problem.move_part(state.v_mps, state.soc_frac, u),
                };
                if let Some(tr) = mv.and_then(|mv| problem.complete(&ctx, &state, &mv)) {
                    best = best.min(tr.cost + self.value(step + 1, &tr.next));
                }
            }
            best
        };
        // Terminal functions may return NaN on garbage input; treat as infeasible.
        let j = if j.is_nan() { f64::INFINITY } else { j };
        self.values[o] = j;
        j
    }

    /// Interpolated value at a continuous state, `+inf` outside the hull.
    fn value(&mut self, step: usize, state: &EgoState) -> f64 {
        let Some(c) = self.problem.corners(self.grid.layer(step), state) else {
            return f64::INFINITY;
        };
        c.combine(|i| self.node(step, i))
    }
}

/// Reusable horizon solver. Keeps the time-independent part of every node
/// transition between solves; the vehicle parameters must not change
/// between calls on one solver.
#[derive(Debug, Default)]
pub struct HorizonSolver {
    moves: MoveTable,
}

impl HorizonSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Optimal first control over the horizon `grid` (steps `s ..= s + N`)
    /// from `x_now` at step `s`. Node values follow the Bellman recursion
    /// from `terminal` on the last layer and are evaluated only where a
    /// reachable successor's interpolation needs them; the plan is the
    /// value-guided rollout through them.
    pub fn solve(
        &mut self,
        problem: &Problem,
        grid: &StateGrid,
        x_now: &EgoState,
        terminal: &mut NodeTerminal<'_>,
    ) -> Result<HorizonPlan> {
        let first = grid.first_step;
        let last = grid.last_step();
        if first == last {
            return Err(Error::Config("empty horizon".into()));
        }
        let cache_moves = self.moves.reset_for(problem, grid);
        let mut memo = Memo {
            problem,
            grid,
            contexts: (first..last).map(|s| problem.context(s)).collect(),
            values: vec![f64::NAN; grid.total_nodes()],
            terminal,
            moves: &mut self.moves,
            cache_moves,
        };
        let path = guided_rollout(problem, first, last, x_now, &mut |s, st| memo.value(s, st))?;
        let (control, transition) = path[0];
        let horizon_cost = transition.cost + memo.value(first + 1, &transition.next);
        let mut planned = Vec::with_capacity(path.len() + 1);
        planned.push(*x_now);
        planned.extend(path.iter().map(|(_, tr)| tr.next));
        let terminal_value = memo.value(last, planned.last().expect("nonempty"));
        Ok(HorizonPlan {
            control,
            transition,
            horizon_cost,
            terminal_value,
            planned,
        })
    }
}

/// One-off [`HorizonSolver::solve`].
pub fn solve_horizon(
    problem: &Problem,
    grid: &StateGrid,
    x_now: &EgoState,
    terminal: &mut NodeTerminal<'_>,
) -> Result<HorizonPlan> {
    HorizonSolver::new().solve(problem, grid, x_now, terminal)
}

/// Safety fallback: the hardest admissible braking control.
pub fn max_braking(problem: &Problem, step: usize, state: &EgoState) -> Option<(ControlInput, Transition)> {
    let mut controls = problem.controls.clone();
    controls.sort_by(|a, b| a.accel_mps2.total_cmp(&b.accel_mps2).then(a.engine_on.cmp(&b.engine_on)));
    controls
        .into_iter()
        .find_map(|u| problem.transition(step, state, u).map(|tr| (u, tr)))
}

/// Whether a step's control came from a horizon solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Solved,
    Fallback,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{backward_induction, GridSpec, TerminalPenalty};
    use crate::vehicle::VehicleParams;
    use crate::world::{LimitChange, Route, TrafficLight};

    fn road_with_limit(limit: f64, lights: Vec<TrafficLight>) -> Route {
        Route::new("h", 400.0, 10.0, vec![LimitChange { start_m: 0.0, limit_mps: limit }], lights, vec![]).unwrap()
    }

    fn road(lights: Vec<TrafficLight>) -> Route {
        road_with_limit(17.0, lights)
    }

    #[test]
    fn time_only_objective_accelerates_hardest() {
        // The limit is out of reach within the horizon.
        let r = road_with_limit(40.0, vec![]);
        let p = VehicleParams::default();
        let spec = GridSpec::default();
        let x0 = EgoState::new(8.0, 0.25, 0.0);
        let grid = spec.build_range(&r, 0, 20, &x0, None).unwrap();
        let prob = Problem::new(&r, &p, 0.0, spec.controls());
        let plan = solve_horizon(&prob, &grid, &x0, &mut |_, _, _| 0.0).unwrap();
        let a_max = spec.accel_grid_mps2.iter().copied().fold(f64::MIN, f64::max);
        assert_eq!(plan.control.accel_mps2, a_max);
        assert_eq!(plan.planned.len(), 21);
    }

    #[test]
    fn red_band_forces_braking() {
        // Red from t = 0 to 60 s at 100 m; from 15 m/s nothing can arrive later.
        let light = TrafficLight { position_m: 100.0, cycle_s: 120.0, green_s: 60.0, offset_s: 60.0 };
        let r = road(vec![light]);
        let p = VehicleParams::default();
        let spec = GridSpec { time_slack_s: 100.0, ..GridSpec::default() };
        let x0 = EgoState::new(15.0, 0.25, 0.0);
        let grid = spec.build_range(&r, 0, 20, &x0, None).unwrap();
        let prob = Problem::new(&r, &p, 0.8, spec.controls());
        let plan = solve_horizon(&prob, &grid, &x0, &mut |_, _, s| TerminalPenalty::default().eval(s)).unwrap();
        assert!(plan.control.accel_mps2 < 0.0);
    }

    #[test]
    fn matches_full_sweep_on_the_same_grid() {
        let light = TrafficLight { position_m: 200.0, cycle_s: 40.0, green_s: 20.0, offset_s: 5.0 };
        let r = road(vec![light]);
        let p = VehicleParams::default();
        let spec = GridSpec::default();
        let x0 = EgoState::new(10.0, 0.25, 0.0);
        let grid = spec.build_range(&r, 0, 20, &x0, None).unwrap();
        let prob = Problem::new(&r, &p, 0.8, spec.controls());
        let pen = TerminalPenalty::default();
        let full = backward_induction(&prob, &grid, &pen, "").unwrap();
        let plan = solve_horizon(&prob, &grid, &x0, &mut |_, _, s| pen.eval(s)).unwrap();
        let j0 = full.initial_value(&x0).unwrap();
        assert_eq!(plan.horizon_cost.to_bits(), j0.to_bits());
    }
}
