use super::grid::StateGrid;
use super::solve::TerminalCost;
use super::transition::{Problem, SuccessorScheme};
use crate::error::{Error, Result};
use crate::vehicle::{ControlInput, EgoState};

/// Largest number of control sequences the oracle will enumerate.
pub const ORACLE_BUDGET: u128 = 10_000_000;

/// Exhaustive minimum over every control sequence from `x0`, successors
/// snapped to the nearest grid node exactly as the snapped DP does. Costs are
/// summed from the end backwards so the result matches the DP bit for bit.
pub fn brute_force_oracle(
    problem: &Problem,
    grid: &StateGrid,
    x0: &EgoState,
    terminal: &dyn TerminalCost,
) -> Result<(f64, Vec<ControlInput>)> {
    if problem.scheme != SuccessorScheme::Snap {
        return Err(Error::Config("the oracle enumerates the snapped scheme only".into()));
    }
    let n = grid.last_step() - grid.first_step;
    let sequences = (problem.controls.len() as u128)
        .checked_pow(n as u32)
        .unwrap_or(u128::MAX);
    if sequences > ORACLE_BUDGET {
        return Err(Error::Budget {
            sequences,
            limit: ORACLE_BUDGET,
        });
    }
    let mut seq = Vec::with_capacity(n);
    let (best, arg) = search(problem, grid, grid.first_step, x0, terminal, &mut seq);
    if best.is_finite() {
        Ok((best, arg))
    } else {
        Err(Error::NoSolution("no control sequence satisfies the constraints".into()))
    }
}

fn search(
    problem: &Problem,
    grid: &StateGrid,
    step: usize,
    state: &EgoState,
    terminal: &dyn TerminalCost,
    seq: &mut Vec<ControlInput>,
) -> (f64, Vec<ControlInput>) {
    if step == grid.last_step() {
        return (terminal.terminal_cost(step, state), seq.clone());
    }
    let layer = grid.layer(step + 1);
    let mut best = (f64::INFINITY, Vec::new());
    for &u in &problem.controls {
        let Some(tr) = problem.transition(step, state, u) else {
            continue;
        };
        let Some(c) = problem.corners(layer, &tr.next) else {
            continue;
        };
        let next = layer.state(c.idx[0]);
        seq.push(u);
        let (tail, s) = search(problem, grid, step + 1, &next, terminal, seq);
        seq.pop();
        // Same form as the DP backup: the finite-weight renormalization of a
        // single node is `(1 * J) / 1`.
        let q = tr.cost + c.combine(|_| tail);
        if q < best.0 {
            best = (q, s);
        }
    }
    best
}
