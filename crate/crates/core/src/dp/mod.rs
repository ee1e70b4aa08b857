//! Full-route dynamic programming over a gridded `(v, soc, t)` state space.

mod grid;
mod interp;
mod oracle;
mod solve;
mod store;
mod trajectory;
mod transition;

pub use grid::{earliest_arrival, Axis, AxisPos, GridSpec, LeadConstraint, StateGrid, StepAxes};
pub use interp::Corners;
pub use oracle::{brute_force_oracle, ORACLE_BUDGET};
pub use solve::{
    backward_induction, bellman_residual, node_backup, DpSolution, OptimalPolicy, TerminalCost,
    TerminalPenalty, ValueFunction, NO_CONTROL,
};
pub use store::{load_solution, save_solution, write_value_csv};
pub use trajectory::{
    audit, extract_trajectory, generate_lead, guided_rollout, lookahead, ROLLOUT_BUDGET, Trajectory, TrajectoryStep, TripMetrics,
};
pub use transition::{
    move_part, wait_part, Move, Problem, StepContext, SuccessorScheme, Transition, Wait,
};
