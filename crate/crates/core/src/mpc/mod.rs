//! Receding-horizon control with pluggable terminal costs.

mod closed_loop;
mod config;
mod horizon;
mod proxy;

pub use crate::nn::detect_lead;
pub use closed_loop::{
    run_closed_loop, ClosedLoopResult, ClosedLoopSetup, StepDiagnostic, TerminalSource, TRAJECTORY_COLUMNS,
};
pub use config::MpcConfig;
pub use horizon::{max_braking, solve_horizon, HorizonPlan, HorizonSolver, NodeTerminal, PlanStatus};
pub use proxy::{project_proxy, LeadObservation, ProxyProjection};
