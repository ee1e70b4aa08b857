//! Routes, fixed-cycle signals, traffic jams and the lead vehicle.

mod jam;
mod lead;
mod route;
mod scenario;
mod signal;

pub use jam::{greenshield_speed, TrafficJam};
pub use lead::{LeadSample, LeadTrajectory, Provenance};
pub(crate) use lead::fmt_f64;
pub use route::{LimitChange, Route};
pub use scenario::{build_scenario, EgoStart, LeadSpec, Scenario};
pub use signal::{Phase, SignalPhase, TrafficLight};
