use serde::{Deserialize, Serialize};

use crate::world::{LeadSample, LeadTrajectory, Provenance, Route};

/// Lead state as seen by the ego at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadObservation {
    pub t_s: f64,
    pub x_m: f64,
    pub v_mps: f64,
    pub accel_est_mps2: f64,
}

impl LeadObservation {
    /// Reads the lead at `t`; the acceleration is the backward difference
    /// against `prev` (time, speed), clamped to `±limit`, or 0 without one.
    pub fn observe(lead: &LeadTrajectory, t: f64, prev: Option<(f64, f64)>, limit: f64) -> Self {
        let (x, v) = lead.state_at(t);
        let a = match prev {
            Some((tp, vp)) if t > tp => ((v - vp) / (t - tp)).clamp(-limit, limit),
            _ => 0.0,
        };
        Self {
            t_s: t,
            x_m: x,
            v_mps: v,
            accel_est_mps2: a,
        }
    }
}

/// Observed lead history followed by a constant-acceleration projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyProjection {
    pub anchor: LeadObservation,
    /// Samples before the anchor come from the observed past.
    pub trajectory: LeadTrajectory,
    /// Some projected sample was slowed by a jam.
    pub jam_interaction: bool,
    /// The projected lead comes to a standstill and stays there.
    pub stalls: bool,
}

/// Longest projection in time, whatever the distance covered.
const MAX_PROJECTION_S: f64 = 600.0;

/// Projects the lead `span_m` metres past the anchor with constant
/// acceleration, the speed clamped to `[0, effective limit]`. `history` is
/// the lead's past; samples at or after the anchor time are ignored.
pub fn project_proxy(
    obs: &LeadObservation,
    history: &[LeadSample],
    route: &Route,
    span_m: f64,
    dt: f64,
) -> ProxyProjection {
    let mut samples: Vec<LeadSample> = history
        .iter()
        .copied()
        .filter(|s| s.t_s < obs.t_s && s.x_m <= obs.x_m)
        .collect();
    samples.push(LeadSample { t_s: obs.t_s, x_m: obs.x_m, v_mps: obs.v_mps });
    let (mut t, mut x, mut v) = (obs.t_s, obs.x_m, obs.v_mps);
    let mut jam_interaction = false;
    let mut stalls = false;
    while x < obs.x_m + span_m && t < obs.t_s + MAX_PROJECTION_S {
        if v == 0.0 && obs.accel_est_mps2 <= 0.0 {
            stalls = true;
            break;
        }
        let mut v_next = (v + obs.accel_est_mps2 * dt).max(0.0);
        let x_try = x + 0.5 * (v + v_next) * dt;
        let limit = route.effective_speed_limit(x_try, t + dt);
        if v_next > limit {
            v_next = limit;
            jam_interaction |= limit < route.base_limit(x_try);
        }
        x += 0.5 * (v + v_next) * dt;
        t += dt;
        v = v_next;
        samples.push(LeadSample { t_s: t, x_m: x, v_mps: v });
    }
    ProxyProjection {
        anchor: *obs,
        trajectory: LeadTrajectory::new_unchecked(samples, Provenance::Synthetic),
        jam_interaction,
        stalls,
    }
}
