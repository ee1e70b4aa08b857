//! Input vectors of the terminal-cost nets.

use serde::{Deserialize, Serialize};

use crate::vehicle::EgoState;
use crate::world::{Phase, Route};

pub const AG_INPUTS: usize = 13;
pub const AW_INPUTS: usize = 16;
pub const SCHEMA_VERSION: u32 = 1;

/// Seconds ahead at which the upcoming light's phase is sampled.
pub const TFC_COMB_S: [f64; 6] = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0];
/// Time-to-lead when the ego is not closing in.
pub const T_MAX_S: f64 = 60.0;
/// Lead distance reported when no lead is known.
pub const NO_LEAD_DISTANCE_M: f64 = 1000.0;

pub const AG_NAMES: [&str; AG_INPUTS] = [
    "soc", "v_veh", "v_rlim", "v_rlim_next", "d_tfc", "d_lim_next", "d_rem", "x_tfc_0", "x_tfc_5",
    "x_tfc_10", "x_tfc_15", "x_tfc_20", "x_tfc_25",
];
pub const AW_EXTRA_NAMES: [&str; 3] = ["d_lead", "v_rel_lead", "t_to_lead"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Route, signal and state features only.
    Ag,
    /// Adds the lead-vehicle features.
    Aw,
}

impl Variant {
    pub fn inputs(self) -> usize {
        match self {
            Variant::Ag => AG_INPUTS,
            Variant::Aw => AW_INPUTS,
        }
    }

    pub fn names(self) -> Vec<&'static str> {
        let mut names = AG_NAMES.to_vec();
        if self == Variant::Aw {
            names.extend(AW_EXTRA_NAMES);
        }
        names
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Ag => "ag",
            Variant::Aw => "aw",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "ag" => Ok(Variant::Ag),
            "aw" => Ok(Variant::Aw),
            other => Err(crate::Error::Config(format!("unknown net variant `{other}` (ag|aw)"))),
        }
    }
}

pub fn extract_features_ag(route: &Route, state: &EgoState, step: usize) -> [f64; AG_INPUTS] {
    let x = route.position(step);
    let d_rem = (route.length_m - x).max(0.0);
    let v = state.v_mps;
    let v_rlim = v - route.base_limit(x);
    let (d_lim_next, v_rlim_next) = match route.next_limit_change(x) {
        Some(c) => (c.start_m - x, v - c.limit_mps),
        None => (d_rem, v_rlim),
    };
    let mut out = [0.0; AG_INPUTS];
    out[0] = state.soc_frac;
    out[1] = v;
    out[2] = v_rlim;
    out[3] = v_rlim_next;
    out[5] = d_lim_next;
    out[6] = d_rem;
    match route.upcoming_light(x) {
        Some(light) => {
            out[4] = light.position_m - x;
            for (k, dt) in TFC_COMB_S.iter().enumerate() {
                out[7 + k] = match light.signal_phase(state.time_s + dt).phase {
                    Phase::Green => 1.0,
                    Phase::Red => -1.0,
                };
            }
        }
        None => {
            out[4] = d_rem;
            out[7..].fill(1.0);
        }
    }
    out
}

/// `(d_lead, v_rel, t_to_lead)` for a lead `d_lead` metres ahead at `v_lead`.
pub fn lead_features(v_ego: f64, d_lead: f64, v_lead: f64) -> [f64; 3] {
    let d = d_lead.max(0.0);
    let v_rel = v_ego - v_lead;
    let t = if d == 0.0 {
        0.0
    } else if v_rel > 0.0 {
        (d / v_rel).min(T_MAX_S)
    } else {
        T_MAX_S
    };
    [d, v_rel, t]
}

/// Ag features followed by the lead features; `lead = None` uses the
/// far-away sentinel.
pub fn extract_features_aw(
    route: &Route,
    state: &EgoState,
    step: usize,
    lead: Option<(f64, f64)>,
) -> [f64; AW_INPUTS] {
    let ag = extract_features_ag(route, state, step);
    let extra = match lead {
        Some((d, v_lead)) => lead_features(state.v_mps, d, v_lead),
        None => [NO_LEAD_DISTANCE_M, 0.0, T_MAX_S],
    };
    let mut out = [0.0; AW_INPUTS];
    out[..AG_INPUTS].copy_from_slice(&ag);
    out[AG_INPUTS..].copy_from_slice(&extra);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{LimitChange, TrafficLight};

    fn route(light: TrafficLight) -> Route {
        Route::new(
            "f",
            2000.0,
            10.0,
            vec![
                LimitChange { start_m: 0.0, limit_mps: 17.0 },
                LimitChange { start_m: 1200.0, limit_mps: 14.0 },
            ],
            vec![light],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn ag_examples() {
        let always_green = TrafficLight { position_m: 1000.0, cycle_s: 60.0, green_s: 59.999, offset_s: 0.0 };
        let r = route(always_green);
        let f = extract_features_ag(&r, &EgoState::new(15.0, 0.25, 0.0), 50);
        assert_eq!(f[6], 1500.0);
        assert_eq!(f[2], -2.0);
        assert_eq!(f[3], 1.0);
        assert_eq!(f[4], 500.0);
        assert_eq!(f[5], 700.0);
        assert_eq!(&f[7..], &[1.0; 6]);

        let past = extract_features_ag(&r, &EgoState::new(10.0, 0.25, 0.0), 150);
        assert_eq!(past[6], 500.0);
        assert_eq!(past[4], 500.0);
        assert_eq!(past[5], 500.0);
        assert_eq!(past[3], past[2]);
        assert_eq!(&past[7..], &[1.0; 6]);
    }

    #[test]
    fn comb_samples_phase() {
        let light = TrafficLight { position_m: 1000.0, cycle_s: 20.0, green_s: 10.0, offset_s: 0.0 };
        let r = route(light);
        let f = extract_features_ag(&r, &EgoState::new(10.0, 0.25, 0.0), 0);
        assert_eq!(&f[7..], &[1.0, 1.0, -1.0, -1.0, 1.0, 1.0]);
    }

    #[test]
    fn lead_examples() {
        assert_eq!(lead_features(15.0, 100.0, 10.0), [100.0, 5.0, 20.0]);
        assert_eq!(lead_features(10.0, 100.0, 12.0)[2], T_MAX_S);
        assert_eq!(lead_features(10.0, 0.0, 12.0)[2], 0.0);
    }
}
