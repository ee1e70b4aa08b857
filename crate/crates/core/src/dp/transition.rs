//! One distance step of the ego vehicle and the constraints on its successor.

use serde::{Deserialize, Serialize};

use super::grid::{AxisPos, LeadConstraint, StepAxes};
use super::interp::Corners;
use crate::vehicle::{
    power_split_with_current, road_load, stage_cost, step_velocity, ControlInput, EgoState,
    PowerFlows, VehicleParams,
};
use crate::world::{Route, TrafficLight};

/// How a successor state reads the next layer's values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessorScheme {
    /// Trilinear interpolation over the eight surrounding nodes.
    #[default]
    Interpolate,
    /// The nearest node; the successor state is replaced by that node.
    Snap,
}

/// Time-independent part of a moving step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Move {
    pub v_next: f64,
    pub soc_next: f64,
    pub dt: f64,
    pub cost: f64,
    pub flows: PowerFlows,
    /// Equal to the commanded acceleration unless the step over-brakes.
    pub accel_eff: f64,
    pub over_braked: bool,
}

/// `None` when the force or battery limits are broken or the vehicle would not move.
pub fn move_part(
    v: f64,
    soc: f64,
    u: ControlInput,
    ds: f64,
    gamma: f64,
    params: &VehicleParams,
) -> Option<Move> {
    let road = road_load(v, params).ok()?;
    let f_cmd = params.equiv_mass_kg * u.accel_mps2 + road;
    let vs = step_velocity(v, f_cmd, params, ds).ok()?;
    let (accel_eff, f_tr) = if vs.over_braked {
        let a = -v * v / (2.0 * ds);
        (a, params.equiv_mass_kg * a + road)
    } else {
        (u.accel_mps2, f_cmd)
    };
    if f_cmd < params.tractive_force_min_n || f_cmd > params.tractive_force_max_n {
        return None;
    }
    let v_bar = 0.5 * (v + vs.v_next);
    if !(v_bar > 0.0) {
        return None;
    }
    let (flows, current) = power_split_with_current(soc, v_bar, f_tr, u.engine_on, params).ok()?;
    let soc_next = soc - ds / (v_bar * params.batt_capacity_coulomb) * current;
    let dt = ds / v_bar;
    Some(Move {
        v_next: vs.v_next,
        soc_next,
        dt,
        cost: stage_cost(&flows, dt, gamma, params),
        flows,
        accel_eff,
        over_braked: vs.over_braked,
    })
}

/// Standing at a light for `duration` s: the battery feeds the auxiliary load at
/// open-circuit voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wait {
    pub duration_s: f64,
    pub soc_drop: f64,
    pub equiv_fuel_g: f64,
    pub cost: f64,
}

pub fn wait_part(soc: f64, duration_s: f64, gamma: f64, params: &VehicleParams) -> Wait {
    let voc = params.ocv_v.eval(soc);
    let current = params.aux_elec_load_w / voc;
    let mfeq = params.k_batt * params.aux_elec_load_w / params.lhv_j_per_g;
    Wait {
        duration_s,
        soc_drop: current * duration_s / params.batt_capacity_coulomb,
        equiv_fuel_g: mfeq * duration_s,
        cost: (gamma * mfeq / params.fuel_norm_rate_gps + (1.0 - gamma)) * duration_s,
    }
}

/// Full step from a node: optional wait, then the move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub next: EgoState,
    pub cost: f64,
    pub mv: Move,
    pub wait: Option<Wait>,
}

/// Step-dependent data shared by every node of one layer.
#[derive(Debug, Clone, Copy)]
pub struct StepContext {
    pub step: usize,
    pub x_next: f64,
    pub light_here: Option<TrafficLight>,
    pub light_next: Option<TrafficLight>,
    pub lead_earliest: Option<f64>,
}

/// Route, vehicle and objective of one optimal-control problem.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub route: &'a Route,
    pub params: &'a VehicleParams,
    pub gamma: f64,
    pub controls: Vec<ControlInput>,
    pub lead: Option<LeadConstraint<'a>>,
    pub scheme: SuccessorScheme,
}

impl<'a> Problem<'a> {
    pub fn new(route: &'a Route, params: &'a VehicleParams, gamma: f64, controls: Vec<ControlInput>) -> Self {
        Self {
            route,
            params,
            gamma,
            controls,
            lead: None,
            scheme: SuccessorScheme::Interpolate,
        }
    }

    pub fn with_lead(mut self, lead: Option<LeadConstraint<'a>>) -> Self {
        self.lead = lead;
        self
    }

    pub fn with_scheme(mut self, scheme: SuccessorScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn context(&self, step: usize) -> StepContext {
        let x_next = self.route.position(step + 1);
        StepContext {
            step,
            x_next,
            light_here: self.route.light_at_step(step).copied(),
            light_next: self.route.light_at_step(step + 1).copied(),
            lead_earliest: self.lead.and_then(|l| l.earliest(x_next)),
        }
    }

    #[inline]
    pub fn move_part(&self, v: f64, soc: f64, u: ControlInput) -> Option<Move> {
        move_part(v, soc, u, self.route.ds_m, self.gamma, self.params)
    }

    /// Adds the wait (if standing at a red light) and checks the successor's
    /// speed limit, green window and lead gap. Grid bounds are not checked here.
    #[inline]
    pub fn complete(&self, ctx: &StepContext, state: &EgoState, mv: &Move) -> Option<Transition> {
        let mut wait = None;
        let mut t0 = state.time_s;
        if state.v_mps == 0.0 {
            if let Some(light) = ctx.light_here {
                let w = light.red_remaining(state.time_s);
                if w > 0.0 {
                    let wp = wait_part(state.soc_frac, w, self.gamma, self.params);
                    t0 += w;
                    wait = Some(wp);
                }
            }
        }
        let t_next = t0 + mv.dt;
        let (soc_next, cost) = match wait {
            Some(w) => (mv.soc_next - w.soc_drop, mv.cost + w.cost),
            None => (mv.soc_next, mv.cost),
        };
        if mv.v_next > self.route.effective_speed_limit(ctx.x_next, t_next) + 1e-9 {
            return None;
        }
        if let Some(light) = ctx.light_next {
            if mv.v_next > 0.0 && !light.is_green(t_next) {
                return None;
            }
        }
        if let Some(earliest) = ctx.lead_earliest {
            if t_next + 1e-9 < earliest {
                return None;
            }
        }
        Some(Transition {
            next: EgoState::new(mv.v_next, soc_next, t_next),
            cost,
            mv: *mv,
            wait,
        })
    }

    /// Step from `state` at `step` under `u`, constraints checked.
    pub fn transition(&self, step: usize, state: &EgoState, u: ControlInput) -> Option<Transition> {
        let ctx = self.context(step);
        let mv = self.move_part(state.v_mps, state.soc_frac, u)?;
        self.complete(&ctx, state, &mv)
    }

    /// Interpolation corners of `next` in `layer`, or `None` outside the hull.
    #[inline]
    pub fn corners(&self, layer: &StepAxes, next: &EgoState) -> Option<Corners> {
        let pv = layer.v.locate(next.v_mps)?;
        let ps = layer.soc.locate(next.soc_frac)?;
        let pt = layer.t.locate(next.time_s)?;
        Some(self.corners_at(layer, pv, ps, pt))
    }

    #[inline]
    pub fn corners_at(&self, layer: &StepAxes, pv: AxisPos, ps: AxisPos, pt: AxisPos) -> Corners {
        match self.scheme {
            SuccessorScheme::Interpolate => Corners::new(layer, pv, ps, pt),
            SuccessorScheme::Snap => {
                let near = |p: AxisPos| if p.frac >= 0.5 { p.i + 1 } else { p.i };
                Corners::node(layer.index(near(pv), near(ps), near(pt)))
            }
        }
    }

    /// Controls whose successor satisfies every constraint and lies in `next_layer`.
    pub fn admissible_controls(
        &self,
        step: usize,
        state: &EgoState,
        next_layer: &StepAxes,
    ) -> Vec<ControlInput> {
        self.controls
            .iter()
            .copied()
            .filter(|&u| {
                self.transition(step, state, u)
                    .and_then(|tr| self.corners(next_layer, &tr.next))
                    .is_some()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::grid::{Axis, GridSpec};
    use crate::world::{LeadSample, LeadTrajectory, LimitChange, Provenance, TrafficJam};

    fn route(lights: Vec<TrafficLight>, jams: Vec<TrafficJam>) -> Route {
        Route::new(
            "t",
            400.0,
            10.0,
            vec![LimitChange { start_m: 0.0, limit_mps: 17.0 }],
            lights,
            jams,
        )
        .unwrap()
    }

    fn wide_layer() -> StepAxes {
        StepAxes {
            v: Axis::new(0.0, 1.0, 18),
            soc: Axis::new(0.0, 0.01, 101),
            t: Axis::new(0.0, 1.0, 500),
        }
    }

    #[test]
    fn move_matches_vehicle_model() {
        let p = VehicleParams::default();
        let u = ControlInput::new(1.0, false);
        let mv = move_part(10.0, 0.25, u, 10.0, 0.8, &p).unwrap();
        let f = p.equiv_mass_kg + road_load(10.0, &p).unwrap();
        let vs = step_velocity(10.0, f, &p, 10.0).unwrap();
        assert_eq!(mv.v_next, vs.v_next);
        let v_bar = 0.5 * (10.0 + vs.v_next);
        let soc = crate::vehicle::step_soc(0.25, mv.flows.elec_demand_w, v_bar, 10.0, &p).unwrap();
        assert_eq!(mv.soc_next, soc.soc_next);
        assert_eq!(mv.dt, 10.0 / v_bar);
    }

    #[test]
    fn standing_still_needs_positive_accel() {
        let p = VehicleParams::default();
        assert!(move_part(0.0, 0.25, ControlInput::new(0.0, false), 10.0, 0.8, &p).is_none());
        assert!(move_part(0.0, 0.25, ControlInput::new(-1.0, true), 10.0, 0.8, &p).is_none());
        assert!(move_part(0.0, 0.25, ControlInput::new(1.0, false), 10.0, 0.8, &p).is_some());
    }

    #[test]
    fn over_braking_stops_with_effective_decel() {
        let p = VehicleParams::default();
        let mv = move_part(3.0, 0.25, ControlInput::new(-3.0, false), 10.0, 0.8, &p).unwrap();
        assert!(mv.over_braked);
        assert_eq!(mv.v_next, 0.0);
        assert_eq!(mv.accel_eff, -9.0 / 20.0);
        assert_eq!(mv.dt, 10.0 / 1.5);
    }

    #[test]
    fn jam_filters_fast_controls() {
        let jam = TrafficJam {
            x_start_m: 0.0,
            x_end_m: 400.0,
            t_start_s: 0.0,
            t_end_s: 1000.0,
            density_veh_per_km: 100.0,
            greenshield_c1: 0.1,
            greenshield_c2: 20.0,
        };
        let r = route(vec![], vec![jam]);
        let p = VehicleParams::default();
        let prob = Problem::new(&r, &p, 0.8, GridSpec::default().controls());
        let state = EgoState::new(10.0, 0.25, 5.0);
        let ok = prob.admissible_controls(3, &state, &wide_layer());
        assert!(!ok.is_empty());
        assert!(ok.iter().all(|u| u.accel_mps2 <= 0.0));
    }

    #[test]
    fn red_light_allows_only_stopping() {
        // Light at 100 m is red on [30, 60) of every 60 s cycle.
        let light = TrafficLight { position_m: 100.0, cycle_s: 60.0, green_s: 30.0, offset_s: 0.0 };
        let r = route(vec![light], vec![]);
        let p = VehicleParams::default();
        let prob = Problem::new(&r, &p, 0.8, GridSpec::default().controls());
        let state = EgoState::new(2.0, 0.25, 40.0);
        let ok = prob.admissible_controls(9, &state, &wide_layer());
        assert!(!ok.is_empty());
        for u in &ok {
            let tr = prob.transition(9, &state, *u).unwrap();
            assert_eq!(tr.next.v_mps, 0.0);
        }
        // Standing at the red light: wait for green, then move.
        let stopped = EgoState::new(0.0, 0.25, 40.0);
        let tr = prob.transition(10, &stopped, ControlInput::new(1.0, false)).unwrap();
        let w = tr.wait.unwrap();
        assert_eq!(w.duration_s, 20.0);
        assert_eq!(tr.next.time_s, 60.0 + tr.mv.dt);
        assert!(tr.next.soc_frac < tr.mv.soc_next);
    }

    #[test]
    fn lead_gap_filters_early_arrivals() {
        let samples = (0..=60)
            .map(|i| LeadSample { t_s: i as f64, x_m: 10.0 * i as f64, v_mps: 10.0 })
            .collect();
        let lead = LeadTrajectory::new(samples, Provenance::Synthetic).unwrap();
        let r = route(vec![], vec![]);
        let p = VehicleParams::default();
        let prob = Problem::new(&r, &p, 0.8, GridSpec::default().controls())
            .with_lead(Some(LeadConstraint::new(&lead, 2.0)));
        // Ego 2 s behind the lead at 50 m: lead reaches 60 m at 6 s, so t' >= 8 s.
        let state = EgoState::new(10.0, 0.25, 7.0);
        let ok = prob.admissible_controls(5, &state, &wide_layer());
        assert!(!ok.is_empty());
        for u in &ok {
            let tr = prob.transition(5, &state, *u).unwrap();
            assert!(tr.next.time_s >= 8.0 - 1e-9);
        }
        assert!(!ok.iter().any(|u| u.accel_mps2 >= 1.0));
    }
}
