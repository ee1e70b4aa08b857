//! Distance-domain longitudinal dynamics, battery and fuel surrogate.
//!
//! Every quantity is in SI units unless the field name says otherwise. The
//! velocity update works on squared speed over a fixed distance step, the
//! battery is an open-circuit-voltage plus series-resistance model, and the
//! engine follows a Willans line.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `value(soc) = intercept + slope * soc`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub intercept: f64,
    pub slope: f64,
}

impl Affine {
    pub const fn new(intercept: f64, slope: f64) -> Self {
        Self { intercept, slope }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Vehicle and powertrain parameters.
///
/// The config file is flat key/value TOML; every key carries its unit as a
/// suffix (`_kg`, `_n`, `_w`, `_gps`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    pub equiv_mass_kg: f64,
    /// Road load `a0 + a1 v + a2 v^2`.
    pub road_load_a0_n: f64,
    pub road_load_a1_n_s_per_m: f64,
    pub road_load_a2_n_s2_per_m2: f64,
    pub batt_capacity_coulomb: f64,
    /// Open-circuit voltage as an affine function of SoC [V].
    pub ocv_v: Affine,
    /// Internal resistance as an affine function of SoC [ohm].
    pub resistance_ohm: Affine,
    pub fuel_idle_rate_gps: f64,
    pub willans_slope_g_per_j: f64,
    pub lhv_j_per_g: f64,
    pub k_batt: f64,
    pub fuel_norm_rate_gps: f64,
    pub accel_min_mps2: f64,
    pub accel_max_mps2: f64,
    pub tractive_force_min_n: f64,
    pub tractive_force_max_n: f64,
    pub aux_elec_load_w: f64,
    pub regen_efficiency: f64,
    /// Largest electrical power the motor can return while braking; the rest
    /// goes to the friction brakes.
    pub regen_power_limit_w: f64,
    /// Upper end of the speed range on which the road-load invariant is checked.
    pub max_speed_mps: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            equiv_mass_kg: 2200.0,
            road_load_a0_n: 160.0,
            road_load_a1_n_s_per_m: 1.5,
            road_load_a2_n_s2_per_m2: 0.42,
            batt_capacity_coulomb: 3.6e5,
            ocv_v: Affine::new(340.0, 60.0),
            resistance_ohm: Affine::new(0.12, -0.02),
            fuel_idle_rate_gps: 0.25,
            willans_slope_g_per_j: 6.5e-5,
            lhv_j_per_g: 43_000.0,
            k_batt: 1.0,
            fuel_norm_rate_gps: 2.0,
            accel_min_mps2: -3.0,
            accel_max_mps2: 2.0,
            tractive_force_min_n: -8000.0,
            tractive_force_max_n: 6000.0,
            aux_elec_load_w: 400.0,
            regen_efficiency: 0.6,
            regen_power_limit_w: 20_000.0,
            max_speed_mps: 40.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("equiv_mass_kg", self.equiv_mass_kg),
            ("batt_capacity_coulomb", self.batt_capacity_coulomb),
            ("lhv_j_per_g", self.lhv_j_per_g),
            ("fuel_norm_rate_gps", self.fuel_norm_rate_gps),
            ("max_speed_mps", self.max_speed_mps),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0, got {value}")));
            }
        }
        for soc in [0.0, 1.0] {
            if !(self.ocv_v.eval(soc) > 0.0) || !(self.resistance_ohm.eval(soc) > 0.0) {
                return Err(Error::Config(format!(
                    "open-circuit voltage and resistance must be positive on [0, 1] (soc {soc})"
                )));
            }
        }
        if self.road_load_a0_n < 0.0 || self.road_load_a2_n_s2_per_m2 < 0.0 {
            return Err(Error::Config("road load a0 and a2 must be >= 0".into()));
        }
        // Quadratic is convex, so its minimum over [0, vmax] is at an end or the vertex.
        let mut probes = vec![0.0, self.max_speed_mps];
        if self.road_load_a2_n_s2_per_m2 > 0.0 {
            let vertex = -self.road_load_a1_n_s_per_m / (2.0 * self.road_load_a2_n_s2_per_m2);
            if vertex > 0.0 && vertex < self.max_speed_mps {
                probes.push(vertex);
            }
        }
        if probes.iter().any(|&v| self.road_load_unchecked(v) < 0.0) {
            return Err(Error::Config("road load negative on the admissible speed range".into()));
        }
        if !(self.accel_min_mps2 < 0.0 && self.accel_max_mps2 > 0.0) {
            return Err(Error::Config("acceleration bounds must straddle zero".into()));
        }
        if !(self.tractive_force_min_n < self.tractive_force_max_n) {
            return Err(Error::Config("tractive force bounds are empty".into()));
        }
        if !(0.0..=1.0).contains(&self.regen_efficiency) {
            return Err(Error::Config("regen_efficiency must be in [0, 1]".into()));
        }
        if self.regen_power_limit_w < 0.0 || self.aux_elec_load_w < 0.0 {
            return Err(Error::Config("power limits must be >= 0".into()));
        }
        Ok(())
    }

    #[inline]
    fn road_load_unchecked(&self, v: f64) -> f64 {
        self.road_load_a0_n + self.road_load_a1_n_s_per_m * v + self.road_load_a2_n_s2_per_m2 * v * v
    }

    /// Largest discharge power the battery can deliver at `soc`, `V_oc^2 / (4 R_0)`.
    pub fn max_battery_power_w(&self, soc: f64) -> f64 {
        let voc = self.ocv_v.eval(soc);
        voc * voc / (4.0 * self.resistance_ohm.eval(soc))
    }
}

/// State at a distance node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub v_mps: f64,
    pub soc_frac: f64,
    pub time_s: f64,
}

impl EgoState {
    pub const fn new(v_mps: f64, soc_frac: f64, time_s: f64) -> Self {
        Self {
            v_mps,
            soc_frac,
            time_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub accel_mps2: f64,
    pub engine_on: bool,
}

impl ControlInput {
    pub const fn new(accel_mps2: f64, engine_on: bool) -> Self {
        Self {
            accel_mps2,
            engine_on,
        }
    }
}

/// Power and fuel flows of one segment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PowerFlows {
    pub tractive_force_n: f64,
    pub road_load_n: f64,
    pub tractive_power_w: f64,
    /// Chemical battery power `V_oc * I`, losses included.
    pub batt_power_w: f64,
    /// Electrical demand at the terminals.
    pub elec_demand_w: f64,
    pub fuel_rate_gps: f64,
    pub equiv_fuel_rate_gps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityStep {
    pub v_next: f64,
    /// The step would have needed a negative squared speed; the vehicle stops.
    pub over_braked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocStep {
    pub soc_next: f64,
    pub saturated: bool,
}

pub fn road_load(v: f64, params: &VehicleParams) -> Result<f64> {
    if !(v >= 0.0) {
        return Err(Error::Domain(format!("road load needs v >= 0, got {v}")));
    }
    Ok(params.road_load_unchecked(v))
}

/// Speeds below this are a standstill; braking to zero leaves float residue.
pub const STANDSTILL_MPS: f64 = 1e-6;

/// `v'^2 = v^2 + 2 ds (F_tr - F_road(v)) / M`, clamped at standstill.
pub fn step_velocity(v: f64, f_tr: f64, params: &VehicleParams, ds: f64) -> Result<VelocityStep> {
    if !(ds > 0.0) {
        return Err(Error::Domain(format!("distance step must be > 0, got {ds}")));
    }
    let net = f_tr - road_load(v, params)?;
    let radicand = v * v + 2.0 * ds * net / params.equiv_mass_kg;
    Ok(if radicand < STANDSTILL_MPS * STANDSTILL_MPS {
        VelocityStep {
            v_next: 0.0,
            over_braked: true,
        }
    } else {
        VelocityStep {
            v_next: radicand.sqrt(),
            over_braked: false,
        }
    })
}

/// Battery current drawn for terminal power `p_dmd`, the smaller root of
/// `V_oc I - R_0 I^2 = P`. Written as `2P / (V_oc + sqrt(V_oc^2 - 4 R_0 P))`,
/// which is the same root without the cancellation at small power.
pub fn battery_current(soc: f64, p_dmd: f64, params: &VehicleParams) -> Result<f64> {
    let voc = params.ocv_v.eval(soc);
    let r0 = params.resistance_ohm.eval(soc);
    let disc = voc * voc - 4.0 * r0 * p_dmd;
    if disc < 0.0 {
        return Err(Error::InfeasiblePower {
            demand_w: p_dmd,
            max_w: voc * voc / (4.0 * r0),
        });
    }
    Ok(2.0 * p_dmd / (voc + disc.sqrt()))
}

pub fn step_soc(soc: f64, p_dmd: f64, v_bar: f64, ds: f64, params: &VehicleParams) -> Result<SocStep> {
    if !(v_bar > 0.0) {
        return Err(Error::Domain(format!(
            "SoC update over a moving segment needs mean speed > 0, got {v_bar}"
        )));
    }
    if !(0.0..=1.0).contains(&soc) {
        return Err(Error::Domain(format!("SoC {soc} outside [0, 1]")));
    }
    let current = battery_current(soc, p_dmd, params)?;
    let next = soc - ds / (v_bar * params.batt_capacity_coulomb) * current;
    let clamped = next.clamp(0.0, 1.0);
    Ok(SocStep {
        soc_next: clamped,
        saturated: clamped != next,
    })
}

/// Time update. A vehicle standing at a red light waits `t_rg`; otherwise the
/// segment takes `ds / v_bar`.
pub fn step_time(t: f64, v_bar: f64, ds: f64, at_red_light: bool, t_rg: f64) -> Result<f64> {
    if !(ds > 0.0) {
        return Err(Error::Domain(format!("distance step must be > 0, got {ds}")));
    }
    if at_red_light && v_bar == 0.0 {
        return Ok(t + t_rg);
    }
    if !(v_bar > 0.0) {
        return Err(Error::Domain(format!(
            "mean speed {v_bar} must be > 0 away from a red light"
        )));
    }
    Ok(t + ds / v_bar)
}

/// Splits the tractive demand between engine and battery.
///
/// Engine off: the battery covers traction plus the auxiliary load and
/// recovers `regen_efficiency` of negative tractive power, capped at
/// `regen_power_limit_w`. Engine on: the engine covers traction on its Willans
/// line (friction brakes absorb negative power) and the battery only carries
/// the auxiliary load.
pub fn power_split(
    soc: f64,
    v: f64,
    f_tr: f64,
    engine_on: bool,
    params: &VehicleParams,
) -> Result<PowerFlows> {
    power_split_with_current(soc, v, f_tr, engine_on, params).map(|(flows, _)| flows)
}

/// [`power_split`] plus the battery current it implies.
pub(crate) fn power_split_with_current(
    soc: f64,
    v: f64,
    f_tr: f64,
    engine_on: bool,
    params: &VehicleParams,
) -> Result<(PowerFlows, f64)> {
    if f_tr < params.tractive_force_min_n || f_tr > params.tractive_force_max_n {
        return Err(Error::ForceBound {
            force_n: f_tr,
            min_n: params.tractive_force_min_n,
            max_n: params.tractive_force_max_n,
        });
    }
    let road = road_load(v, params)?;
    let p_tr = f_tr * v;
    let (fuel, p_dmd) = if engine_on {
        let fuel = params.fuel_idle_rate_gps + params.willans_slope_g_per_j * p_tr.max(0.0);
        (fuel, params.aux_elec_load_w)
    } else {
        let elec = if p_tr >= 0.0 {
            p_tr
        } else {
            (params.regen_efficiency * p_tr).max(-params.regen_power_limit_w)
        };
        (0.0, elec + params.aux_elec_load_w)
    };
    let current = battery_current(soc, p_dmd, params)?;
    let batt_power = params.ocv_v.eval(soc) * current;
    let flows = PowerFlows {
        tractive_force_n: f_tr,
        road_load_n: road,
        tractive_power_w: p_tr,
        batt_power_w: batt_power,
        elec_demand_w: p_dmd,
        fuel_rate_gps: fuel,
        equiv_fuel_rate_gps: equivalent_fuel_rate(fuel, batt_power, params),
    };
    Ok((flows, current))
}

#[inline]
pub fn equivalent_fuel_rate(fuel_rate_gps: f64, batt_power_w: f64, params: &VehicleParams) -> f64 {
    fuel_rate_gps + params.k_batt * batt_power_w / params.lhv_j_per_g
}

/// Stage cost over a segment lasting `dt`:
/// `(gamma * mdot_eq / mdot_norm + (1 - gamma)) * dt`.
#[inline]
pub fn stage_cost(flows: &PowerFlows, dt: f64, gamma: f64, params: &VehicleParams) -> f64 {
    (gamma * flows.equiv_fuel_rate_gps / params.fuel_norm_rate_gps + (1.0 - gamma)) * dt
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed_battery(voc: f64, r0: f64, capacity: f64) -> VehicleParams {
        VehicleParams {
            ocv_v: Affine::new(voc, 0.0),
            resistance_ohm: Affine::new(r0, 0.0),
            batt_capacity_coulomb: capacity,
            ..VehicleParams::default()
        }
    }

    fn load(a0: f64, a1: f64, a2: f64, mass: f64) -> VehicleParams {
        VehicleParams {
            road_load_a0_n: a0,
            road_load_a1_n_s_per_m: a1,
            road_load_a2_n_s2_per_m2: a2,
            equiv_mass_kg: mass,
            ..VehicleParams::default()
        }
    }

    #[test]
    fn defaults_are_valid() {
        VehicleParams::default().validate().unwrap();
    }

    #[test]
    fn validate_rejects_bad_params() {
        let mut p = VehicleParams::default();
        p.equiv_mass_kg = 0.0;
        assert!(p.validate().is_err());
        let mut p = VehicleParams::default();
        p.resistance_ohm = Affine::new(0.01, -0.02);
        assert!(p.validate().is_err());
        let mut p = VehicleParams::default();
        p.road_load_a1_n_s_per_m = -100.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn road_load_examples() {
        let p = load(150.0, 2.0, 0.4, 2000.0);
        assert_eq!(road_load(0.0, &p).unwrap(), 150.0);
        assert_eq!(road_load(10.0, &p).unwrap(), 210.0);
        assert_eq!(road_load(20.0, &p).unwrap(), 350.0);
        assert!(matches!(road_load(-1.0, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn step_velocity_examples() {
        let p = load(150.0, 2.0, 0.4, 2000.0);
        let same = step_velocity(10.0, road_load(10.0, &p).unwrap(), &p, 10.0).unwrap();
        assert_eq!(same.v_next, 10.0);

        let f = road_load(10.0, &p).unwrap() + 2000.0;
        let up = step_velocity(10.0, f, &p, 10.0).unwrap();
        assert!((up.v_next - 120f64.sqrt()).abs() < 1e-12);
        assert!((up.v_next - 10.954).abs() < 1e-3);

        let f = road_load(5.0, &p).unwrap() - 10_000.0;
        let stop = step_velocity(5.0, f, &p, 10.0).unwrap();
        assert_eq!(stop.v_next, 0.0);
        assert!(stop.over_braked);
    }

    #[test]
    fn battery_current_examples() {
        let p = fixed_battery(360.0, 0.1, 108_000.0);
        assert_eq!(battery_current(0.5, 0.0, &p).unwrap(), 0.0);

        let i = battery_current(0.5, 36_000.0, &p).unwrap();
        // Oracle: textbook smaller root, then recover the power.
        let root = (360.0 - (360.0f64 * 360.0 - 4.0 * 0.1 * 36_000.0).sqrt()) / (2.0 * 0.1);
        assert!((i - root).abs() < 1e-9);
        // The quoted 102.95 A is rounded; the root is 102.9437 A.
        assert!((i - 102.95).abs() < 1e-2);
        assert!(((360.0 * i - 0.1 * i * i) - 36_000.0).abs() < 1e-6);

        assert!(battery_current(0.5, 324_000.0, &p).is_ok());
        assert!(matches!(
            battery_current(0.5, 324_001.0, &p),
            Err(Error::InfeasiblePower { .. })
        ));
    }

    #[test]
    fn step_soc_examples() {
        let p = fixed_battery(360.0, 0.1, 108_000.0);
        assert_eq!(step_soc(0.3, 0.0, 10.0, 10.0, &p).unwrap().soc_next, 0.3);

        // 10 m at 10 m/s is one second of ~102.95 A out of 108000 C.
        let i = battery_current(0.3, 36_000.0, &p).unwrap();
        let step = step_soc(0.3, 36_000.0, 10.0, 10.0, &p).unwrap();
        let drop = 0.3 - step.soc_next;
        assert!((drop - i / 108_000.0).abs() < 1e-15);
        assert!((drop - 9.532e-4).abs() < 1e-6);

        let regen = step_soc(0.3, -10_000.0, 10.0, 10.0, &p).unwrap();
        assert!(regen.soc_next > 0.3);

        assert!(step_soc(0.3, 0.0, 0.0, 10.0, &p).is_err());
        let sat = step_soc(1e-6, 100_000.0, 0.1, 10.0, &p).unwrap();
        assert_eq!(sat.soc_next, 0.0);
        assert!(sat.saturated);
    }

    #[test]
    fn step_time_examples() {
        assert_eq!(step_time(0.0, 5.0, 10.0, false, 0.0).unwrap(), 2.0);
        assert_eq!(step_time(3.0, 0.0, 10.0, true, 17.0).unwrap(), 20.0);
        assert_eq!(step_time(0.0, 20.0, 10.0, false, 0.0).unwrap(), 0.5);
        assert!(step_time(0.0, 0.0, 10.0, false, 0.0).is_err());
    }

    #[test]
    fn power_split_examples() {
        let p = VehicleParams {
            aux_elec_load_w: 300.0,
            ..VehicleParams::default()
        };
        let ev = power_split(0.5, 10.0, 1000.0, false, &p).unwrap();
        assert_eq!(ev.elec_demand_w, 10_300.0);
        assert_eq!(ev.fuel_rate_gps, 0.0);

        let idle = power_split(0.5, 10.0, 0.0, true, &p).unwrap();
        assert_eq!(idle.fuel_rate_gps, p.fuel_idle_rate_gps);
        assert_eq!(idle.elec_demand_w, 300.0);

        let regen = power_split(0.5, 10.0, -2000.0, false, &p).unwrap();
        assert!((regen.elec_demand_w - (-11_700.0)).abs() < 1e-9);

        assert!(matches!(
            power_split(0.5, 10.0, 1e6, false, &p),
            Err(Error::ForceBound { .. })
        ));
    }

    #[test]
    fn stage_cost_examples() {
        let p = VehicleParams::default();
        let flows = PowerFlows {
            equiv_fuel_rate_gps: 3.7,
            ..PowerFlows::default()
        };
        assert_eq!(stage_cost(&flows, 1.5, 0.0, &p), 1.5);
        let unit = PowerFlows {
            equiv_fuel_rate_gps: p.fuel_norm_rate_gps,
            ..PowerFlows::default()
        };
        assert_eq!(stage_cost(&unit, 2.0, 1.0, &p), 2.0);
        let double = PowerFlows {
            equiv_fuel_rate_gps: 2.0 * p.fuel_norm_rate_gps,
            ..PowerFlows::default()
        };
        assert_eq!(stage_cost(&double, 2.0, 0.5, &p), 3.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn kinetic_energy_consistent(v in 0.0f64..30.0, f in -8000.0f64..6000.0, ds in 1.0f64..20.0) {
                let p = VehicleParams::default();
                let step = step_velocity(v, f, &p, ds).unwrap();
                if !step.over_braked {
                    let lhs = p.equiv_mass_kg * (step.v_next * step.v_next - v * v) / 2.0;
                    let rhs = ds * (f - road_load(v, &p).unwrap());
                    prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
                }
            }

            #[test]
            fn battery_quadratic_consistent(soc in 0.0f64..1.0, p_dmd in -60_000.0f64..120_000.0) {
                let p = VehicleParams::default();
                let i = battery_current(soc, p_dmd, &p).unwrap();
                let voc = p.ocv_v.eval(soc);
                let r0 = p.resistance_ohm.eval(soc);
                let back = voc * i - r0 * i * i;
                prop_assert!((back - p_dmd).abs() <= 1e-9 * p_dmd.abs().max(1.0));
            }

            #[test]
            fn equivalent_fuel_identity(soc in 0.0f64..1.0, v in 0.0f64..30.0, f in -8000.0f64..6000.0, on in any::<bool>()) {
                let p = VehicleParams::default();
                let flows = power_split(soc, v, f, on, &p).unwrap();
                let expected = flows.fuel_rate_gps + p.k_batt * flows.batt_power_w / p.lhv_j_per_g;
                prop_assert_eq!(flows.equiv_fuel_rate_gps, expected);
            }

            #[test]
            fn soc_monotone_in_demand_sign(soc in 0.05f64..0.95, p_dmd in 1.0f64..100_000.0) {
                let p = VehicleParams::default();
                let down = step_soc(soc, p_dmd, 10.0, 10.0, &p).unwrap();
                let up = step_soc(soc, -p_dmd, 10.0, 10.0, &p).unwrap();
                prop_assert!(down.soc_next < soc);
                prop_assert!(up.soc_next > soc);
            }

            #[test]
            fn stage_cost_at_zero_gamma_is_dt(mdot in -5.0f64..5.0, dt in 0.01f64..10.0) {
                let p = VehicleParams::default();
                let flows = PowerFlows { equiv_fuel_rate_gps: mdot, ..PowerFlows::default() };
                prop_assert_eq!(stage_cost(&flows, dt, 0.0, &p), dt);
            }
        }
    }
}
