use serde::{Deserialize, Serialize};

use super::jam::TrafficJam;
use super::signal::TrafficLight;
use crate::error::{Error, Result};

/// Start of a constant speed-limit segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitChange {
    pub start_m: f64,
    pub limit_mps: f64,
}

/// Road geometry plus everything fixed along it. Built once, then shared read-only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Route {
    pub name: String,
    pub length_m: f64,
    pub ds_m: f64,
    /// Sorted by `start_m`; the first entry starts at 0.
    pub speed_limits: Vec<LimitChange>,
    pub min_speed_mps: f64,
    /// Sorted by position, strictly increasing.
    pub lights: Vec<TrafficLight>,
    pub jams: Vec<TrafficJam>,
    #[serde(skip)]
    jam_speeds: Vec<f64>,
}

impl Route {
    pub fn new(
        name: impl Into<String>,
        length_m: f64,
        ds_m: f64,
        mut speed_limits: Vec<LimitChange>,
        mut lights: Vec<TrafficLight>,
        jams: Vec<TrafficJam>,
    ) -> Result<Self> {
        speed_limits.sort_by(|a, b| a.start_m.total_cmp(&b.start_m));
        lights.sort_by(|a, b| a.position_m.total_cmp(&b.position_m));
        let mut route = Route {
            name: name.into(),
            length_m,
            ds_m,
            speed_limits,
            min_speed_mps: 0.0,
            lights,
            jams,
            jam_speeds: Vec::new(),
        };
        route.validate()?;
        route.jam_speeds = route
            .jams
            .iter()
            .map(|j| j.jam_speed())
            .collect::<Result<_>>()?;
        Ok(route)
    }

    fn validate(&self) -> Result<()> {
        if !(self.ds_m > 0.0) || !(self.length_m >= 0.0) {
            return Err(Error::Config("route length must be >= 0 and ds > 0".into()));
        }
        let steps = self.length_m / self.ds_m;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "ds {} m does not divide route length {} m",
                self.ds_m, self.length_m
            )));
        }
        match self.speed_limits.first() {
            Some(first) if first.start_m == 0.0 => {}
            _ => return Err(Error::Config("speed limit profile must start at 0 m".into())),
        }
        if self.speed_limits.windows(2).any(|w| w[0].start_m == w[1].start_m)
            || self.speed_limits.iter().any(|l| !(l.limit_mps > 0.0))
        {
            return Err(Error::Config("speed limit change points must be distinct and limits > 0".into()));
        }
        for light in &self.lights {
            light.validate()?;
            if light.position_m > self.length_m {
                return Err(Error::Config(format!(
                    "light at {} m beyond route end {} m",
                    light.position_m, self.length_m
                )));
            }
            let node = light.position_m / self.ds_m;
            if (node - node.round()).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "light at {} m is not on a distance node",
                    light.position_m
                )));
            }
        }
        if self.lights.windows(2).any(|w| w[0].position_m >= w[1].position_m) {
            return Err(Error::Config("light positions must be strictly increasing".into()));
        }
        for jam in &self.jams {
            jam.validate()?;
        }
        Ok(())
    }

    pub fn with_min_speed(mut self, v_min: f64) -> Self {
        self.min_speed_mps = v_min;
        self
    }

    /// A copy with the jams removed.
    pub fn without_jams(&self) -> Route {
        Route {
            jams: Vec::new(),
            jam_speeds: Vec::new(),
            ..self.clone()
        }
    }

    pub fn with_jams(&self, jams: Vec<TrafficJam>) -> Result<Route> {
        Route::new(
            self.name.clone(),
            self.length_m,
            self.ds_m,
            self.speed_limits.clone(),
            self.lights.clone(),
            jams,
        )
        .map(|r| r.with_min_speed(self.min_speed_mps))
    }

    /// Number of distance steps `N`.
    #[inline]
    pub fn step_count(&self) -> usize {
        (self.length_m / self.ds_m).round() as usize
    }

    #[inline]
    pub fn position(&self, step: usize) -> f64 {
        step as f64 * self.ds_m
    }

    pub fn base_limit(&self, x: f64) -> f64 {
        let idx = self.speed_limits.partition_point(|l| l.start_m <= x);
        self.speed_limits[idx.saturating_sub(1)].limit_mps
    }

    /// Highest base limit anywhere on the route.
    pub fn max_limit(&self) -> f64 {
        self.speed_limits
            .iter()
            .map(|l| l.limit_mps)
            .fold(0.0, f64::max)
    }

    /// Next change point strictly after `x`.
    pub fn next_limit_change(&self, x: f64) -> Option<LimitChange> {
        let idx = self.speed_limits.partition_point(|l| l.start_m <= x);
        self.speed_limits.get(idx).copied()
    }

    /// Light located exactly on node `step`, if any.
    pub fn light_at_step(&self, step: usize) -> Option<&TrafficLight> {
        let x = self.position(step);
        let idx = self.lights.partition_point(|l| l.position_m < x - 1e-9);
        self.lights
            .get(idx)
            .filter(|l| (l.position_m - x).abs() <= 1e-9)
    }

    /// First light at or ahead of `x`.
    pub fn upcoming_light(&self, x: f64) -> Option<&TrafficLight> {
        let idx = self.lights.partition_point(|l| l.position_m < x - 1e-9);
        self.lights.get(idx)
    }

    /// Number of lights strictly before `x`.
    pub fn lights_before(&self, x: f64) -> usize {
        self.lights.partition_point(|l| l.position_m < x - 1e-9)
    }

    pub fn jam_speeds(&self) -> &[f64] {
        &self.jam_speeds
    }

    /// Speed cap at `(x, t)`: the slowest jam covering the point, else the base
    /// limit, never below the minimum speed.
    pub fn effective_speed_limit(&self, x: f64, t: f64) -> f64 {
        let mut limit = self.base_limit(x);
        for (jam, &v_jam) in self.jams.iter().zip(&self.jam_speeds) {
            if jam.contains(x, t) {
                limit = limit.min(v_jam);
            }
        }
        limit.max(self.min_speed_mps)
    }

    /// Stable digest of the route definition.
    pub fn fingerprint(&self) -> String {
        crate::util::sha256_hex(serde_json::to_string(self).unwrap_or_default().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn sample_route(jams: Vec<TrafficJam>) -> Route {
        Route::new(
            "t",
            2000.0,
            10.0,
            vec![
                LimitChange { start_m: 0.0, limit_mps: 17.0 },
                LimitChange { start_m: 1200.0, limit_mps: 14.0 },
            ],
            vec![
                TrafficLight { position_m: 200.0, cycle_s: 60.0, green_s: 30.0, offset_s: 0.0 },
                TrafficLight { position_m: 900.0, cycle_s: 50.0, green_s: 25.0, offset_s: 10.0 },
            ],
            jams,
        )
        .unwrap()
    }

    fn jam(v_density: f64, x0: f64, x1: f64) -> TrafficJam {
        TrafficJam {
            x_start_m: x0,
            x_end_m: x1,
            t_start_s: 0.0,
            t_end_s: 100.0,
            density_veh_per_km: v_density,
            greenshield_c1: 0.1,
            greenshield_c2: 20.0,
        }
    }

    #[test]
    fn geometry_queries() {
        let r = sample_route(vec![]);
        assert_eq!(r.step_count(), 200);
        assert_eq!(r.base_limit(0.0), 17.0);
        assert_eq!(r.base_limit(1199.0), 17.0);
        assert_eq!(r.base_limit(1200.0), 14.0);
        assert_eq!(r.next_limit_change(500.0).unwrap().start_m, 1200.0);
        assert!(r.next_limit_change(1200.0).is_none());
        assert!(r.light_at_step(20).is_some());
        assert!(r.light_at_step(21).is_none());
        assert_eq!(r.upcoming_light(200.0).unwrap().position_m, 200.0);
        assert_eq!(r.upcoming_light(201.0).unwrap().position_m, 900.0);
        assert!(r.upcoming_light(901.0).is_none());
        assert_eq!(r.lights_before(900.0), 1);
    }

    #[test]
    fn rejects_bad_geometry() {
        let limits = vec![LimitChange { start_m: 0.0, limit_mps: 15.0 }];
        assert!(Route::new("x", 105.0, 10.0, limits.clone(), vec![], vec![]).is_err());
        let off_node = TrafficLight { position_m: 55.0, cycle_s: 60.0, green_s: 30.0, offset_s: 0.0 };
        assert!(Route::new("x", 100.0, 10.0, limits.clone(), vec![off_node], vec![]).is_err());
        assert!(Route::new("x", 100.0, 10.0, limits, vec![], vec![jam(200.0, 0.0, 50.0)]).is_err());
    }

    #[test]
    fn effective_limit_branches() {
        let r = sample_route(vec![jam(100.0, 500.0, 800.0)]);
        assert_eq!(r.effective_speed_limit(300.0, 10.0), 17.0);
        assert_eq!(r.effective_speed_limit(600.0, 10.0), 10.0);
        assert_eq!(r.effective_speed_limit(600.0, 150.0), 17.0);

        let r = sample_route(vec![jam(100.0, 500.0, 800.0), jam(120.0, 600.0, 700.0)]);
        assert_eq!(r.effective_speed_limit(650.0, 10.0), 8.0);
        assert_eq!(r.effective_speed_limit(550.0, 10.0), 10.0);
    }

    proptest! {
        #[test]
        fn effective_limit_never_above_base(x in 0.0f64..2000.0, t in -10.0f64..200.0, rho in 0.0f64..190.0) {
            let r = sample_route(vec![jam(rho, 400.0, 1500.0)]);
            let eff = r.effective_speed_limit(x, t);
            prop_assert!(eff <= r.base_limit(x));
            if !r.jams[0].contains(x, t) {
                prop_assert_eq!(eff, r.base_limit(x));
            }
        }
    }
}
