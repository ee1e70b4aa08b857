use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Space-time window of slowed traffic; the speed follows Greenshield's
/// linear speed-density relation `v = c2 - c1 * rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficJam {
    pub x_start_m: f64,
    pub x_end_m: f64,
    pub t_start_s: f64,
    pub t_end_s: f64,
    pub density_veh_per_km: f64,
    /// Speed drop per unit density [m/s per veh/km].
    pub greenshield_c1: f64,
    /// Free-flow speed [m/s].
    pub greenshield_c2: f64,
}

impl TrafficJam {
    pub fn jam_speed(&self) -> Result<f64> {
        let v = greenshield_speed(self.greenshield_c1, self.greenshield_c2, self.density_veh_per_km);
        if v > 0.0 && v <= self.greenshield_c2 {
            Ok(v)
        } else {
            Err(Error::InvalidJam { speed_mps: v })
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_start_m < self.x_end_m) || !(self.t_start_s < self.t_end_s) {
            return Err(Error::Config(format!(
                "jam window [{}, {}) m x [{}, {}) s is empty",
                self.x_start_m, self.x_end_m, self.t_start_s, self.t_end_s
            )));
        }
        self.jam_speed().map(|_| ())
    }

    /// Half-open window `[x_start, x_end) x [t_start, t_end)`.
    #[inline]
    pub fn contains(&self, x: f64, t: f64) -> bool {
        x >= self.x_start_m && x < self.x_end_m && t >= self.t_start_s && t < self.t_end_s
    }
}

#[inline]
pub fn greenshield_speed(c1: f64, c2: f64, density: f64) -> f64 {
    c2 - c1 * density
}
