use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Receding-horizon controller settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcConfig {
    pub ds_m: f64,
    pub horizon_m: f64,
    pub gamma: f64,
    /// Time gap kept behind the lead vehicle.
    pub t_gap_s: f64,
    /// How far past the horizon the lead is projected.
    pub proxy_projection_m: f64,
    /// The lead is observed only this far ahead.
    pub sensing_range_m: f64,
    /// Bound on the finite-difference lead acceleration estimate.
    pub accel_est_limit_mps2: f64,
    /// Integration step of the lead projection.
    pub proxy_dt_s: f64,
    /// Spacing of the two lead speed samples behind the acceleration estimate.
    pub accel_window_s: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            ds_m: 10.0,
            horizon_m: 200.0,
            gamma: 0.8,
            t_gap_s: 2.0,
            proxy_projection_m: 200.0,
            sensing_range_m: 200.0,
            accel_est_limit_mps2: 3.0,
            proxy_dt_s: 0.5,
            accel_window_s: 1.0,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.accel_window_s > 0.0 && self.proxy_dt_s > 0.0) {
            return Err(Error::Config("mpc accel window and proxy step must be > 0".into()));
        }
        if !(self.ds_m > 0.0 && self.horizon_m > 0.0) {
            return Err(Error::Config("mpc ds and horizon must be > 0".into()));
        }
        let n = self.horizon_m / self.ds_m;
        if (n - n.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "horizon {} m is not a multiple of ds {} m",
                self.horizon_m, self.ds_m
            )));
        }
        if !(self.t_gap_s >= 0.0) || !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config("t_gap must be >= 0 and gamma in [0, 1]".into()));
        }
        if !(self.proxy_projection_m >= 0.0 && self.sensing_range_m >= 0.0 && self.proxy_dt_s > 0.0) {
            return Err(Error::Config("proxy settings must be positive".into()));
        }
        Ok(())
    }

    pub fn horizon_steps(&self) -> usize {
        (self.horizon_m / self.ds_m).round() as usize
    }
}
