use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed-cycle traffic light. Green starts at `offset_s + k * cycle_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficLight {
    pub position_m: f64,
    pub cycle_s: f64,
    pub green_s: f64,
    #[serde(default)]
    pub offset_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Green,
    Red,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalPhase {
    pub phase: Phase,
    /// Time left in the red phase, zero when green.
    pub t_rg: f64,
    /// Current green window if green, otherwise the next one.
    pub next_green_window: (f64, f64),
}

impl TrafficLight {
    pub fn validate(&self) -> Result<()> {
        if !(self.green_s > 0.0 && self.green_s < self.cycle_s) {
            return Err(Error::Config(format!(
                "light at {} m needs 0 < green ({}) < cycle ({})",
                self.position_m, self.green_s, self.cycle_s
            )));
        }
        if !self.offset_s.is_finite() || !(self.position_m >= 0.0) {
            return Err(Error::Config(format!("light at {} m is malformed", self.position_m)));
        }
        Ok(())
    }

    #[inline]
    fn cycle_position(&self, t: f64) -> f64 {
        (t - self.offset_s).rem_euclid(self.cycle_s)
    }

    #[inline]
    pub fn is_green(&self, t: f64) -> bool {
        self.cycle_position(t) < self.green_s
    }

    /// Red time remaining at `t`, zero when green.
    #[inline]
    pub fn red_remaining(&self, t: f64) -> f64 {
        let tau = self.cycle_position(t);
        if tau < self.green_s {
            0.0
        } else {
            self.cycle_s - tau
        }
    }

    pub fn signal_phase(&self, t: f64) -> SignalPhase {
        let tau = self.cycle_position(t);
        if tau < self.green_s {
            let start = t - tau;
            SignalPhase {
                phase: Phase::Green,
                t_rg: 0.0,
                next_green_window: (start, start + self.green_s),
            }
        } else {
            let t_rg = self.cycle_s - tau;
            SignalPhase {
                phase: Phase::Red,
                t_rg,
                next_green_window: (t + t_rg, t + t_rg + self.green_s),
            }
        }
    }
}
