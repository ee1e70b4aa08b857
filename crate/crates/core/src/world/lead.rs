use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadSample {
    pub t_s: f64,
    pub x_m: f64,
    pub v_mps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    DpGenerated,
    Replayed,
    Synthetic,
}

/// Time-ordered samples of the lead vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadTrajectory {
    samples: Vec<LeadSample>,
    pub provenance: Provenance,
}

impl LeadTrajectory {
    pub fn new(samples: Vec<LeadSample>, provenance: Provenance) -> Result<Self> {
        let lead = Self { samples, provenance };
        lead.validate(1e-3)?;
        Ok(lead)
    }

    /// Skips the integration-consistency check; used for projections built
    /// from clamped kinematics.
    pub(crate) fn new_unchecked(samples: Vec<LeadSample>, provenance: Provenance) -> Self {
        Self { samples, provenance }
    }

    pub fn validate(&self, rel_tol: f64) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::Config("lead trajectory has no samples".into()));
        }
        for (i, w) in self.samples.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            if !(b.t_s > a.t_s) || b.x_m < a.x_m {
                return Err(Error::Config(format!(
                    "lead sample {} breaks time/position ordering",
                    i + 1
                )));
            }
            let dx = b.x_m - a.x_m;
            let integral = 0.5 * (a.v_mps + b.v_mps) * (b.t_s - a.t_s);
            if (dx - integral).abs() > rel_tol * dx.max(integral).max(1.0) {
                return Err(Error::Config(format!(
                    "lead sample {}: position step {dx:.4} m disagrees with velocity integral {integral:.4} m",
                    i + 1
                )));
            }
        }
        if self.samples.iter().any(|s| !(s.v_mps >= 0.0)) {
            return Err(Error::Config("lead velocity must be >= 0".into()));
        }
        Ok(())
    }

    pub fn samples(&self) -> &[LeadSample] {
        &self.samples
    }

    pub fn span(&self) -> (f64, f64) {
        (self.samples[0].x_m, self.samples[self.samples.len() - 1].x_m)
    }

    pub fn end_time(&self) -> f64 {
        self.samples[self.samples.len() - 1].t_s
    }

    /// Shifts every sample in time.
    pub fn shifted(&self, dt: f64) -> LeadTrajectory {
        LeadTrajectory {
            samples: self
                .samples
                .iter()
                .map(|s| LeadSample { t_s: s.t_s + dt, ..*s })
                .collect(),
            provenance: self.provenance,
        }
    }

    /// First time the lead reaches `x`, linear in position between samples.
    pub fn lead_time_at(&self, x: f64) -> Result<f64> {
        let (start, end) = self.span();
        if x < start || x > end {
            return Err(Error::Extrapolation {
                x_m: x,
                start_m: start,
                end_m: end,
            });
        }
        let i = self.samples.partition_point(|s| s.x_m < x);
        if i == 0 {
            return Ok(self.samples[0].t_s);
        }
        let (a, b) = (self.samples[i - 1], self.samples[i]);
        if b.x_m == x {
            return Ok(b.t_s);
        }
        let frac = (x - a.x_m) / (b.x_m - a.x_m);
        Ok(a.t_s + frac * (b.t_s - a.t_s))
    }

    /// Position and velocity at `t`, held at the end points outside the sampled range.
    pub fn state_at(&self, t: f64) -> (f64, f64) {
        let i = self.samples.partition_point(|s| s.t_s < t);
        if i == 0 {
            let s = self.samples[0];
            return (s.x_m, s.v_mps);
        }
        if i == self.samples.len() {
            let s = self.samples[i - 1];
            return (s.x_m, s.v_mps);
        }
        let (a, b) = (self.samples[i - 1], self.samples[i]);
        let frac = (t - a.t_s) / (b.t_s - a.t_s);
        // Position from the trapezoid of the bracketing velocities keeps x and v consistent.
        let v = a.v_mps + frac * (b.v_mps - a.v_mps);
        let dt = t - a.t_s;
        let x = (a.x_m + 0.5 * (a.v_mps + v) * dt).min(b.x_m);
        (x, v)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t_s", "x_m", "v_mps"])?;
        for s in &self.samples {
            w.write_record([fmt_f64(s.t_s), fmt_f64(s.x_m), fmt_f64(s.v_mps)])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path, provenance: Provenance) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t_s", "x_m", "v_mps"] {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: format!("expected header t_s,x_m,v_mps, found {:?}", headers),
            });
        }
        let mut samples = Vec::new();
        for rec in r.deserialize() {
            let s: LeadSample = rec?;
            samples.push(s);
        }
        LeadTrajectory::new(samples, provenance)
    }
}

/// Shortest round-trip decimal representation.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(v: f64, until: f64) -> LeadTrajectory {
        let samples = (0..=(until as usize))
            .map(|i| LeadSample {
                t_s: i as f64,
                x_m: v * i as f64,
                v_mps: v,
            })
            .collect();
        LeadTrajectory::new(samples, Provenance::Synthetic).unwrap()
    }

    /// Cruise at 10 m/s, brake at 2 m/s^2 to a stop, wait, pull away at 1 m/s^2.
    /// Samples come from integrating the kinematics on a 0.1 s clock.
    fn stop_and_go() -> LeadTrajectory {
        let dt = 0.1;
        let (mut t, mut x, mut v) = (0.0f64, 0.0f64, 10.0f64);
        let mut samples = vec![LeadSample { t_s: t, x_m: x, v_mps: v }];
        for k in 0..400 {
            let a = match k {
                0..=49 => 0.0,
                50..=99 => -2.0,
                100..=199 => 0.0,
                _ => 1.0,
            };
            let v_next = (v + a * dt).max(0.0);
            x += 0.5 * (v + v_next) * dt;
            v = v_next;
            t += dt;
            samples.push(LeadSample { t_s: t, x_m: x, v_mps: v });
        }
        LeadTrajectory::new(samples, Provenance::Synthetic).unwrap()
    }

    #[test]
    fn uniform_motion() {
        let lead = uniform(10.0, 30.0);
        assert_eq!(lead.lead_time_at(100.0).unwrap(), 10.0);
        assert_eq!(lead.lead_time_at(0.0).unwrap(), 0.0);
        assert!((lead.lead_time_at(105.0).unwrap() - 10.5).abs() < 1e-12);
        assert!(matches!(lead.lead_time_at(301.0), Err(Error::Extrapolation { .. })));
    }

    #[test]
    fn stop_period_returns_first_arrival() {
        let lead = stop_and_go();
        // Hand integration: 50 m of cruise in 5 s, then 25 m of braking in 5 s; the
        // stop at x = 75 m starts at t = 10 s and lasts 10 s.
        let stop_x = 75.0;
        let t_stop = lead.lead_time_at(stop_x).unwrap();
        assert!((t_stop - 10.0).abs() < 0.06, "{t_stop}");
        // One metre before the stop: s = 1 m left at 2 m/s^2 means v = 2 m/s, 1 s before.
        let before = lead.lead_time_at(stop_x - 1.0).unwrap();
        assert!((before - 9.0).abs() < 0.06, "{before}");
        assert!(before < t_stop);
    }

    #[test]
    fn time_monotone_in_position() {
        let lead = stop_and_go();
        let (a, b) = lead.span();
        let mut prev = f64::NEG_INFINITY;
        let mut x = a;
        while x <= b {
            let t = lead.lead_time_at(x).unwrap();
            assert!(t >= prev);
            prev = t;
            x += 0.37;
        }
    }

    #[test]
    fn sample_nodes_are_exact() {
        let lead = stop_and_go();
        for s in lead.samples().iter().step_by(7) {
            if s.v_mps > 1e-6 {
                assert_eq!(lead.lead_time_at(s.x_m).unwrap(), s.t_s);
            }
        }
    }

    #[test]
    fn inconsistent_samples_rejected() {
        let samples = vec![
            LeadSample { t_s: 0.0, x_m: 0.0, v_mps: 10.0 },
            LeadSample { t_s: 1.0, x_m: 20.0, v_mps: 10.0 },
        ];
        assert!(LeadTrajectory::new(samples, Provenance::Replayed).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let lead = stop_and_go();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lead.csv");
        lead.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t_s,x_m,v_mps\n"));
        let back = LeadTrajectory::read_csv(&path, Provenance::Replayed).unwrap();
        assert_eq!(back.samples(), lead.samples());
    }
}
