//! Scenario definitions and the text scenario file.
//!
//! ```toml
//! [route]
//! name = "route1"
//! length_m = 2000.0
//! ds_m = 10.0
//! speed_limits = [[0.0, 17.0], [1200.0, 14.0]]   # (start m, limit m/s)
//!
//! [light.0]
//! position_m = 200.0
//! cycle_s = 60.0
//! green_s = 30.0
//! offset_s = 10.0
//!
//! [jam.0]
//! x_start_m = 1500.0
//! x_end_m = 2000.0
//! t_start_s = 0.0
//! t_end_s = 1000.0
//! density_veh_per_km = 100.0
//! greenshield_c1 = 0.1
//! greenshield_c2 = 20.0
//!
//! [lead]
//! source = "dp"        # or "csv" with `csv = "lead.csv"`
//! gamma = 0.5
//!
//! [ego]
//! start_time_s = 4.0
//! initial_soc = 0.25
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::jam::TrafficJam;
use super::route::{LimitChange, Route};
use super::signal::TrafficLight;
use crate::error::{Error, Result};
use crate::vehicle::EgoState;

/// Where the lead vehicle's trajectory comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum LeadSpec {
    /// Solve the full-route DP for the lead on the same route, jams included,
    /// starting from rest at x = 0, t = 0.
    Dp { gamma: f64 },
    /// Replay a `t_s,x_m,v_mps` CSV, relative to the scenario file.
    Csv { csv: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EgoStart {
    pub start_time_s: f64,
    pub initial_v_mps: f64,
    pub initial_soc: f64,
}

impl Default for EgoStart {
    fn default() -> Self {
        Self {
            start_time_s: 0.0,
            initial_v_mps: 0.0,
            initial_soc: 0.25,
        }
    }
}

impl EgoStart {
    pub fn state(&self) -> EgoState {
        EgoState::new(self.initial_v_mps, self.initial_soc, self.start_time_s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub route: Route,
    pub lead: Option<LeadSpec>,
    pub ego: EgoStart,
    /// Directory relative paths in the file resolve against.
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RouteSection {
    name: String,
    length_m: f64,
    #[serde(default = "default_ds")]
    ds_m: f64,
    #[serde(default)]
    min_speed_mps: f64,
    speed_limits: Vec<(f64, f64)>,
}

fn default_ds() -> f64 {
    10.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    route: RouteSection,
    #[serde(default)]
    light: BTreeMap<String, TrafficLight>,
    #[serde(default)]
    jam: BTreeMap<String, TrafficJam>,
    #[serde(default)]
    lead: Option<LeadSpec>,
    #[serde(default)]
    ego: EgoStart,
}

impl Scenario {
    pub fn name(&self) -> &str {
        &self.route.name
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Scenario> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("scenario: {e}")))?;
        let limits = file
            .route
            .speed_limits
            .iter()
            .map(|&(start_m, limit_mps)| LimitChange { start_m, limit_mps })
            .collect();
        let route = Route::new(
            file.route.name,
            file.route.length_m,
            file.route.ds_m,
            limits,
            file.light.into_values().collect(),
            file.jam.into_values().collect(),
        )?
        .with_min_speed(file.route.min_speed_mps);
        if !(0.0..=1.0).contains(&file.ego.initial_soc) || file.ego.initial_v_mps < 0.0 {
            return Err(Error::Config("ego initial state out of range".into()));
        }
        Ok(Scenario {
            route,
            lead: file.lead,
            ego: file.ego,
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Scenario::from_toml_str(&text, base)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        let file = ScenarioFile {
            route: RouteSection {
                name: self.route.name.clone(),
                length_m: self.route.length_m,
                ds_m: self.route.ds_m,
                min_speed_mps: self.route.min_speed_mps,
                speed_limits: self
                    .route
                    .speed_limits
                    .iter()
                    .map(|l| (l.start_m, l.limit_mps))
                    .collect(),
            },
            light: self
                .route
                .lights
                .iter()
                .enumerate()
                .map(|(i, l)| (i.to_string(), *l))
                .collect(),
            jam: self
                .route
                .jams
                .iter()
                .enumerate()
                .map(|(i, j)| (i.to_string(), *j))
                .collect(),
            lead: self.lead.clone(),
            ego: self.ego,
        };
        toml::to_string(&file).expect("scenario serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }

    pub fn lead_csv_path(&self) -> Option<PathBuf> {
        match &self.lead {
            Some(LeadSpec::Csv { csv }) => Some(self.base_dir.join(csv)),
            _ => None,
        }
    }
}

fn light(position_m: f64, cycle_s: f64, green_s: f64, offset_s: f64) -> TrafficLight {
    TrafficLight {
        position_m,
        cycle_s,
        green_s,
        offset_s,
    }
}

/// Jam whose Greenshield speed is 10 m/s (c2 = 20 m/s, c1 = 0.1, 100 veh/km).
fn ten_mps_jam(x_start_m: f64, x_end_m: f64, t_end_s: f64) -> TrafficJam {
    TrafficJam {
        x_start_m,
        x_end_m,
        t_start_s: 0.0,
        t_end_s,
        density_veh_per_km: 100.0,
        greenshield_c1: 0.1,
        greenshield_c2: 20.0,
    }
}

/// The two benchmark routes. Geometry and signal timing are documented
/// defaults: an early light near 200 m and congestion over the last quarter.
pub fn build_scenario(id: &str) -> Result<Scenario> {
    let (route, ego) = match id {
        "route1" => (
            Route::new(
                "route1",
                2000.0,
                10.0,
                vec![
                    LimitChange { start_m: 0.0, limit_mps: 17.0 },
                    LimitChange { start_m: 1200.0, limit_mps: 15.0 },
                ],
                vec![light(200.0, 60.0, 30.0, 10.0), light(1000.0, 60.0, 30.0, 40.0)],
                vec![ten_mps_jam(1500.0, 2000.0, 1000.0)],
            )?,
            EgoStart {
                start_time_s: 4.0,
                ..EgoStart::default()
            },
        ),
        "route2" => (
            Route::new(
                "route2",
                5000.0,
                10.0,
                vec![
                    LimitChange { start_m: 0.0, limit_mps: 17.0 },
                    LimitChange { start_m: 2000.0, limit_mps: 15.0 },
                    LimitChange { start_m: 3000.0, limit_mps: 17.0 },
                ],
                vec![
                    light(200.0, 60.0, 30.0, 10.0),
                    light(1300.0, 70.0, 35.0, 20.0),
                    light(2400.0, 60.0, 30.0, 0.0),
                    light(3200.0, 80.0, 40.0, 30.0),
                ],
                vec![ten_mps_jam(3750.0, 5000.0, 2000.0)],
            )?,
            EgoStart {
                start_time_s: 4.0,
                ..EgoStart::default()
            },
        ),
        other => return Err(Error::UnknownScenario(other.to_string())),
    };
    Ok(Scenario {
        route,
        lead: Some(LeadSpec::Dp { gamma: 0.5 }),
        ego,
        base_dir: PathBuf::from("."),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_routes() {
        let r1 = build_scenario("route1").unwrap();
        assert_eq!(r1.route.length_m, 2000.0);
        assert_eq!(r1.route.lights.len(), 2);
        assert_eq!(r1.route.jam_speeds(), &[10.0]);
        let r2 = build_scenario("route2").unwrap();
        assert_eq!(r2.route.length_m, 5000.0);
        assert_eq!(r2.route.lights.len(), 4);
        let jam1 = r1.route.jams[0].x_end_m - r1.route.jams[0].x_start_m;
        let jam2 = r2.route.jams[0].x_end_m - r2.route.jams[0].x_start_m;
        assert!(jam2 > jam1);
        assert!(matches!(build_scenario("route9"), Err(Error::UnknownScenario(_))));
    }

    #[test]
    fn file_round_trip() {
        let s = build_scenario("route2").unwrap();
        let text = s.to_toml_string();
        assert!(text.contains("[light.0]") && text.contains("[jam.0]") && text.contains("[lead]"));
        let back = Scenario::from_toml_str(&text, Path::new(".")).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn malformed_file_is_config_error() {
        let text = "[route]\nname = \"x\"\nlength_m = 100.0\nspeed_limits = [[0.0, 10.0]]\n[light.0]\nposition_m = 50.0\ncycle_s = 10.0\ngreen_s = 20.0\n";
        assert!(matches!(Scenario::from_toml_str(text, Path::new(".")), Err(Error::Config(_))));
    }
}
