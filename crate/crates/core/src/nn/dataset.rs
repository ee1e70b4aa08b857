use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::features::{extract_features_ag, extract_features_aw, Variant};
use crate::dp::DpSolution;
use crate::error::{Error, Result};
use crate::util::sha256_hex;
use crate::world::{fmt_f64, LeadTrajectory, Route};

/// Feature rows with cost-to-go labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub variant: Variant,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
    /// Scenario name and distance step of each row.
    pub sources: Vec<(String, usize)>,
    pub corpus_hash: String,
}

/// One solved scenario offered to [`build_dataset`].
pub struct DatasetSource<'a> {
    pub name: &'a str,
    pub route: &'a Route,
    pub solution: &'a DpSolution,
    pub lead: Option<&'a LeadTrajectory>,
}

impl Dataset {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            features: Vec::new(),
            labels: Vec::new(),
            sources: Vec::new(),
            corpus_hash: String::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn push(&mut self, x: Vec<f64>, label: f64, scenario: &str, step: usize) {
        self.features.push(x);
        self.labels.push(label);
        self.sources.push((scenario.to_string(), step));
    }

    /// CSV with the feature names as header, then `label,scenario,step`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = self.variant.names().iter().map(|s| s.to_string()).collect();
        header.extend(["label", "scenario", "step"].map(String::from));
        w.write_record(&header)?;
        for ((x, y), (name, step)) in self.features.iter().zip(&self.labels).zip(&self.sources) {
            let mut row: Vec<String> = x.iter().map(|v| fmt_f64(*v)).collect();
            row.push(fmt_f64(*y));
            row.push(name.clone());
            row.push(step.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Lead position and speed relative to the ego at `(x, t)`.
pub fn lead_observation(lead: &LeadTrajectory, x: f64, t: f64) -> (f64, f64) {
    let (xl, vl) = lead.state_at(t);
    ((xl - x).max(0.0), vl)
}

/// Lead rows farther ahead than this are dropped from aw datasets.
pub const AW_MAX_LEAD_DISTANCE_M: f64 = 400.0;

/// Samples feasible grid nodes of every source, at most `budget` rows in
/// total split evenly across sources, labelled with the node's value.
pub fn build_dataset(sources: &[DatasetSource], variant: Variant, budget: usize, seed: u64) -> Result<Dataset> {
    if sources.is_empty() {
        return Err(Error::Config("dataset needs at least one solved scenario".into()));
    }
    let mut ds = Dataset::new(variant);
    let per_source = budget.div_ceil(sources.len());
    let mut hash_input = format!("{}:{budget}:{seed}", variant.as_str());
    for (k, src) in sources.iter().enumerate() {
        if variant == Variant::Aw && src.lead.is_none() {
            return Err(Error::Schema {
                expected: "a lead trajectory for every aw source".into(),
                found: format!("none for `{}`", src.name),
            });
        }
        hash_input.push_str(&src.solution.value.scenario_hash);
        let vf = &src.solution.value;
        let grid = &vf.grid;
        let mut candidates = Vec::new();
        for step in grid.first_step..=grid.last_step() {
            let layer = grid.layer(step);
            let x = src.route.position(step);
            for (idx, j) in vf.layer_values(step).iter().enumerate() {
                if !j.is_finite() {
                    continue;
                }
                if variant == Variant::Aw {
                    let t = layer.t.value(idx % layer.t.len);
                    let (d, _) = lead_observation(src.lead.expect("checked above"), x, t);
                    if d > AW_MAX_LEAD_DISTANCE_M {
                        continue;
                    }
                }
                candidates.push((step, idx));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        let mut picks: Vec<usize> = if candidates.len() > per_source {
            sample(&mut rng, candidates.len(), per_source).into_vec()
        } else {
            (0..candidates.len()).collect()
        };
        picks.sort_unstable();
        for p in picks {
            let (step, idx) = candidates[p];
            let state = grid.layer(step).state(idx);
            let label = vf.node_value(step, idx);
            let x = match variant {
                Variant::Ag => extract_features_ag(src.route, &state, step).to_vec(),
                Variant::Aw => {
                    let obs = lead_observation(src.lead.expect("checked above"), src.route.position(step), state.time_s);
                    extract_features_aw(src.route, &state, step, Some(obs)).to_vec()
                }
            };
            ds.push(x, label, src.name, step);
        }
    }
    ds.corpus_hash = sha256_hex(hash_input.as_bytes());
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{backward_induction, GridSpec, Problem, TerminalPenalty};
    use crate::vehicle::{EgoState, VehicleParams};
    use crate::world::LimitChange;

    #[test]
    fn counts_every_feasible_node_without_budget() {
        let r = Route::new("d", 100.0, 10.0, vec![LimitChange { start_m: 0.0, limit_mps: 10.0 }], vec![], vec![])
            .unwrap();
        let p = VehicleParams::default();
        let spec = GridSpec::default();
        let x0 = EgoState::new(0.0, 0.25, 0.0);
        let grid = spec.build(&r, &x0, None).unwrap();
        let prob = Problem::new(&r, &p, 0.8, spec.controls());
        let sol = backward_induction(&prob, &grid, &TerminalPenalty::default(), "h").unwrap();
        let src = DatasetSource { name: "d", route: &r, solution: &sol, lead: None };
        let ds = build_dataset(&[src], Variant::Ag, usize::MAX, 1).unwrap();
        let feasible: usize = sol.value.feasible_counts().iter().sum();
        assert_eq!(ds.len(), feasible);
        assert!(ds.labels.iter().all(|y| y.is_finite() && *y >= 0.0));
        assert!(ds.features.iter().all(|x| x.len() == 13));
        let src = DatasetSource { name: "d", route: &r, solution: &sol, lead: None };
        assert!(matches!(build_dataset(&[src], Variant::Aw, 10, 1), Err(Error::Schema { .. })));
    }
}
