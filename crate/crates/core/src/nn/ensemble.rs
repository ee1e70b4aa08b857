use serde::{Deserialize, Serialize};

use super::features::{extract_features_ag, extract_features_aw, Variant};
use super::net::TerminalCostNet;
use crate::error::{Error, Result};
use crate::vehicle::EgoState;
use crate::world::Route;

/// Which terminal-cost model produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Ag,
    Aw,
    Exact,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Ag => "ag",
            Branch::Aw => "aw",
            Branch::Exact => "exact",
        }
    }
}

/// True iff the lead is ahead by at most `horizon_m` (inclusive).
#[inline]
pub fn detect_lead(ego_pos_m: f64, lead_pos_m: f64, horizon_m: f64) -> bool {
    let gap = lead_pos_m - ego_pos_m;
    (0.0..=horizon_m).contains(&gap)
}

/// Agnostic and aware nets that switch on lead detection.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub ag: TerminalCostNet,
    pub aw: TerminalCostNet,
}

impl Ensemble {
    pub fn new(ag: TerminalCostNet, aw: TerminalCostNet) -> Result<Self> {
        if ag.meta.variant != Variant::Ag || aw.meta.variant != Variant::Aw {
            return Err(Error::Schema {
                expected: "ag and aw nets".into(),
                found: format!("{} and {}", ag.meta.variant.as_str(), aw.meta.variant.as_str()),
            });
        }
        if ag.meta.gamma != aw.meta.gamma {
            return Err(Error::Config(format!(
                "nets trained for different gamma ({} vs {})",
                ag.meta.gamma, aw.meta.gamma
            )));
        }
        Ok(Self { ag, aw })
    }

    /// `lead` is `(d_lead, v_lead)` of a detected lead; `None` selects the
    /// agnostic net.
    pub fn terminal_cost(
        &self,
        route: &Route,
        state: &EgoState,
        step: usize,
        lead: Option<(f64, f64)>,
    ) -> Result<(f64, Branch)> {
        ensemble_terminal_cost(&self.ag, &self.aw, route, state, step, lead)
    }
}

pub fn ensemble_terminal_cost(
    ag: &TerminalCostNet,
    aw: &TerminalCostNet,
    route: &Route,
    state: &EgoState,
    step: usize,
    lead: Option<(f64, f64)>,
) -> Result<(f64, Branch)> {
    match lead {
        Some(obs) => Ok((aw.forward(&extract_features_aw(route, state, step, Some(obs)))?, Branch::Aw)),
        None => Ok((ag.forward(&extract_features_ag(route, state, step))?, Branch::Ag)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::features::SCHEMA_VERSION;
    use crate::nn::net::NetMeta;
    use crate::world::build_scenario;

    fn constant(variant: Variant, value: f64) -> TerminalCostNet {
        let n = variant.inputs();
        let meta = NetMeta {
            variant,
            schema_version: SCHEMA_VERSION,
            feature_names: variant.names().iter().map(|s| s.to_string()).collect(),
            gamma: 0.8,
            corpus_hash: String::new(),
            seed: 0,
        };
        let mut net = TerminalCostNet::zeros(&[n, 1], meta);
        net.layers[0].b = vec![value];
        net
    }

    #[test]
    fn detection_is_inclusive() {
        assert!(detect_lead(0.0, 150.0, 200.0));
        assert!(!detect_lead(0.0, 250.0, 200.0));
        assert!(detect_lead(100.0, 300.0, 200.0));
        assert!(!detect_lead(100.0, 90.0, 200.0));
    }

    #[test]
    fn branch_follows_detection() {
        let e = Ensemble::new(constant(Variant::Ag, 1.0), constant(Variant::Aw, 2.0)).unwrap();
        let r = build_scenario("route1").unwrap().route;
        let st = EgoState::new(10.0, 0.25, 30.0);
        assert_eq!(e.terminal_cost(&r, &st, 10, Some((150.0, 8.0))).unwrap(), (2.0, Branch::Aw));
        assert_eq!(e.terminal_cost(&r, &st, 10, None).unwrap(), (1.0, Branch::Ag));
        assert!(Ensemble::new(constant(Variant::Aw, 1.0), constant(Variant::Aw, 2.0)).is_err());
    }
}
