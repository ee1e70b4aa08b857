//! Neural terminal-cost models trained on value functions.

mod dataset;
mod ensemble;
mod features;
mod net;
mod train;

pub use dataset::{build_dataset, lead_observation, Dataset, DatasetSource, AW_MAX_LEAD_DISTANCE_M};
pub use ensemble::{detect_lead, ensemble_terminal_cost, Branch, Ensemble};
pub use features::{
    extract_features_ag, extract_features_aw, lead_features, Variant, AG_INPUTS, AG_NAMES, AW_EXTRA_NAMES,
    AW_INPUTS, NO_LEAD_DISTANCE_M, SCHEMA_VERSION, TFC_COMB_S, T_MAX_S,
};
pub use net::{Dense, NetMeta, TerminalCostNet};
pub use train::{train, EpochLoss, TrainConfig, TrainReport};
