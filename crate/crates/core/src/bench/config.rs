use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dp::{GridSpec, TerminalPenalty};
use crate::error::{Error, Result};
use crate::mpc::MpcConfig;
use crate::nn::TrainConfig;
use crate::util::sha256_hex;
use crate::vehicle::VehicleParams;

/// Which scenarios feed the value-function corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    /// Generated route variants.
    pub synthetic: usize,
    /// Add the built-in benchmark routes to the corpus.
    pub include_benchmark: bool,
    /// Extra scenario files, relative to the config file.
    pub scenario_files: Vec<PathBuf>,
    /// Row budgets of the two training sets.
    pub ag_budget: usize,
    pub aw_budget: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            synthetic: 8,
            include_benchmark: true,
            scenario_files: Vec::new(),
            ag_budget: 40_000,
            aw_budget: 40_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    /// Built-in scenario ids.
    pub routes: Vec<String>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            routes: vec!["route1".into(), "route2".into()],
        }
    }
}

/// Everything the pipeline needs. `seed` and `gamma` are authoritative:
/// they overwrite the training seed and the controller gamma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub gamma: f64,
    pub corpus: CorpusConfig,
    pub benchmark: BenchmarkConfig,
    pub grid: GridSpec,
    pub penalty: TerminalPenalty,
    pub vehicle: VehicleParams,
    pub train: TrainConfig,
    pub mpc: MpcConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let mut cfg = Self {
            seed: 7,
            gamma: 0.8,
            corpus: CorpusConfig::default(),
            benchmark: BenchmarkConfig::default(),
            grid: GridSpec::default(),
            penalty: TerminalPenalty::default(),
            vehicle: VehicleParams::default(),
            train: TrainConfig::default(),
            mpc: MpcConfig::default(),
            base_dir: PathBuf::from("."),
        };
        cfg.sync();
        cfg
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.sync();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text, path.parent().unwrap_or_else(|| Path::new(".")))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.sync();
        self
    }

    fn sync(&mut self) {
        self.train.seed = self.seed;
        self.mpc.gamma = self.gamma;
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.vehicle.validate()?;
        self.mpc.validate()?;
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} not in [0, 1]", self.gamma)));
        }
        for f in &self.corpus.scenario_files {
            let p = self.base_dir.join(f);
            if !p.is_file() {
                return Err(Error::Config(format!("scenario file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Digest of the effective configuration.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_toml_string().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = PipelineConfig::default();
        let back = PipelineConfig::from_toml_str(&cfg.to_toml_string(), Path::new(".")).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn seed_and_gamma_propagate() {
        let cfg = PipelineConfig::from_toml_str("seed = 3\ngamma = 0.6\n[train]\nseed = 99\n", Path::new(".")).unwrap();
        assert_eq!(cfg.train.seed, 3);
        assert_eq!(cfg.mpc.gamma, 0.6);
        assert_eq!(cfg.with_seed(5).train.seed, 5);
    }

    #[test]
    fn missing_scenario_file_names_the_path() {
        let err = PipelineConfig::from_toml_str("[corpus]\nscenario_files = [\"nope.toml\"]\n", Path::new("/tmp/x"))
            .unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("/tmp/x/nope.toml")), "{err}");
    }

    #[test]
    fn unknown_key_is_config_error() {
        assert!(matches!(PipelineConfig::from_toml_str("sead = 1\n", Path::new(".")), Err(Error::Config(_))));
    }
}
