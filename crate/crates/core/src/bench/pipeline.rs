use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::scenarios::generate_scenarios;
use crate::dp::{
    backward_induction, extract_trajectory, generate_lead, load_solution, save_solution, DpSolution, LeadConstraint,
    Problem, Trajectory,
};
use crate::error::{Error, Result};
use crate::nn::{build_dataset, train, DatasetSource, TrainReport, Variant};
use crate::util::sha256_hex;
use crate::world::{build_scenario, fmt_f64, LeadSpec, LeadTrajectory, Provenance, Route, Scenario};

/// Free: jams removed and no lead. Traffic: jams and the lead gap active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusVariant {
    Free,
    Traffic,
}

impl CorpusVariant {
    pub const ALL: [CorpusVariant; 2] = [CorpusVariant::Free, CorpusVariant::Traffic];

    pub fn as_str(self) -> &'static str {
        match self {
            CorpusVariant::Free => "free",
            CorpusVariant::Traffic => "traffic",
        }
    }

    /// Corpus variant each net is trained on.
    pub fn for_net(variant: Variant) -> Self {
        match variant {
            Variant::Ag => CorpusVariant::Free,
            Variant::Aw => CorpusVariant::Traffic,
        }
    }
}

/// A scenario with its lead trajectory resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub scenario: Scenario,
    pub lead: Option<LeadTrajectory>,
}

impl World {
    pub fn resolve(scenario: Scenario, cfg: &PipelineConfig) -> Result<World> {
        let lead = match &scenario.lead {
            None => None,
            Some(LeadSpec::Dp { gamma }) => Some(generate_lead(
                &scenario.route,
                &cfg.vehicle,
                &cfg.grid,
                &cfg.penalty,
                *gamma,
                scenario.ego.initial_soc,
            )?),
            Some(LeadSpec::Csv { .. }) => {
                let path = scenario.lead_csv_path().expect("csv lead");
                Some(LeadTrajectory::read_csv(&path, Provenance::Replayed)?)
            }
        };
        Ok(World { scenario, lead })
    }

    pub fn name(&self) -> &str {
        self.scenario.name()
    }

    /// Route and lead seen by one corpus variant.
    pub fn variant(&self, v: CorpusVariant) -> (Route, Option<&LeadTrajectory>) {
        match v {
            CorpusVariant::Free => (self.scenario.route.without_jams(), None),
            CorpusVariant::Traffic => (self.scenario.route.clone(), self.lead.as_ref()),
        }
    }

    /// Digest of everything the value function of `v` depends on.
    pub fn variant_hash(&self, v: CorpusVariant, cfg: &PipelineConfig) -> String {
        let mut text = String::new();
        text.push_str(&self.scenario.route.fingerprint());
        text.push_str(&format!("{:?}", self.scenario.ego));
        text.push_str(v.as_str());
        text.push_str(&toml::to_string(&cfg.grid).unwrap_or_default());
        text.push_str(&toml::to_string(&cfg.vehicle).unwrap_or_default());
        text.push_str(&toml::to_string(&cfg.penalty).unwrap_or_default());
        text.push_str(&fmt_f64(cfg.gamma));
        if v == CorpusVariant::Traffic {
            text.push_str(&fmt_f64(cfg.mpc.t_gap_s));
            if let Some(l) = &self.lead {
                for s in l.samples() {
                    text.push_str(&format!("{},{},{};", fmt_f64(s.t_s), fmt_f64(s.x_m), fmt_f64(s.v_mps)));
                }
            }
        }
        sha256_hex(text.as_bytes())
    }

    /// Full-route solution and optimal trajectory of variant `v`.
    pub fn solve(&self, v: CorpusVariant, cfg: &PipelineConfig) -> Result<(DpSolution, Trajectory)> {
        let (route, lead) = self.variant(v);
        let lc = lead.map(|l| LeadConstraint::new(l, cfg.mpc.t_gap_s));
        let x0 = self.scenario.ego.state();
        let grid = cfg.grid.build(&route, &x0, lc)?;
        let problem = Problem::new(&route, &cfg.vehicle, cfg.gamma, cfg.grid.controls()).with_lead(lc);
        let sol = backward_induction(&problem, &grid, &cfg.penalty, &self.variant_hash(v, cfg))?;
        let traj = extract_trajectory(&problem, &sol, &x0)?;
        Ok((sol, traj))
    }

    /// Optimal trajectory of a stored solution.
    pub fn trajectory(&self, v: CorpusVariant, sol: &DpSolution, cfg: &PipelineConfig) -> Result<Trajectory> {
        let (route, lead) = self.variant(v);
        let lc = lead.map(|l| LeadConstraint::new(l, cfg.mpc.t_gap_s));
        let problem = Problem::new(&route, &cfg.vehicle, cfg.gamma, sol.policy.controls.clone()).with_lead(lc);
        extract_trajectory(&problem, sol, &self.scenario.ego.state())
    }
}

/// Corpus scenarios in a fixed order: generated, benchmark, then files.
pub fn corpus_scenarios(cfg: &PipelineConfig) -> Result<Vec<Scenario>> {
    let mut out = generate_scenarios(cfg.corpus.synthetic, cfg.seed)?;
    if cfg.corpus.include_benchmark {
        for id in &cfg.benchmark.routes {
            out.push(build_scenario(id)?);
        }
    }
    for f in &cfg.corpus.scenario_files {
        out.push(Scenario::load(&cfg.base_dir.join(f))?);
    }
    let mut names: Vec<&str> = out.iter().map(|s| s.name()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("corpus scenario names must be unique".into()));
    }
    Ok(out)
}

/// Output locations under the `--out` directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn dir(&self, name: &str) -> Result<PathBuf> {
        let d = self.root.join(name);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        Ok(d)
    }

    pub fn corpus(&self) -> Result<PathBuf> {
        self.dir("corpus")
    }

    pub fn vf(&self) -> Result<PathBuf> {
        self.dir("vf")
    }

    pub fn nets(&self) -> Result<PathBuf> {
        self.dir("nets")
    }

    pub fn bench(&self) -> Result<PathBuf> {
        self.dir("benchmark")
    }

    pub fn scenarios(&self) -> Result<PathBuf> {
        self.dir("scenarios")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("corpus").join("manifest.json")
    }

    pub fn net(&self, v: Variant) -> PathBuf {
        self.root.join("nets").join(format!("{}.nn", v.as_str()))
    }

    pub fn value_function(&self, name: &str, v: CorpusVariant) -> PathBuf {
        self.root.join("vf").join(format!("{name}.{}.vf", v.as_str()))
    }
}

/// One solved (scenario, variant) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub scenario: String,
    pub variant: CorpusVariant,
    /// Relative to the output root.
    pub scenario_file: String,
    pub value_function: Option<String>,
    pub status: String,
    pub j0: Option<f64>,
    pub efc_g: Option<f64>,
    pub travel_time_s: Option<f64>,
    pub final_soc_pct: Option<f64>,
    pub vf_sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

/// Writes each scenario as `<name>.toml` into `dir`; leads that come from
/// a solve are stored next to it as `<name>.lead.csv` and referenced from
/// the file, so the written scenario replays without re-solving.
pub fn write_world(world: &World, dir: &Path) -> Result<PathBuf> {
    let mut sc = world.scenario.clone();
    if let Some(lead) = &world.lead {
        let csv = format!("{}.lead.csv", world.name());
        lead.write_csv(&dir.join(&csv))?;
        sc.lead = Some(LeadSpec::Csv { csv: PathBuf::from(csv) });
    }
    let path = dir.join(format!("{}.toml", world.name()));
    sc.save(&path)?;
    Ok(path)
}

/// `gen-scenarios`: the synthetic corpus as scenario files.
pub fn cmd_gen_scenarios(cfg: &PipelineConfig, layout: &Layout) -> Result<Vec<PathBuf>> {
    let dir = layout.scenarios()?;
    generate_scenarios(cfg.corpus.synthetic, cfg.seed)?
        .into_iter()
        .map(|sc| {
            let path = dir.join(format!("{}.toml", sc.name()));
            sc.save(&path)?;
            Ok(path)
        })
        .collect()
}

/// `solve-dp`: value functions of every corpus scenario in both variants,
/// a manifest and a summary CSV. Fails only if every solve fails.
pub fn cmd_solve_dp(cfg: &PipelineConfig, layout: &Layout) -> Result<Manifest> {
    let scenarios = corpus_scenarios(cfg)?;
    let corpus_dir = layout.corpus()?;
    layout.vf()?;
    let results: Vec<Vec<ManifestEntry>> = scenarios
        .into_par_iter()
        .map(|sc| solve_one(sc, cfg, layout, &corpus_dir))
        .collect::<Result<_>>()?;
    let entries: Vec<ManifestEntry> = results.into_iter().flatten().collect();
    let manifest = Manifest {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        entries,
    };
    write_json(&layout.manifest(), &manifest)?;
    write_summary(&manifest, &layout.root.join("dp_summary.csv"))?;
    if manifest.entries.iter().all(|e| e.status != "ok") {
        return Err(Error::NoSolution("every corpus solve failed".into()));
    }
    Ok(manifest)
}

fn solve_one(sc: Scenario, cfg: &PipelineConfig, layout: &Layout, corpus_dir: &Path) -> Result<Vec<ManifestEntry>> {
    let name = sc.name().to_string();
    let failed = |variant, file: String, msg: String| ManifestEntry {
        scenario: name.clone(),
        variant,
        scenario_file: file,
        value_function: None,
        status: format!("failed: {msg}"),
        j0: None,
        efc_g: None,
        travel_time_s: None,
        final_soc_pct: None,
        vf_sha256: None,
    };
    let world = match World::resolve(sc.clone(), cfg) {
        Ok(w) => w,
        Err(e) => {
            let file = format!("corpus/{name}.toml");
            sc.save(&corpus_dir.join(format!("{name}.toml")))?;
            return Ok(CorpusVariant::ALL.iter().map(|&v| failed(v, file.clone(), format!("lead: {e}"))).collect());
        }
    };
    write_world(&world, corpus_dir)?;
    let file = format!("corpus/{name}.toml");
    let mut out = Vec::new();
    for v in CorpusVariant::ALL {
        match world.solve(v, cfg) {
            Ok((sol, traj)) => {
                let path = layout.value_function(&name, v);
                save_solution(&sol, &path)?;
                let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
                let m = traj.metrics();
                out.push(ManifestEntry {
                    scenario: name.clone(),
                    variant: v,
                    scenario_file: file.clone(),
                    value_function: Some(format!("vf/{name}.{}.vf", v.as_str())),
                    status: "ok".into(),
                    j0: Some(sol.initial_value(&world.scenario.ego.state())?),
                    efc_g: Some(m.efc_g),
                    travel_time_s: Some(m.travel_time_s),
                    final_soc_pct: Some(m.final_soc_pct),
                    vf_sha256: Some(sha256_hex(&bytes)),
                });
            }
            Err(e) => out.push(failed(v, file.clone(), e.to_string())),
        }
    }
    Ok(out)
}

fn write_summary(m: &Manifest, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["scenario", "variant", "status", "j0", "efc_g", "travel_time_s", "final_soc_pct", "vf_sha256"])?;
    let f = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for e in &m.entries {
        w.write_record([
            e.scenario.clone(),
            e.variant.as_str().to_string(),
            e.status.clone(),
            f(e.j0),
            f(e.efc_g),
            f(e.travel_time_s),
            f(e.final_soc_pct),
            e.vf_sha256.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_manifest(layout: &Layout) -> Result<Manifest> {
    let path = layout.manifest();
    if !path.is_file() {
        return Err(Error::Config(format!("{} not found; run solve-dp first", path.display())));
    }
    read_json(&path)
}

/// Training outcome as written to `nets/<variant>_report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub variant: Variant,
    pub scenarios: Vec<String>,
    pub rows: usize,
    pub corpus_hash: String,
    pub net_sha256: String,
    pub n_train: usize,
    pub n_val: usize,
    pub initial_train_mse: f64,
    pub final_train_mse: f64,
    pub final_val_mse: f64,
    pub val_relative_rmse: f64,
}

/// `train --variant`: dataset from the stored value functions, then the net.
pub fn cmd_train(cfg: &PipelineConfig, layout: &Layout, variant: Variant) -> Result<TrainSummary> {
    let manifest = load_manifest(layout)?;
    let want = CorpusVariant::for_net(variant);
    let mut worlds = Vec::new();
    for e in manifest.entries.iter().filter(|e| e.variant == want && e.status == "ok") {
        let sc = Scenario::load(&layout.root.join(&e.scenario_file))?;
        let world = World::resolve(sc, cfg)?;
        let vf_path = layout.root.join(e.value_function.as_deref().expect("ok entries have a file"));
        let sol = load_solution(&vf_path)?;
        if sol.value.gamma != cfg.gamma {
            return Err(Error::Config(format!(
                "{} was solved with gamma {}, config has {}",
                vf_path.display(),
                sol.value.gamma,
                cfg.gamma
            )));
        }
        worlds.push((world, sol));
    }
    if worlds.is_empty() {
        return Err(Error::Config(format!("no solved {} value functions in the manifest", want.as_str())));
    }
    let routes: Vec<(Route, Option<&LeadTrajectory>)> = worlds.iter().map(|(w, _)| w.variant(want)).collect();
    let sources: Vec<DatasetSource> = worlds
        .iter()
        .zip(&routes)
        .map(|((w, sol), (route, lead))| DatasetSource {
            name: w.name(),
            route,
            solution: sol,
            lead: *lead,
        })
        .collect();
    let budget = match variant {
        Variant::Ag => cfg.corpus.ag_budget,
        Variant::Aw => cfg.corpus.aw_budget,
    };
    let data = build_dataset(&sources, variant, budget, cfg.seed)?;
    let dir = layout.nets()?;
    let tag = variant.as_str();
    data.write_csv(&dir.join(format!("{tag}_dataset.csv")))?;
    let (net, report): (_, TrainReport) = train(&data, &cfg.train, cfg.gamma)?;
    net.save(&layout.net(variant))?;
    report.write_loss_csv(&dir.join(format!("{tag}_loss.csv")))?;
    let last = report.epochs.last();
    let summary = TrainSummary {
        variant,
        scenarios: worlds.iter().map(|(w, _)| w.name().to_string()).collect(),
        rows: data.len(),
        corpus_hash: data.corpus_hash.clone(),
        net_sha256: net.digest(),
        n_train: report.n_train,
        n_val: report.n_val,
        initial_train_mse: report.initial_train_mse,
        final_train_mse: last.map_or(f64::NAN, |e| e.train_mse),
        final_val_mse: last.map_or(f64::NAN, |e| e.val_mse),
        val_relative_rmse: report.val_relative_rmse,
    };
    write_json(&dir.join(format!("{tag}_report.json")), &summary)?;
    Ok(summary)
}

pub fn load_train_summary(layout: &Layout, variant: Variant) -> Result<TrainSummary> {
    read_json(&layout.root.join("nets").join(format!("{}_report.json", variant.as_str())))
}
