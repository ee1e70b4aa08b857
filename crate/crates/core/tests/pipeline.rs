use std::path::{Path, PathBuf};

use ecodrive::bench::{
    cmd_solve_dp, cmd_train, load_manifest, percent_delta, write_plot_series, CorpusVariant, Layout, PipelineConfig,
    World, PLOT_COLUMNS,
};
use ecodrive::dp::load_solution;
use ecodrive::nn::{TerminalCostNet, Variant, AG_INPUTS, AW_INPUTS};
use ecodrive::world::Scenario;
use ecodrive::Error;

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

fn small_config() -> PipelineConfig {
    PipelineConfig::load(&data_dir().join("small.toml")).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, usize) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    (header, r.records().count())
}

#[test]
fn percent_delta_matches_hand_values() {
    assert_eq!(percent_delta(110.0, 100.0), 10.0);
    assert_eq!(percent_delta(45.0, 50.0), -10.0);
    assert!((percent_delta(19.08, 19.42) - (-1.750_772_399_588_053)).abs() < 1e-12);
}

#[test]
fn solve_dp_writes_one_file_per_scenario_and_variant() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let layout = Layout::new(dir.path());
    let manifest = cmd_solve_dp(&cfg, &layout).unwrap();

    assert_eq!(manifest.entries.len(), 4);
    assert!(manifest.entries.iter().all(|e| e.status == "ok"), "{:?}", manifest.entries);
    assert_eq!(std::fs::read_dir(dir.path().join("vf")).unwrap().count(), 4);
    assert_eq!(load_manifest(&layout).unwrap(), manifest);
    assert_eq!(manifest.config_hash, cfg.hash());

    let (_, summary_rows) = csv_rows(&dir.path().join("dp_summary.csv"));
    assert_eq!(summary_rows, 4);

    for e in &manifest.entries {
        let sol = load_solution(&dir.path().join(e.value_function.as_ref().unwrap())).unwrap();
        assert_eq!(sol.value.gamma, cfg.gamma);
    }
}

#[test]
fn solve_dp_is_reproducible() {
    let cfg = small_config();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = cmd_solve_dp(&cfg, &Layout::new(a.path())).unwrap();
    let mb = cmd_solve_dp(&cfg, &Layout::new(b.path())).unwrap();
    assert_eq!(ma, mb);
}

#[test]
fn train_outputs_have_expected_shapes() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let layout = Layout::new(dir.path());
    cmd_solve_dp(&cfg, &layout).unwrap();

    for (variant, inputs) in [(Variant::Ag, AG_INPUTS), (Variant::Aw, AW_INPUTS)] {
        let summary = cmd_train(&cfg, &layout, variant).unwrap();
        let tag = variant.as_str();
        assert_eq!(summary.rows, 600);
        assert_eq!(summary.n_train + summary.n_val, 600);

        let (header, rows) = csv_rows(&dir.path().join(format!("nets/{tag}_dataset.csv")));
        assert_eq!(header.len(), inputs + 3);
        assert_eq!(rows, 600);

        let (_, epochs) = csv_rows(&dir.path().join(format!("nets/{tag}_loss.csv")));
        assert_eq!(epochs, cfg.train.epochs);

        let net = TerminalCostNet::load(&layout.net(variant)).unwrap();
        assert_eq!(net.n_inputs(), inputs);
        assert_eq!(net.digest(), summary.net_sha256);
    }
    assert_eq!((AG_INPUTS, AW_INPUTS), (13, 16));
}

#[test]
fn train_without_manifest_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_train(&small_config(), &Layout::new(dir.path()), Variant::Ag).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn corrupted_value_function_is_rejected() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let layout = Layout::new(dir.path());
    cmd_solve_dp(&cfg, &layout).unwrap();
    let vf = layout.value_function("short_a", CorpusVariant::Free);
    let mut bytes = std::fs::read(&vf).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    std::fs::write(&vf, &bytes).unwrap();

    let err = load_solution(&vf).unwrap_err();
    assert!(matches!(&err, Error::Format { path, .. } if path == &vf), "{err}");
    assert!(cmd_train(&cfg, &layout, Variant::Ag).is_err());

    std::fs::write(&vf, b"not a value function").unwrap();
    assert!(matches!(load_solution(&vf), Err(Error::Format { .. })));
}

#[test]
fn plot_series_has_one_row_per_node() {
    let cfg = small_config();
    let sc = Scenario::load(&data_dir().join("short_b.toml")).unwrap();
    let world = World::resolve(sc, &cfg).unwrap();
    let (_, traj) = world.solve(CorpusVariant::Traffic, &cfg).unwrap();
    let (route, lead) = world.variant(CorpusVariant::Traffic);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plot.csv");
    write_plot_series(&route, lead, &traj, &path).unwrap();
    let (header, rows) = csv_rows(&path);
    assert_eq!(header, PLOT_COLUMNS.map(String::from).to_vec());
    assert_eq!(rows, route.step_count() + 1);
    assert_eq!(route.step_count(), 50);
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = small_config();
    let back = PipelineConfig::from_toml_str(&cfg.to_toml_string(), &data_dir()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
    assert_eq!(cfg.train.seed, 11);
}

#[test]
fn missing_scenario_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.toml");
    std::fs::write(&path, "[corpus]\nscenario_files = [\"absent.toml\"]\n").unwrap();
    let err = PipelineConfig::load(&path).unwrap_err();
    let missing = dir.path().join("absent.toml");
    assert!(matches!(&err, Error::Config(m) if m.contains(&missing.display().to_string())), "{err}");
}
