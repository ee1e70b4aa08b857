//! The end-to-end pipeline: corpus, training, benchmark and property checks.

mod config;
mod pipeline;
mod report;
mod scenarios;
mod verify;

pub use config::{BenchmarkConfig, CorpusConfig, PipelineConfig};
pub use pipeline::{
    cmd_gen_scenarios, cmd_solve_dp, cmd_train, corpus_scenarios, load_manifest, load_train_summary, write_world,
    CorpusVariant, Layout, Manifest, ManifestEntry, TrainSummary, World,
};
pub use scenarios::generate_scenarios;
pub use report::{
    cmd_benchmark, percent_delta, write_plot_series, BenchmarkReport, BenchmarkRun, ControllerRow, ReportProvenance,
    RouteDeltas, Violations, CONTROLLERS, PLOT_COLUMNS, REPORT_FOOTER,
};
pub use verify::{
    check_bellman_residual, check_determinism, check_jam_model, check_nn_fidelity, check_oracle_equivalence,
    check_principle_of_optimality, check_safety, check_switching, check_trend, gradient_check, reduced_config,
    run_pipeline, tiny_instance, verify, Property, PropertyOutcome, PROPERTIES,
};
