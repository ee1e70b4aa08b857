use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ecodrive::bench::{
    cmd_benchmark, cmd_gen_scenarios, cmd_solve_dp, cmd_train, verify, Layout, PipelineConfig, PROPERTIES,
};
use ecodrive::nn::Variant;
use ecodrive::Error;

#[derive(Parser)]
#[command(name = "ecodrive", version, about = "Eco-driving DP, neural terminal costs and MPC benchmarks")]
struct Cli {
    /// Pipeline config (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve every corpus scenario with and without traffic.
    SolveDp,
    /// Train a terminal-cost net from the solved corpus.
    Train {
        #[arg(long)]
        variant: Variant,
    },
    /// DP, ag-net MPC and ensemble MPC on the benchmark routes.
    Benchmark,
    /// Run the property suite.
    Verify {
        /// Print the properties without running them.
        #[arg(long)]
        list: bool,
        /// Run only these property ids.
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
    },
    /// Write the synthetic corpus scenarios as TOML files.
    GenScenarios,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Schema { .. } | Error::UnknownScenario(_) | Error::Format { .. } | Error::Io { .. } => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("--jobs: {e}")))?;
    }
    let layout = Layout::new(&cli.out);
    match cli.cmd {
        Cmd::SolveDp => {
            let m = cmd_solve_dp(&cfg, &layout)?;
            for e in &m.entries {
                println!("{:<10} {:<8} {}", e.scenario, e.variant.as_str(), e.status);
            }
            Ok(true)
        }
        Cmd::Train { variant } => {
            let s = cmd_train(&cfg, &layout, variant)?;
            println!(
                "{} net: {} rows, held-out relative RMSE {:.2}%, sha256 {}",
                variant.as_str(),
                s.rows,
                100.0 * s.val_relative_rmse,
                s.net_sha256
            );
            Ok(true)
        }
        Cmd::Benchmark => {
            let run = cmd_benchmark(&cfg, &layout)?;
            print!("{}", run.report.to_text());
            Ok(run.report.all_ok())
        }
        Cmd::Verify { list: true, .. } => {
            for p in PROPERTIES {
                println!("{}. {:<24} {}", p.id, p.name, p.summary);
            }
            Ok(true)
        }
        Cmd::Verify { only, .. } => {
            if let Some(bad) = only.iter().find(|&&i| i == 0 || i > PROPERTIES.len()) {
                return Err(Error::Config(format!("unknown property id {bad}")));
            }
            let outcomes = verify(&cfg, &layout, &only)?;
            for o in &outcomes {
                println!("{}", o.line());
            }
            Ok(outcomes.iter().all(|o| o.passed))
        }
        Cmd::GenScenarios => {
            for p in cmd_gen_scenarios(&cfg, &layout)? {
                println!("{}", p.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
