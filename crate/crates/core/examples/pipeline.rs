//! The whole chain on a small corpus: solve, train both nets, benchmark.
//! Pass an output directory, default `pipeline_out`.

use ecodrive::bench::{reduced_config, run_pipeline, Layout, PipelineConfig};

fn main() -> ecodrive::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "pipeline_out".into());
    let cfg = reduced_config(&PipelineConfig::default());
    let run = run_pipeline(&cfg, &Layout::new(&out))?;
    print!("{}", run.report.to_text());
    println!("artifacts under {out}/");
    Ok(())
}
