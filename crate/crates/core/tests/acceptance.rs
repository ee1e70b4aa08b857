//! One PASS/FAIL line per acceptance criterion, on the default configuration.
//!
//! Exits 0 unless `ECODRIVE_ACCEPTANCE_STRICT=1`, in which case any failure
//! exits 1. Outputs go to a temporary directory, or to
//! `ECODRIVE_ACCEPTANCE_OUT` when set.

use std::time::Instant;

use ecodrive::bench::{verify, Layout, PipelineConfig, PROPERTIES};

fn main() {
    let cfg = PipelineConfig::default();
    let tmp = tempfile::tempdir().expect("temporary directory");
    let root = std::env::var_os("ECODRIVE_ACCEPTANCE_OUT").map_or_else(|| tmp.path().to_path_buf(), Into::into);
    let layout = Layout::new(&root);
    let start = Instant::now();

    let groups: [&[usize]; 5] = [&[1], &[2], &[8], &[3, 4, 5, 6, 7], &[9]];
    let mut lines = Vec::new();
    for ids in groups {
        match verify(&cfg, &layout, ids) {
            Ok(outcomes) => lines.extend(outcomes.iter().map(|o| (o.id, o.passed, o.line()))),
            Err(e) => lines.extend(ids.iter().map(|&id| {
                (id, false, format!("FAIL {id}. {} (seed {}): error: {e}", PROPERTIES[id - 1].name, cfg.seed))
            })),
        }
    }
    lines.sort_by_key(|l| l.0);

    println!("acceptance ({} criteria, {:.0} s)", lines.len(), start.elapsed().as_secs_f64());
    for (_, _, line) in &lines {
        println!("{line}");
    }
    let failed = lines.iter().filter(|l| !l.1).count();
    println!("{} passed, {failed} failed", lines.len() - failed);

    if failed > 0 && std::env::var("ECODRIVE_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
