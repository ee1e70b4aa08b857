//! Backward induction against exhaustive enumeration on tiny instances.

use ecodrive::bench::{check_bellman_residual, check_oracle_equivalence};

fn main() -> ecodrive::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let (ok, detail) = check_oracle_equivalence(seed)?;
    println!("oracle   {}: {detail}", if ok { "ok" } else { "MISMATCH" });
    let (ok, detail) = check_bellman_residual()?;
    println!("residual {}: {detail}", if ok { "ok" } else { "NONZERO" });
    Ok(())
}
