//! Labels from one solved scenario, a small net fitted to them, and a
//! gradient check of the result.

use ecodrive::bench::{generate_scenarios, gradient_check, CorpusVariant, PipelineConfig, World};
use ecodrive::nn::{build_dataset, train, DatasetSource, TrainConfig, Variant};

fn main() -> ecodrive::Result<()> {
    let cfg = PipelineConfig::default();
    let sc = generate_scenarios(1, 3)?.remove(0);
    let world = World::resolve(sc, &cfg)?;
    let (route, _) = world.variant(CorpusVariant::Free);
    let (sol, _) = world.solve(CorpusVariant::Free, &cfg)?;
    println!("{}: {:.0} m, {} lights", world.name(), route.length_m, route.lights.len());

    let src = DatasetSource { name: world.name(), route: &route, solution: &sol, lead: None };
    let data = build_dataset(&[src], Variant::Ag, 6000, 1)?;
    let tc = TrainConfig { epochs: 60, ..TrainConfig::default() };
    let (net, report) = train(&data, &tc, cfg.gamma)?;
    for e in report.epochs.iter().step_by(10) {
        println!("epoch {:>3}  train {:.5}  val {:.5}", e.epoch, e.train_mse, e.val_mse);
    }
    println!("held-out relative RMSE {:.2} %", 100.0 * report.val_relative_rmse);
    println!("worst gradient error {:.2e}", gradient_check(&net, 100, 1)?);
    Ok(())
}
