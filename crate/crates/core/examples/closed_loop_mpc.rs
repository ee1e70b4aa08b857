//! Receding-horizon control with the exact full-route value function as the
//! terminal cost, next to the DP trajectory it should reproduce.

use ecodrive::bench::{CorpusVariant, PipelineConfig, World};
use ecodrive::mpc::{run_closed_loop, ClosedLoopSetup, TerminalSource};
use ecodrive::world::{LimitChange, Route, Scenario, TrafficLight};

fn main() -> ecodrive::Result<()> {
    let cfg = PipelineConfig::default();
    let route = Route::new(
        "demo",
        800.0,
        10.0,
        vec![LimitChange { start_m: 0.0, limit_mps: 15.0 }],
        vec![TrafficLight { position_m: 450.0, cycle_s: 60.0, green_s: 30.0, offset_s: 25.0 }],
        vec![],
    )?;
    let sc = Scenario { route, lead: None, ego: Default::default(), base_dir: ".".into() };
    let world = World::resolve(sc, &cfg)?;
    let (sol, dp) = world.solve(CorpusVariant::Traffic, &cfg)?;

    let setup = ClosedLoopSetup {
        route: &world.scenario.route,
        x0: world.scenario.ego.state(),
        lead: None,
        params: &cfg.vehicle,
        grid: &cfg.grid,
        penalty: &cfg.penalty,
    };
    let mpc = run_closed_loop(&setup, &cfg.mpc, TerminalSource::ExactDp(&sol))?;
    let dp_cost = dp.metrics().total_cost + cfg.penalty.eval(&dp.final_state);
    println!("dp  objective {dp_cost:.4}  efc {:.2} g  time {:.1} s", dp.metrics().efc_g, dp.metrics().travel_time_s);
    println!("mpc objective {:.4}  efc {:.2} g  time {:.1} s", mpc.objective(), mpc.metrics.efc_g, mpc.metrics.travel_time_s);
    println!("identical trajectories: {}", mpc.trajectory == dp);
    mpc.write_csv(std::path::Path::new("closed_loop_demo.csv"))?;
    println!("wrote closed_loop_demo.csv");
    Ok(())
}
