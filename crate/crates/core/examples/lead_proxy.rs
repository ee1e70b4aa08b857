//! What the controller sees of the lead: detection, the acceleration
//! estimate and the constant-acceleration projection.

use ecodrive::bench::{PipelineConfig, World};
use ecodrive::mpc::{detect_lead, project_proxy, LeadObservation};
use ecodrive::world::build_scenario;

fn main() -> ecodrive::Result<()> {
    let cfg = PipelineConfig::default();
    let world = World::resolve(build_scenario("route1")?, &cfg)?;
    let lead = world.lead.as_ref().expect("route1 has a lead");
    let route = &world.scenario.route;
    let m = &cfg.mpc;

    for (t, ego_x) in [(8.0, 10.0), (60.0, 700.0), (95.0, 1400.0)] {
        let (_, vp) = lead.state_at(t - m.accel_window_s);
        let obs = LeadObservation::observe(lead, t, Some((t - m.accel_window_s, vp)), m.accel_est_limit_mps2);
        let seen = detect_lead(ego_x, obs.x_m, m.sensing_range_m);
        println!(
            "t {t:>5.1}: lead at {:.1} m, {:.2} m/s, a {:+.2}; ego at {ego_x} m sees it: {seen}",
            obs.x_m, obs.v_mps, obs.accel_est_mps2
        );
        if seen {
            let p = project_proxy(&obs, lead.samples(), route, m.horizon_m + m.proxy_projection_m, m.proxy_dt_s);
            let last = p.trajectory.samples().last().expect("anchor");
            println!(
                "  projected to {:.0} m by {:.1} s, jam {} stall {}",
                last.x_m, last.t_s, p.jam_interaction, p.stalls
            );
        }
    }
    Ok(())
}
