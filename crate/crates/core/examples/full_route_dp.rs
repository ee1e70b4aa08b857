//! Full-route DP on route1 behind its lead vehicle, then an audit of the
//! extracted trajectory.

use std::time::Instant;

use ecodrive::dp::{audit, backward_induction, extract_trajectory, generate_lead, GridSpec, LeadConstraint, Problem, TerminalPenalty};
use ecodrive::vehicle::VehicleParams;
use ecodrive::world::build_scenario;

fn main() -> ecodrive::Result<()> {
    let sc = build_scenario("route1")?;
    let (params, spec, penalty) = (VehicleParams::default(), GridSpec::default(), TerminalPenalty::default());

    let t = Instant::now();
    let lead = generate_lead(&sc.route, &params, &spec, &penalty, 0.5, sc.ego.initial_soc)?;
    println!("lead: {} samples, arrives at {:.1} s ({:.1?})", lead.samples().len(), lead.end_time(), t.elapsed());

    let x0 = sc.ego.state();
    let gap = Some(LeadConstraint::new(&lead, 2.0));
    let grid = spec.build(&sc.route, &x0, gap)?;
    let problem = Problem::new(&sc.route, &params, 0.8, spec.controls()).with_lead(gap);
    let t = Instant::now();
    let sol = backward_induction(&problem, &grid, &penalty, &sc.route.fingerprint())?;
    println!("{} nodes swept in {:.1?}, J0 = {:.4}", grid.total_nodes(), t.elapsed(), sol.initial_value(&x0)?);

    let traj = extract_trajectory(&problem, &sol, &x0)?;
    let m = traj.metrics();
    println!("efc {:.2} g, time {:.1} s, final soc {:.2} %", m.efc_g, m.travel_time_s, m.final_soc_pct);
    println!("violations: {}", audit(&sc.route, gap.as_ref(), &traj).len());
    for st in traj.steps.iter().step_by(25) {
        println!("  {:>6.0} m  t {:>6.1}  v {:>5.2}  soc {:.4}", st.x_m, st.state.time_s, st.state.v_mps, st.state.soc_frac);
    }
    Ok(())
}
