//! Signal phases and the space-time speed cap of a jam on route1.

use ecodrive::world::{build_scenario, greenshield_speed};

fn main() -> ecodrive::Result<()> {
    let route = build_scenario("route1")?.route;
    let light = route.lights[1];
    println!("light at {} m, cycle {} s, green {} s", light.position_m, light.cycle_s, light.green_s);
    for t in (0..=120).step_by(15) {
        let ph = light.signal_phase(t as f64);
        println!("  t {t:>3} s  {:?}  red left {:>4.1} s  next green {:?}", ph.phase, ph.t_rg, ph.next_green_window);
    }

    let jam = route.jams[0];
    println!(
        "jam [{}, {}) m, density {} veh/km -> {:.1} m/s",
        jam.x_start_m,
        jam.x_end_m,
        jam.density_veh_per_km,
        greenshield_speed(jam.greenshield_c1, jam.greenshield_c2, jam.density_veh_per_km)
    );
    for x in [1000.0, 1490.0, 1500.0, 1800.0] {
        println!("  limit at {x} m: {:.1} m/s (t = 100 s)", route.effective_speed_limit(x, 100.0));
    }
    Ok(())
}
