//! One 10 m step of the powertrain surrogate under each control.

use ecodrive::dp::move_part;
use ecodrive::vehicle::{road_load, ControlInput, VehicleParams};

fn main() -> ecodrive::Result<()> {
    let p = VehicleParams::default();
    let (v, soc, ds) = (12.0, 0.25, 10.0);
    println!("road load at {v} m/s: {:.1} N", road_load(v, &p)?);
    println!("{:>6} {:>6} {:>8} {:>7} {:>10} {:>9} {:>8}", "accel", "engine", "v_next", "dt", "P_batt_W", "mfeq_g/s", "soc");
    for a in [-3.0, -1.0, 0.0, 1.0, 2.0] {
        for engine_on in [false, true] {
            let u = ControlInput::new(a, engine_on);
            match move_part(v, soc, u, ds, 0.8, &p) {
                Some(m) => println!(
                    "{a:>6.1} {:>6} {:>8.3} {:>7.3} {:>10.0} {:>9.4} {:>8.5}",
                    engine_on, m.v_next, m.dt, m.flows.batt_power_w, m.flows.equiv_fuel_rate_gps, m.soc_next
                ),
                None => println!("{a:>6.1} {engine_on:>6} infeasible"),
            }
        }
    }
    Ok(())
}
