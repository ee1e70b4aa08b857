use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::world::{EgoStart, LeadSpec, LimitChange, Route, Scenario, TrafficJam, TrafficLight};

const LIMITS_MPS: [f64; 5] = [13.0, 14.0, 15.0, 16.0, 17.0];
const CYCLES_S: [f64; 5] = [50.0, 60.0, 70.0, 80.0, 90.0];

/// `n` random route variants named `syn0 ..`: 1 to 5 km, 1 to 4 lights with
/// random timing, up to two limit changes, and a jam on every odd one.
/// Every scenario has a lead vehicle and an ego starting 4 s behind it.
pub fn generate_scenarios(n: usize, seed: u64) -> Result<Vec<Scenario>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| generate_one(&mut rng, i)).collect()
}

fn generate_one(rng: &mut ChaCha8Rng, i: usize) -> Result<Scenario> {
    let length = 100.0 * rng.random_range(10..=50) as f64;
    let mut limits = vec![LimitChange { start_m: 0.0, limit_mps: LIMITS_MPS[rng.random_range(0..LIMITS_MPS.len())] }];
    for _ in 0..rng.random_range(0..=2) {
        let start = 100.0 * rng.random_range(3..(length / 100.0) as usize) as f64;
        if limits.iter().all(|l| l.start_m != start) {
            limits.push(LimitChange { start_m: start, limit_mps: LIMITS_MPS[rng.random_range(0..LIMITS_MPS.len())] });
        }
    }
    let n_lights = rng.random_range(1..=4usize);
    let seg = length / n_lights as f64;
    let lights = (0..n_lights)
        .map(|k| {
            let lo = k as f64 * seg + 150.0;
            let hi = ((k + 1) as f64 * seg - 50.0).max(lo + 10.0);
            let position_m = 10.0 * (rng.random_range(lo..hi) / 10.0).floor();
            let cycle_s = CYCLES_S[rng.random_range(0..CYCLES_S.len())];
            let green_s = (cycle_s * rng.random_range(0.4..0.6)).round();
            let offset_s = rng.random_range(0.0..cycle_s).floor();
            TrafficLight { position_m, cycle_s, green_s, offset_s }
        })
        .collect();
    let jams = if i % 2 == 1 {
        let start = 100.0 * ((length * rng.random_range(0.6..0.8)) / 100.0).floor();
        vec![TrafficJam {
            x_start_m: start,
            x_end_m: length,
            t_start_s: 0.0,
            t_end_s: 3000.0,
            density_veh_per_km: rng.random_range(80..=120) as f64,
            greenshield_c1: 0.1,
            greenshield_c2: 20.0,
        }]
    } else {
        Vec::new()
    };
    let route = Route::new(format!("syn{i}"), length, 10.0, limits, lights, jams)?;
    Ok(Scenario {
        route,
        lead: Some(LeadSpec::Dp { gamma: 0.5 }),
        ego: EgoStart { start_time_s: 4.0, ..EgoStart::default() },
        base_dir: PathBuf::from("."),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_seeded_and_in_range() {
        let a = generate_scenarios(8, 7).unwrap();
        assert_eq!(a, generate_scenarios(8, 7).unwrap());
        assert_ne!(a, generate_scenarios(8, 8).unwrap());
        for (i, s) in a.iter().enumerate() {
            let r = &s.route;
            assert!((1000.0..=5000.0).contains(&r.length_m));
            assert!((1..=4).contains(&r.lights.len()));
            assert_eq!(r.jams.len(), i % 2);
            assert!(r.lights.iter().all(|l| l.position_m > 0.0 && l.position_m < r.length_m));
        }
    }
}
