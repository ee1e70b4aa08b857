use ecodrive::bench::{check_bellman_residual, check_jam_model, tiny_instance};
use ecodrive::dp::{backward_induction, brute_force_oracle, GridSpec, Problem, SuccessorScheme, TerminalPenalty};
use ecodrive::vehicle::{ControlInput, EgoState, VehicleParams};
use ecodrive::world::{LimitChange, Route};
use ecodrive::Error;
use proptest::prelude::*;

fn grid_spec() -> GridSpec {
    GridSpec {
        dsoc: 0.01,
        time_slack_s: 12.0,
        slack_per_light_s: 0.0,
        ..GridSpec::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dp_start_value_equals_exhaustive_search(seed in 1_000u64..1_000_000) {
        let (route, controls) = tiny_instance(seed).unwrap();
        let params = VehicleParams::default();
        let penalty = TerminalPenalty::default();
        let x0 = EgoState::new(0.0, 0.25, 0.0);
        let grid = grid_spec().build(&route, &x0, None).unwrap();
        let problem = Problem::new(&route, &params, 0.8, controls).with_scheme(SuccessorScheme::Snap);
        let sol = backward_induction(&problem, &grid, &penalty, "").unwrap();
        let start = problem.corners(grid.layer(0), &x0).unwrap();
        let node = grid.layer(0).state(start.idx[0]);
        let dp = sol.value.node_value(0, start.idx[0]);
        match brute_force_oracle(&problem, &grid, &node, &penalty) {
            Ok((best, _)) => prop_assert_eq!(best.to_bits(), dp.to_bits()),
            Err(Error::NoSolution(_)) => prop_assert!(dp.is_infinite()),
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn oracle_refuses_oversized_instances() {
    let route = Route::new("long", 200.0, 10.0, vec![LimitChange { start_m: 0.0, limit_mps: 12.0 }], vec![], vec![])
        .unwrap();
    let params = VehicleParams::default();
    let controls: Vec<_> = [-1.0, 0.0, 1.0, 2.0].iter().map(|&a| ControlInput::new(a, false)).collect();
    let x0 = EgoState::new(0.0, 0.25, 0.0);
    let grid = grid_spec().build(&route, &x0, None).unwrap();
    let problem = Problem::new(&route, &params, 0.8, controls).with_scheme(SuccessorScheme::Snap);
    let err = brute_force_oracle(&problem, &grid, &x0, &TerminalPenalty::default()).unwrap_err();
    assert!(matches!(err, Error::Budget { sequences, .. } if sequences == 4u128.pow(20)), "{err}");
}

#[test]
fn bellman_residual_vanishes() {
    let (ok, detail) = check_bellman_residual().unwrap();
    assert!(ok, "{detail}");
}

#[test]
fn jam_model_is_linear_and_only_raises_values() {
    let (ok, detail) = check_jam_model().unwrap();
    assert!(ok, "{detail}");
}
