use nalgebra::{UnitQuaternion, Vector3, Vector4};
use proptest::prelude::*;
use quadrcac::vehicle::{step_dynamics, Mixer, VehicleParams, VehicleState, MAX_STEP};
use quadrcac::{simulate, ScenarioConfig};

fn setup() -> (VehicleParams, Mixer) {
    let params = VehicleParams::default();
    let mixer = Mixer::new(&params).unwrap();
    (params, mixer)
}

fn integrate(
    mut state: VehicleState,
    cmd: impl Fn(f64) -> Vector4<f64>,
    params: &VehicleParams,
    mixer: &Mixer,
    dt: f64,
    steps: usize,
) -> VehicleState {
    for k in 0..steps {
        state = step_dynamics(&state, &cmd(k as f64 * dt), params, mixer, dt).unwrap();
    }
    state
}

#[test]
fn hover_holds_position_for_one_second() {
    let (params, mixer) = setup();
    let start = Vector3::new(1.0, -2.0, -3.0);
    let hover = VehicleState::hovering(start, &params);
    let cmd = hover.rotor_speeds;
    let end = integrate(hover, |_| cmd, &params, &mixer, 1.0 / 250.0, 250);
    assert!((end.body.position - start).norm() < 1e-9);
    assert!(end.body.velocity.norm() < 1e-9);
    assert!(end.body.omega.norm() < 1e-12);
}

fn error(a: &VehicleState, b: &VehicleState) -> f64 {
    let q = a.body.attitude.angle_to(&b.body.attitude);
    (a.body.position - b.body.position).norm()
        + (a.body.velocity - b.body.velocity).norm()
        + (a.body.omega - b.body.omega).norm()
        + q
        + (a.rotor_speeds - b.rotor_speeds).norm() * 1e-3
}

#[test]
fn rk4_error_falls_with_fourth_power_of_step() {
    let (params, mixer) = setup();
    let mut start = VehicleState::hovering(Vector3::zeros(), &params);
    start.body.velocity = Vector3::new(1.0, -0.5, 0.3);
    start.body.omega = Vector3::new(2.0, -1.5, 0.8);
    start.body.attitude = UnitQuaternion::from_euler_angles(0.3, -0.2, 1.0);
    let hover = params.hover_rotor_speed();
    let cmd = move |_t: f64| Vector4::new(hover * 1.1, hover * 0.9, hover * 1.05, hover * 0.97);
    let horizon = 0.4;
    let run = |dt: f64| integrate(start.clone(), cmd, &params, &mixer, dt, (horizon / dt).round() as usize);
    let reference = run(MAX_STEP / 64.0);
    let coarse = error(&run(MAX_STEP), &reference);
    let fine = error(&run(MAX_STEP / 2.0), &reference);
    let ratio = coarse / fine;
    assert!((8.0..=32.0).contains(&ratio), "ratio {ratio}, errors {coarse:e} {fine:e}");
}

#[test]
fn attitude_stays_unit_under_aggressive_commands() {
    let (params, mixer) = setup();
    let mut state = VehicleState::hovering(Vector3::zeros(), &params);
    let max = params.rotor_max;
    for k in 0..5000 {
        let t = k as f64 * MAX_STEP;
        let cmd = Vector4::new(
            max * (0.5 + 0.5 * (7.0 * t).sin()),
            max * (0.5 + 0.5 * (3.0 * t).cos()),
            max * (0.5 + 0.4 * (11.0 * t).sin()),
            max * 0.3,
        );
        state = step_dynamics(&state, &cmd, &params, &mixer, MAX_STEP).unwrap();
        assert!((state.body.attitude.quaternion().norm() - 1.0).abs() < 1e-9);
    }
}

proptest! {
    #[test]
    fn mixer_round_trip(
        thrust_frac in 0.1f64..0.9,
        mx in -1.0f64..1.0,
        my in -1.0f64..1.0,
        mz in -0.1f64..0.1,
    ) {
        let (params, mixer) = setup();
        let thrust = thrust_frac * params.max_total_thrust();
        let moment = Vector3::new(mx, my, mz);
        let out = mixer.mix(thrust, &moment);
        prop_assume!(!out.saturated);
        let (t, m) = mixer.wrench(&out.rotor_speeds);
        prop_assert!((t - thrust).abs() < 1e-9);
        prop_assert!((m - moment).norm() < 1e-9);
    }

    #[test]
    fn saturated_mix_stays_in_range(thrust in -100.0f64..200.0, mx in -50.0f64..50.0, my in -50.0f64..50.0, mz in -5.0f64..5.0) {
        let (params, mixer) = setup();
        let out = mixer.mix(thrust, &Vector3::new(mx, my, mz));
        prop_assert!(out.rotor_speeds.iter().all(|w| (0.0..=params.rotor_max).contains(w)));
    }
}

fn short_scenario(seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.duration_s = 4.0;
    cfg.noise.seed = seed;
    cfg
}

#[test]
fn reruns_are_bit_identical_per_seed() {
    let bits = |seed| {
        let out = simulate(&short_scenario(seed));
        assert!(out.error.is_none());
        let mut csv = Vec::new();
        out.log.write_csv(&mut csv).unwrap();
        csv
    };
    assert_eq!(bits(3), bits(3));
    assert_ne!(bits(3), bits(4));
}
