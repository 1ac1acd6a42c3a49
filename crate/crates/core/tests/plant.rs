use narx_sysid::plant::*;

fn quiet(seed: u64) -> NoiseStream {
    NoiseStream::new(NoiseSpec { meas_std: 0.0, dist_std: 0.0, seed })
}

fn torque_sequence(n: usize) -> Vec<f64> {
    (0..n).map(|k| 0.003 * (std::f64::consts::TAU * k as f64 / 125.0).sin()).collect()
}

#[test]
fn hover_holds_for_a_million_steps() {
    let params = QuadrotorParams::default();
    let input = ControlInput::hover(&params);
    let mut noise = quiet(0);
    let zero = PlantState::default();
    let mut s = zero;
    for _ in 0..1_000_000 {
        s = step(&s, &input, &params, DEFAULT_DT, &mut noise).unwrap();
    }
    assert!(s.max_abs_diff(&zero) < 1e-9, "{s:?}");
}

#[test]
fn roll_and_pitch_respond_identically() {
    let params = QuadrotorParams::default();
    assert_eq!(params.ix, params.iy);
    let torques = torque_sequence(2000);
    let (mut a, mut b) = (PlantState::default(), PlantState::default());
    let (mut na, mut nb) = (quiet(1), quiet(1));
    for &t in &torques {
        let hover = ControlInput::hover(&params);
        a = step(&a, &ControlInput { torques: [t, 0.0, 0.0], ..hover }, &params, DEFAULT_DT, &mut na).unwrap();
        b = step(&b, &ControlInput { torques: [0.0, t, 0.0], ..hover }, &params, DEFAULT_DT, &mut nb).unwrap();
        assert!((a.p - b.q).abs() <= 1e-12);
        assert!((a.phi - b.theta).abs() <= 1e-12);
        assert_eq!(a.r, 0.0);
        assert_eq!(b.r, 0.0);
    }
}

#[test]
fn roll_angle_integrates_roll_rate() {
    let params = QuadrotorParams::default();
    let mut noise = quiet(2);
    let mut s = PlantState::default();
    let mut integral = 0.0;
    let torques = torque_sequence(250);
    for &t in &torques {
        let next = step(&s, &ControlInput { torques: [t, 0.0, 0.0], ..ControlInput::hover(&params) }, &params, DEFAULT_DT, &mut noise)
            .unwrap();
        integral += 0.5 * (s.p + next.p) * DEFAULT_DT;
        s = next;
        assert!(s.phi.abs() < 0.05 && s.theta.abs() < 0.05);
    }
    assert!(s.phi.abs() > 1e-3);
    assert!(((integral - s.phi) / s.phi).abs() < 1e-3);
}

fn trajectory_error(dt: f64, horizon: f64, reference: &PlantState) -> f64 {
    let (params, x0, input) = rk4_problem();
    let steps = (horizon / dt).round() as usize;
    let mut s = x0;
    for _ in 0..steps {
        s = rk4(&s, &input, &params, dt).unwrap();
    }
    s.max_abs_diff(reference)
}

fn rk4_problem() -> (QuadrotorParams, PlantState, ControlInput) {
    let params = QuadrotorParams::default();
    let x0 = PlantState { phi: 0.2, theta: -0.1, p: 4.0, q: -3.0, r: 2.0, vz: 0.5, ..Default::default() };
    let input = ControlInput { u1: 11.0, torques: [0.05, -0.03, 0.02] };
    (params, x0, input)
}

#[test]
fn rk4_is_fourth_order() {
    let horizon = 0.4;
    let (params, x0, input) = rk4_problem();
    let fine = DEFAULT_DT / 100.0;
    let mut reference = x0;
    for _ in 0..(horizon / fine).round() as usize {
        reference = rk4(&reference, &input, &params, fine).unwrap();
    }
    let e1 = trajectory_error(DEFAULT_DT, horizon, &reference);
    let e2 = trajectory_error(DEFAULT_DT / 2.0, horizon, &reference);
    let ratio = e1 / e2;
    assert!(e1 > 1e-12, "error too small to measure: {e1}");
    assert!((14.0..18.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn disturbance_is_seeded_and_enters_torque() {
    let params = QuadrotorParams::default();
    let spec = NoiseSpec { meas_std: 0.0, dist_std: 0.01, seed: 9 };
    let run = || {
        let mut n = NoiseStream::new(spec);
        let mut s = PlantState::default();
        for _ in 0..100 {
            s = step(&s, &ControlInput::hover(&params), &params, DEFAULT_DT, &mut n).unwrap();
        }
        s
    };
    let a = run();
    assert_eq!(a, run());
    assert!(a.p != 0.0 && a.q != 0.0 && a.r != 0.0);
}
