//! Rigid-body quadrotor attitude and vertical dynamics, integrated with
//! fixed-step RK4. Torques are applied directly (no per-motor mixing).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Pitch magnitude beyond which the Euler kinematics are refused.
pub const PITCH_GUARD_RAD: f64 = 80.0 * std::f64::consts::PI / 180.0;

pub const DEFAULT_DT: f64 = 0.004;

#[derive(Clone, Debug, PartialEq)]
pub struct QuadrotorParams {
    pub mass: f64,
    pub ix: f64,
    pub iy: f64,
    pub iz: f64,
    /// Per-axis |torque| bound, N·m.
    pub torque_limits: [f64; 3],
    pub thrust_limit: f64,
    /// First-order actuator lag; 0 applies commands instantly.
    pub motor_tau_s: f64,
    pub g: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self {
            mass: 1.05,
            ix: 0.0095,
            iy: 0.0095,
            iz: 0.0186,
            torque_limits: [0.5; 3],
            thrust_limit: 25.0,
            motor_tau_s: 0.02,
            g: 9.81,
        }
    }
}

impl QuadrotorParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("ix", self.ix),
            ("iy", self.iy),
            ("iz", self.iz),
            ("thrust_limit", self.thrust_limit),
            ("g", self.g),
        ];
        for (name, v) in positive.into_iter().chain(
            ["torque_limit_roll", "torque_limit_pitch", "torque_limit_yaw"]
                .into_iter()
                .zip(self.torque_limits),
        ) {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("plant parameter {name} must be > 0, got {v}")));
            }
        }
        if !(self.motor_tau_s >= 0.0 && self.motor_tau_s.is_finite()) {
            return Err(Error::Config(format!("motor_tau_s must be >= 0, got {}", self.motor_tau_s)));
        }
        Ok(())
    }

    /// Collective thrust holding altitude at zero tilt.
    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.g
    }
}

/// Instantaneous plant state. Also used to carry time derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PlantState {
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub z: f64,
    pub vz: f64,
    /// Lagged actuator torque per axis.
    pub tau_act: [f64; 3],
}

const STATE_DIM: usize = 11;

impl PlantState {
    fn to_array(self) -> [f64; STATE_DIM] {
        let t = self.tau_act;
        [self.phi, self.theta, self.psi, self.p, self.q, self.r, self.z, self.vz, t[0], t[1], t[2]]
    }

    fn from_array(a: [f64; STATE_DIM]) -> Self {
        Self {
            phi: a[0],
            theta: a[1],
            psi: a[2],
            p: a[3],
            q: a[4],
            r: a[5],
            z: a[6],
            vz: a[7],
            tau_act: [a[8], a[9], a[10]],
        }
    }

    fn axpy(self, h: f64, d: PlantState) -> PlantState {
        let mut a = self.to_array();
        for (x, dx) in a.iter_mut().zip(d.to_array()) {
            *x += h * dx;
        }
        Self::from_array(a)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn rates(&self) -> [f64; 3] {
        [self.p, self.q, self.r]
    }

    pub fn angles(&self) -> [f64; 3] {
        [self.phi, self.theta, self.psi]
    }

    /// Largest absolute difference over all components.
    pub fn max_abs_diff(&self, other: &PlantState) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ControlInput {
    /// Collective thrust, N.
    pub u1: f64,
    /// Roll, pitch and yaw torques, N·m.
    pub torques: [f64; 3],
}

impl ControlInput {
    pub fn hover(params: &QuadrotorParams) -> Self {
        Self { u1: params.hover_thrust(), torques: [0.0; 3] }
    }

    fn clamped(&self, params: &QuadrotorParams) -> Self {
        let mut torques = self.torques;
        for (t, lim) in torques.iter_mut().zip(params.torque_limits) {
            *t = t.clamp(-lim, lim);
        }
        Self { u1: self.u1.clamp(0.0, params.thrust_limit), torques }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NoiseSpec {
    /// Rate measurement noise std, rad/s (also applied to altitude, m).
    pub meas_std: f64,
    /// Torque disturbance std, N·m.
    pub dist_std: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.meas_std >= 0.0 && self.dist_std >= 0.0) {
            return Err(Error::Config("noise standard deviations must be >= 0".into()));
        }
        Ok(())
    }
}

/// Seeded Gaussian stream feeding disturbances and sensor noise.
#[derive(Clone, Debug)]
pub struct NoiseStream {
    spec: NoiseSpec,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(spec: NoiseSpec) -> Self {
        Self { spec, rng: ChaCha8Rng::seed_from_u64(spec.seed) }
    }

    fn gaussian(&mut self, std: f64) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        std * z
    }

    pub fn disturbance(&mut self) -> [f64; 3] {
        let s = self.spec.dist_std;
        [self.gaussian(s), self.gaussian(s), self.gaussian(s)]
    }
}

/// Sensor reading: body rates and altitude.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub z: f64,
}

impl Measurement {
    pub fn rates(&self) -> [f64; 3] {
        [self.p, self.q, self.r]
    }
}

fn check_guard(state: &PlantState) -> Result<()> {
    if !state.is_finite() {
        return Err(Error::Simulation(format!("non-finite plant state {state:?}")));
    }
    if state.theta.abs() >= PITCH_GUARD_RAD {
        return Err(Error::Simulation(format!(
            "pitch {:.3} rad beyond the {:.3} rad Euler singularity guard",
            state.theta, PITCH_GUARD_RAD
        )));
    }
    Ok(())
}

/// Time derivative of the state. `input` torques are the (already clamped and
/// disturbed) actuator commands.
pub fn derivatives(
    state: &PlantState,
    input: &ControlInput,
    params: &QuadrotorParams,
) -> Result<PlantState> {
    check_guard(state)?;
    let QuadrotorParams { ix, iy, iz, mass, g, motor_tau_s, .. } = *params;
    let (p, q, r) = (state.p, state.q, state.r);
    let (sphi, cphi) = state.phi.sin_cos();
    let (stheta, ctheta) = state.theta.sin_cos();
    let ttheta = stheta / ctheta;

    let (tau, dtau) = if motor_tau_s > 0.0 {
        let mut d = [0.0; 3];
        for i in 0..3 {
            d[i] = (input.torques[i] - state.tau_act[i]) / motor_tau_s;
        }
        (state.tau_act, d)
    } else {
        (input.torques, [0.0; 3])
    };

    Ok(PlantState {
        phi: p + sphi * ttheta * q + cphi * ttheta * r,
        theta: cphi * q - sphi * r,
        psi: (sphi * q + cphi * r) / ctheta,
        p: ((iy - iz) / ix) * q * r + tau[0] / ix,
        q: ((iz - ix) / iy) * p * r + tau[1] / iy,
        r: ((ix - iy) / iz) * p * q + tau[2] / iz,
        z: state.vz,
        vz: (cphi * ctheta * input.u1 - mass * g) / mass,
        tau_act: dtau,
    })
}

/// One RK4 step of length `dt` with a zero-order-held input. A disturbance
/// torque drawn from `noise` is added after saturation.
pub fn step(
    state: &PlantState,
    input: &ControlInput,
    params: &QuadrotorParams,
    dt: f64,
    noise: &mut NoiseStream,
) -> Result<PlantState> {
    if !(dt > 0.0) {
        return Err(Error::Argument(format!("dt must be > 0, got {dt}")));
    }
    let mut applied = input.clamped(params);
    let dist = noise.disturbance();
    for (t, d) in applied.torques.iter_mut().zip(dist) {
        *t += d;
    }
    let next = rk4(state, &applied, params, dt)?;
    check_guard(&next)?;
    Ok(next)
}

/// Noise-free RK4 step without saturation or disturbance.
pub fn rk4(
    state: &PlantState,
    input: &ControlInput,
    params: &QuadrotorParams,
    dt: f64,
) -> Result<PlantState> {
    let k1 = derivatives(state, input, params)?;
    let k2 = derivatives(&state.axpy(dt / 2.0, k1), input, params)?;
    let k3 = derivatives(&state.axpy(dt / 2.0, k2), input, params)?;
    let k4 = derivatives(&state.axpy(dt, k3), input, params)?;
    let mut a = state.to_array();
    let (d1, d2, d3, d4) = (k1.to_array(), k2.to_array(), k3.to_array(), k4.to_array());
    for i in 0..STATE_DIM {
        a[i] += dt / 6.0 * (d1[i] + 2.0 * d2[i] + 2.0 * d3[i] + d4[i]);
    }
    let mut next = PlantState::from_array(a);
    if params.motor_tau_s == 0.0 {
        next.tau_act = input.torques;
    }
    Ok(next)
}

/// Rates and altitude with additive Gaussian sensor noise.
pub fn measure(state: &PlantState, noise: &mut NoiseStream) -> Measurement {
    let s = noise.spec.meas_std;
    Measurement {
        p: state.p + noise.gaussian(s),
        q: state.q + noise.gaussian(s),
        r: state.r + noise.gaussian(s),
        z: state.z + noise.gaussian(s),
    }
}
