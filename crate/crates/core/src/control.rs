//! Cascade attitude stabilization (angle loop around a PI rate loop) and the
//! closed-loop PRBS identification experiment.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::plant::{self, ControlInput, NoiseSpec, NoiseStream, PlantState, QuadrotorParams};
use crate::signals::{self, BandSpec, PrbsSpec, Signal};

/// Angle magnitude treated as loss of stabilization.
pub const ANGLE_GUARD_RAD: f64 = std::f64::consts::FRAC_PI_4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    Roll,
    Pitch,
    Yaw,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Roll, Axis::Pitch, Axis::Yaw];

    pub fn index(self) -> usize {
        match self {
            Axis::Roll => 0,
            Axis::Pitch => 1,
            Axis::Yaw => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Roll => "roll",
            Axis::Pitch => "pitch",
            Axis::Yaw => "yaw",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "roll" => Ok(Axis::Roll),
            "pitch" => Ok(Axis::Pitch),
            "yaw" => Ok(Axis::Yaw),
            other => Err(Error::Config(format!("unknown axis '{other}' (roll|pitch|yaw)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisGains {
    /// Angle-loop proportional gain, 1/s.
    pub kp_angle: f64,
    pub kp_rate: f64,
    pub ki_rate: f64,
    pub rate_cmd_limit: f64,
    pub torque_limit: f64,
    /// Bound on the rate-loop integrator contribution, N·m.
    pub integrator_limit: f64,
}

impl Default for AxisGains {
    fn default() -> Self {
        Self {
            kp_angle: 4.0,
            kp_rate: 0.10,
            ki_rate: 0.05,
            rate_cmd_limit: 3.0,
            torque_limit: 0.5,
            integrator_limit: 0.25,
        }
    }
}

impl AxisGains {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kp_angle", self.kp_angle), ("kp_rate", self.kp_rate), ("ki_rate", self.ki_rate)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("gain {name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("rate_cmd_limit", self.rate_cmd_limit),
            ("torque_limit", self.torque_limit),
            ("integrator_limit", self.integrator_limit),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CascadeGains {
    pub axes: [AxisGains; 3],
}

impl CascadeGains {
    pub fn axis(&self, axis: Axis) -> &AxisGains {
        &self.axes[axis.index()]
    }
}

/// PI rate controller state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RateController {
    pub integrator: f64,
}

impl RateController {
    /// Torque command for one sample. The integrator is frozen while the
    /// output is saturated unless the update unwinds it.
    pub fn step(&mut self, rate_cmd: f64, rate_meas: f64, gains: &AxisGains, dt: f64) -> f64 {
        let err = rate_cmd - rate_meas;
        let lim = gains.integrator_limit;
        let candidate = (self.integrator + gains.ki_rate * err * dt).clamp(-lim, lim);
        let unsat = gains.kp_rate * err + candidate;
        let saturated = unsat.abs() > gains.torque_limit;
        if !saturated || candidate.abs() < self.integrator.abs() {
            self.integrator = candidate;
        }
        (gains.kp_rate * err + self.integrator).clamp(-gains.torque_limit, gains.torque_limit)
    }
}

pub fn rate_controller_step(
    state: &mut RateController,
    rate_cmd: f64,
    rate_meas: f64,
    gains: &AxisGains,
    dt: f64,
) -> f64 {
    state.step(rate_cmd, rate_meas, gains, dt)
}

/// Proportional angle loop producing a saturated rate command.
pub fn angle_controller_step(angle_cmd: f64, angle_meas: f64, gains: &AxisGains) -> f64 {
    (gains.kp_angle * (angle_cmd - angle_meas)).clamp(-gains.rate_cmd_limit, gains.rate_cmd_limit)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub axis: Axis,
    pub duration_s: f64,
    pub dt: f64,
    /// Angle reference for the excited axis; zero hold when absent.
    pub reference: Option<Signal>,
    pub prbs: PrbsSpec,
    pub gains: CascadeGains,
    pub noise: NoiseSpec,
    pub plant: QuadrotorParams,
    pub split_fraction: f64,
}

impl ExperimentConfig {
    /// Default setup: [0.1, 20] rad/s PRBS at 10% of the torque limit.
    pub fn default_for(axis: Axis) -> Result<Self> {
        let plant = QuadrotorParams::default();
        let gains = CascadeGains::default();
        let dt = plant::DEFAULT_DT;
        let band = BandSpec::new(0.1, 20.0)?;
        let amplitude = 0.1 * gains.axis(axis).torque_limit;
        Ok(Self {
            axis,
            duration_s: 123.0,
            dt,
            reference: None,
            prbs: signals::design_prbs_for_band(&band, dt, amplitude)?,
            gains,
            noise: NoiseSpec { meas_std: 0.01, dist_std: 0.001, seed: 1 },
            plant,
            split_fraction: 0.7,
        })
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if (self.prbs.dt - self.dt).abs() > 1e-12 * self.dt {
            return Err(Error::Config("PRBS dt differs from the experiment dt".into()));
        }
        self.prbs.validate()?;
        self.plant.validate()?;
        self.noise.validate()?;
        for g in &self.gains.axes {
            g.validate()?;
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::Config(format!(
                "split_fraction must be in (0, 1), got {}",
                self.split_fraction
            )));
        }
        let n = self.n_samples();
        let period = self.prbs.period_samples()?;
        if n < period.max(2) {
            return Err(Error::Config(format!(
                "duration {} s ({n} samples) is shorter than one PRBS period ({period} samples)",
                self.duration_s
            )));
        }
        if let Some(r) = &self.reference {
            if r.len() < n {
                return Err(Error::Config(format!(
                    "reference has {} samples, experiment needs {n}",
                    r.len()
                )));
            }
        }
        let split = self.split_index();
        if split == 0 || split >= n {
            return Err(Error::Config(format!("split index {split} not inside 1..{n}")));
        }
        Ok(())
    }

    pub fn split_index(&self) -> usize {
        (self.split_fraction * self.n_samples() as f64).round() as usize
    }
}

/// Aligned excitation/response record for one axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// Torque seen by the identified block: rate-loop output plus PRBS.
    pub u: Signal,
    /// Measured body rate on the excited axis.
    pub y: Signal,
    pub axis: Axis,
    /// First validation sample.
    pub split: usize,
}

impl Dataset {
    pub fn new(u: Signal, y: Signal, axis: Axis, split: usize) -> Result<Self> {
        if u.len() != y.len() || u.len() < 2 {
            return Err(Error::Argument(format!(
                "dataset needs equal-length u/y with >= 2 samples, got {} and {}",
                u.len(),
                y.len()
            )));
        }
        if u.dt() != y.dt() {
            return Err(Error::Argument("u and y sample periods differ".into()));
        }
        if split == 0 || split >= u.len() {
            return Err(Error::Argument(format!("split {split} not inside 1..{}", u.len())));
        }
        Ok(Self { u, y, axis, split })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.u.dt()
    }
}

/// Extremes observed over a closed-loop run.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LoopExtremes {
    pub max_angle: f64,
    pub max_rate: f64,
}

fn simulate_loop(
    config: &ExperimentConfig,
    noise: NoiseSpec,
) -> Result<(Vec<f64>, Vec<f64>, LoopExtremes)> {
    let n = config.n_samples();
    let axis = config.axis.index();
    let prbs = signals::generate_prbs(&PrbsSpec { n_periods: 1, ..config.prbs.clone() })?;
    let prbs = prbs.samples();
    let params = &config.plant;
    let dt = config.dt;

    let mut stream = NoiseStream::new(noise);
    let mut state = PlantState::default();
    let mut rate_ctl = [RateController::default(); 3];
    let mut meas = plant::measure(&state, &mut stream);
    let mut u = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut extremes = LoopExtremes::default();

    for k in 0..n {
        let angles = state.angles();
        let rates = meas.rates();
        let mut torques = [0.0; 3];
        for i in 0..3 {
            let gains = &config.gains.axes[i];
            let reference = match (&config.reference, i == axis) {
                (Some(r), true) => r.samples()[k],
                _ => 0.0,
            };
            let rate_cmd = angle_controller_step(reference, angles[i], gains);
            torques[i] = rate_ctl[i].step(rate_cmd, rates[i], gains, dt);
        }
        torques[axis] += prbs[k % prbs.len()];
        let tilt = state.phi.cos() * state.theta.cos();
        let input = ControlInput { u1: params.hover_thrust() / tilt, torques };

        state = plant::step(&state, &input, params, dt, &mut stream).map_err(|e| {
            Error::Unstable { sample: k, reason: e.to_string() }
        })?;
        let max_angle = state.angles().iter().fold(0.0f64, |m, a| m.max(a.abs()));
        if max_angle >= ANGLE_GUARD_RAD {
            return Err(Error::Unstable {
                sample: k,
                reason: format!("attitude {max_angle:.3} rad exceeds the 45 deg guard"),
            });
        }
        extremes.max_angle = extremes.max_angle.max(max_angle);
        extremes.max_rate = state.rates().iter().fold(extremes.max_rate, |m, r| m.max(r.abs()));

        meas = plant::measure(&state, &mut stream);
        u.push(torques[axis]);
        y.push(meas.rates()[axis]);
    }
    Ok((u, y, extremes))
}

/// Noise-free rehearsal of the loop; fails if the attitude guard trips.
pub fn dry_run(config: &ExperimentConfig) -> Result<LoopExtremes> {
    config.validate()?;
    let quiet = NoiseSpec { meas_std: 0.0, dist_std: 0.0, seed: config.noise.seed };
    simulate_loop(config, quiet).map(|(_, _, e)| e)
}

/// Closed-loop identification run on the configured axis. Records
/// `(u(k), y(k+1))` pairs: the torque applied during step k and the rate
/// measured after it.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Dataset> {
    run_experiment_with_extremes(config).map(|(d, _)| d)
}

pub fn run_experiment_with_extremes(config: &ExperimentConfig) -> Result<(Dataset, LoopExtremes)> {
    dry_run(config)?;
    let (u, y, extremes) = simulate_loop(config, config.noise)?;
    let dataset = Dataset::new(
        Signal::new(u, config.dt)?,
        Signal::new(y, config.dt)?,
        config.axis,
        config.split_index(),
    )?;
    Ok((dataset, extremes))
}
