//! Flat `key = value` experiment file.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::control::{Axis, CascadeGains, ExperimentConfig};
use crate::error::{Error, Result};
use crate::narx::{Activation, Architecture, DelayConfig};
use crate::plant::{NoiseSpec, QuadrotorParams};
use crate::signals::{self, BandSpec, PrbsSpec};
use crate::train::{Algorithm, TrainingOptions};

const REQUIRED: &[&str] = &["axis", "duration_s", "arch"];

const KNOWN: &[&str] = &[
    "axis",
    "duration_s",
    "dt",
    "seed",
    "split_fraction",
    "out_dir",
    // plant
    "mass",
    "ix",
    "iy",
    "iz",
    "torque_limit",
    "thrust_limit",
    "motor_tau_s",
    "g",
    // noise
    "meas_std",
    "dist_std",
    // cascade gains
    "kp_angle",
    "kp_rate",
    "ki_rate",
    "rate_cmd_limit",
    "integrator_limit",
    // excitation
    "band_min",
    "band_max",
    "prbs_amplitude",
    "prbs_order",
    "prbs_bit_samples",
    "prbs_seed",
    // model
    "arch",
    "na",
    "nb",
    "hidden",
    "layers",
    "act1",
    "act2",
    // training
    "algorithm",
    "max_epochs",
    "patience",
    "lm_lambda0",
    "lm_lambda_factor",
    "learning_rate",
    "gradient_check",
];

/// Which axes an `excite` run covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxisSelection {
    One(Axis),
    All,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub arch: Architecture,
    pub delays: DelayConfig,
    pub hidden_acts: Vec<Activation>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub axes: AxisSelection,
    /// Experiment for the first selected axis; see [`RunConfig::experiment_for`].
    pub experiment: ExperimentConfig,
    pub model: ModelSpec,
    pub training: TrainingOptions,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// SHA-256 of the effective settings.
    pub digest: String,
}

impl RunConfig {
    /// Experiment for `axis`; noise seeds differ per axis.
    pub fn experiment_for(&self, axis: Axis) -> ExperimentConfig {
        let mut e = self.experiment.clone();
        e.axis = axis;
        if self.axes == AxisSelection::All {
            e.noise.seed = self.seed.wrapping_add(axis.index() as u64);
        }
        e
    }
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.map.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn parse<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|_| Error::ConfigLine {
                line,
                msg: format!("{key}: expected {what}, got '{v}'"),
            }),
        }
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.parse::<f64>(key, "a number")?.unwrap_or(default);
        if !v.is_finite() {
            return Err(Error::ConfigLine {
                line: self.raw(key).map(|r| r.0).unwrap_or(0),
                msg: format!("{key}: value must be finite"),
            });
        }
        Ok(v)
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.parse::<usize>(key, "a non-negative integer")?.unwrap_or(default))
    }

    fn at_line<T>(&self, key: &str, r: Result<T>) -> Result<T> {
        r.map_err(|err| match self.raw(key) {
            Some((line, _)) => Error::ConfigLine { line, msg: err.to_string() },
            None => err,
        })
    }
}

fn parse_entries(text: &str) -> Result<Entries> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content.split_once('=').ok_or_else(|| Error::ConfigLine {
            line,
            msg: format!("expected 'key = value', got '{content}'"),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if !KNOWN.contains(&k) {
            return Err(Error::ConfigLine { line, msg: format!("unknown key '{k}'") });
        }
        if v.is_empty() {
            return Err(Error::ConfigLine { line, msg: format!("{k}: empty value") });
        }
        if map.insert(k.to_string(), (line, v.to_string())).is_some() {
            return Err(Error::ConfigLine { line, msg: format!("duplicate key '{k}'") });
        }
    }
    for key in REQUIRED {
        if !map.contains_key(*key) {
            return Err(Error::Config(format!("missing required key '{key}'")));
        }
    }
    Ok(Entries { map })
}

/// Parse an experiment file. `seed_override` replaces the `seed` key.
pub fn parse_config(text: &str, seed_override: Option<u64>) -> Result<RunConfig> {
    let e = parse_entries(text)?;

    let (axis_line, axis_raw) = e.raw("axis").expect("required");
    let axes = match axis_raw {
        "all" => AxisSelection::All,
        other => AxisSelection::One(
            other.parse().map_err(|err: Error| Error::ConfigLine { line: axis_line, msg: err.to_string() })?,
        ),
    };
    let first_axis = match axes {
        AxisSelection::One(a) => a,
        AxisSelection::All => Axis::Roll,
    };
    let seed = match seed_override {
        Some(s) => s,
        None => e.parse::<u64>("seed", "an unsigned integer")?.unwrap_or(1),
    };

    let d = QuadrotorParams::default();
    let torque_limit = e.f64_or("torque_limit", d.torque_limits[0])?;
    let plant = QuadrotorParams {
        mass: e.f64_or("mass", d.mass)?,
        ix: e.f64_or("ix", d.ix)?,
        iy: e.f64_or("iy", d.iy)?,
        iz: e.f64_or("iz", d.iz)?,
        torque_limits: [torque_limit; 3],
        thrust_limit: e.f64_or("thrust_limit", d.thrust_limit)?,
        motor_tau_s: e.f64_or("motor_tau_s", d.motor_tau_s)?,
        g: e.f64_or("g", d.g)?,
    };

    let mut gains = CascadeGains::default();
    for g in &mut gains.axes {
        g.kp_angle = e.f64_or("kp_angle", g.kp_angle)?;
        g.kp_rate = e.f64_or("kp_rate", g.kp_rate)?;
        g.ki_rate = e.f64_or("ki_rate", g.ki_rate)?;
        g.rate_cmd_limit = e.f64_or("rate_cmd_limit", g.rate_cmd_limit)?;
        g.integrator_limit = e.f64_or("integrator_limit", g.integrator_limit)?;
        g.torque_limit = torque_limit;
    }

    let noise = NoiseSpec {
        meas_std: e.f64_or("meas_std", 0.01)?,
        dist_std: e.f64_or("dist_std", 0.001)?,
        seed,
    };

    let dt = e.f64_or("dt", 0.004)?;
    let amplitude = e.f64_or("prbs_amplitude", 0.1 * torque_limit)?;
    let prbs = match (e.parse::<u32>("prbs_order", "an integer")?, e.parse::<usize>("prbs_bit_samples", "an integer")?) {
        (Some(order), Some(hold)) => {
            let r = PrbsSpec::with_order(order, hold, amplitude, dt);
            e.at_line("prbs_order", r)?
        }
        (None, None) => {
            let band = BandSpec::new(e.f64_or("band_min", 0.1)?, e.f64_or("band_max", 20.0)?);
            let band = e.at_line("band_min", band)?;
            e.at_line("band_max", signals::design_prbs_for_band(&band, dt, amplitude))?
        }
        _ => {
            return Err(Error::Config(
                "prbs_order and prbs_bit_samples must be given together".into(),
            ))
        }
    };
    let prbs = match e.parse::<u32>("prbs_seed", "an integer")? {
        Some(s) => PrbsSpec { seed: s, ..prbs },
        None => prbs,
    };

    let experiment = ExperimentConfig {
        axis: first_axis,
        duration_s: e.f64_or("duration_s", 0.0)?,
        dt,
        reference: None,
        prbs,
        gains,
        noise,
        plant,
        split_fraction: e.f64_or("split_fraction", 0.7)?,
    };
    e.at_line("duration_s", experiment.validate())?;

    let model = parse_model(&e)?;

    let training = TrainingOptions {
        algorithm: e.at_line(
            "algorithm",
            e.raw("algorithm").map(|(_, v)| v.parse()).unwrap_or(Ok(Algorithm::LevenbergMarquardt)),
        )?,
        max_epochs: e.usize_or("max_epochs", 200)?,
        patience: e.usize_or("patience", 6)?,
        lm_lambda0: e.f64_or("lm_lambda0", 1e-2)?,
        lm_lambda_factor: e.f64_or("lm_lambda_factor", 10.0)?,
        learning_rate: e.f64_or("learning_rate", 1e-3)?,
        seed,
        gradient_check: e.parse::<bool>("gradient_check", "true or false")?.unwrap_or(false),
    };
    training.validate()?;

    let out_dir = PathBuf::from(e.raw("out_dir").map(|(_, v)| v).unwrap_or("run"));

    let mut canonical = String::new();
    for (k, (_, v)) in &e.map {
        if k != "seed" {
            canonical.push_str(&format!("{k}={v}\n"));
        }
    }
    canonical.push_str(&format!("seed={seed}\n"));
    let digest = hex::encode(Sha256::digest(canonical.as_bytes()));

    Ok(RunConfig { axes, experiment, model, training, seed, out_dir, digest })
}

fn parse_model(e: &Entries) -> Result<ModelSpec> {
    let (arch_line, tag) = e.raw("arch").expect("required");
    let hidden: Vec<usize> = match tag {
        "linear" => vec![],
        "sigmoid" => vec![e.usize_or("hidden", 30)?],
        "cascade" => vec![e.usize_or("hidden", 20)?],
        "ffnn" => match e.raw("layers") {
            None => vec![10, 20],
            Some((line, v)) => v
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::ConfigLine { line, msg: format!("layers: expected 'h1,h2', got '{v}'") })?,
        },
        other => {
            return Err(Error::ConfigLine {
                line: arch_line,
                msg: format!("unknown arch '{other}' (linear|sigmoid|ffnn|cascade)"),
            })
        }
    };
    let arch = Architecture::from_tag(tag, &hidden)
        .map_err(|err| Error::ConfigLine { line: arch_line, msg: err.to_string() })?;
    let delays = e.at_line("na", DelayConfig::new(e.usize_or("na", 15)?, e.usize_or("nb", 7)?))?;
    let mut hidden_acts = arch.default_activations();
    for (i, key) in ["act1", "act2"].iter().enumerate() {
        if let Some((line, v)) = e.raw(key) {
            let act: Activation = v.parse().map_err(|err: Error| Error::ConfigLine { line, msg: err.to_string() })?;
            match hidden_acts.get_mut(i) {
                Some(slot) => *slot = act,
                None => {
                    return Err(Error::ConfigLine {
                        line,
                        msg: format!("{key}: architecture '{tag}' has no hidden layer {}", i + 1),
                    })
                }
            }
        }
    }
    Ok(ModelSpec { arch, delays, hidden_acts })
}
