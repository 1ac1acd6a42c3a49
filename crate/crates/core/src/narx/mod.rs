//! NARX models: regressors, the supported network architectures,
//! series-parallel prediction and parallel (free-run) simulation.
//!
//! The regressor for predicting `y(k)` is
//! `[y(k-1), ..., y(k-na), u(k-1), ..., u(k-nb)]`, each channel z-scored with
//! the model's [`Normalization`]. Networks see and produce normalized values.

mod network;
mod persist;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{Axis, Dataset};
use crate::error::{Error, Result};
use crate::signals::Signal;

pub use network::{backward, forward, LayerInput, LayerShape, Workspace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Logistic,
    Tanh,
    /// `exp(-n^2)`
    RadialBasis,
}

impl Activation {
    #[inline]
    pub fn apply(self, n: f64) -> f64 {
        match self {
            Activation::Identity => n,
            Activation::Logistic => 1.0 / (1.0 + (-n).exp()),
            Activation::Tanh => n.tanh(),
            Activation::RadialBasis => (-n * n).exp(),
        }
    }

    /// df/dn given the pre-activation `n` and output `a = f(n)`.
    #[inline]
    pub fn derivative(self, n: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Logistic => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
            Activation::RadialBasis => -2.0 * n * a,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Logistic => "logistic",
            Activation::Tanh => "tanh",
            Activation::RadialBasis => "radbas",
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "linear" => Ok(Activation::Identity),
            "logistic" | "sigmoid" => Ok(Activation::Logistic),
            "tanh" => Ok(Activation::Tanh),
            "radbas" => Ok(Activation::RadialBasis),
            other => Err(Error::Model(format!("unknown activation '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Architecture {
    /// Affine map of the regressor.
    Linear,
    SigmoidSingle { hidden: usize },
    FeedForwardTwo { h1: usize, h2: usize },
    /// One hidden layer; the output layer also sees the raw regressor.
    CascadeForward { hidden: usize },
}

impl Architecture {
    pub fn tag(&self) -> &'static str {
        match self {
            Architecture::Linear => "linear",
            Architecture::SigmoidSingle { .. } => "sigmoid",
            Architecture::FeedForwardTwo { .. } => "ffnn",
            Architecture::CascadeForward { .. } => "cascade",
        }
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        match *self {
            Architecture::Linear => vec![],
            Architecture::SigmoidSingle { hidden } | Architecture::CascadeForward { hidden } => {
                vec![hidden]
            }
            Architecture::FeedForwardTwo { h1, h2 } => vec![h1, h2],
        }
    }

    pub fn default_activations(&self) -> Vec<Activation> {
        match self {
            Architecture::Linear => vec![],
            Architecture::SigmoidSingle { .. } => vec![Activation::Logistic],
            Architecture::FeedForwardTwo { .. } => vec![Activation::Tanh, Activation::RadialBasis],
            Architecture::CascadeForward { .. } => vec![Activation::Tanh],
        }
    }

    pub fn from_tag(tag: &str, hidden: &[usize]) -> Result<Self> {
        let arch = match (tag, hidden) {
            ("linear", []) => Architecture::Linear,
            ("sigmoid", [h]) => Architecture::SigmoidSingle { hidden: *h },
            ("ffnn", [h1, h2]) => Architecture::FeedForwardTwo { h1: *h1, h2: *h2 },
            ("cascade", [h]) => Architecture::CascadeForward { hidden: *h },
            _ => {
                return Err(Error::Model(format!(
                    "architecture '{tag}' does not take hidden layers {hidden:?}"
                )))
            }
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_sizes().contains(&0) {
            return Err(Error::Model("hidden layer sizes must be >= 1".into()));
        }
        Ok(())
    }

    fn layer_shapes(&self, n_in: usize, hidden_acts: &[Activation]) -> Vec<LayerShape> {
        let mut shapes = Vec::new();
        let mut offset = 0;
        let mut push = |rows, cols, input, act| {
            let s = LayerShape { rows, cols, input, act, offset };
            offset += s.n_params();
            shapes.push(s);
        };
        match *self {
            Architecture::Linear => push(1, n_in, LayerInput::Previous, Activation::Identity),
            Architecture::SigmoidSingle { hidden } => {
                push(hidden, n_in, LayerInput::Previous, hidden_acts[0]);
                push(1, hidden, LayerInput::Previous, Activation::Identity);
            }
            Architecture::FeedForwardTwo { h1, h2 } => {
                push(h1, n_in, LayerInput::Previous, hidden_acts[0]);
                push(h2, h1, LayerInput::Previous, hidden_acts[1]);
                push(1, h2, LayerInput::Previous, Activation::Identity);
            }
            Architecture::CascadeForward { hidden } => {
                push(hidden, n_in, LayerInput::Previous, hidden_acts[0]);
                push(1, n_in + hidden, LayerInput::RegressorAndPrevious, Activation::Identity);
            }
        }
        shapes
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:?}", self.tag(), self.hidden_sizes())
    }
}

/// Output (`na`) and input (`nb`) delay orders. No noise delays.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DelayConfig {
    pub na: usize,
    pub nb: usize,
}

impl DelayConfig {
    pub fn new(na: usize, nb: usize) -> Result<Self> {
        if na < 1 || nb < 1 {
            return Err(Error::Model(format!("delay orders must be >= 1, got na={na} nb={nb}")));
        }
        Ok(Self { na, nb })
    }

    pub const fn noise_delays(&self) -> usize {
        0
    }

    pub fn regressor_len(&self) -> usize {
        self.na + self.nb
    }

    /// Samples at the start of a record without a complete regressor.
    pub fn window(&self) -> usize {
        self.na.max(self.nb)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Channel {
    pub mean: f64,
    pub std: f64,
}

impl Channel {
    pub const IDENTITY: Channel = Channel { mean: 0.0, std: 1.0 };

    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Model("cannot fit normalization on an empty segment".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 0.0 && std.is_finite()) {
            return Err(Error::Model("normalization std must be > 0 (constant channel)".into()));
        }
        Ok(Self { mean, std })
    }

    #[inline]
    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    #[inline]
    pub fn denormalize(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub u: Channel,
    pub y: Channel,
}

impl Default for Normalization {
    fn default() -> Self {
        Self { u: Channel::IDENTITY, y: Channel::IDENTITY }
    }
}

impl Normalization {
    pub fn fit(u: &[f64], y: &[f64]) -> Result<Self> {
        Ok(Self { u: Channel::fit(u)?, y: Channel::fit(y)? })
    }
}

/// Axis and sample period of the data a model was trained on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DataTag {
    pub axis: Axis,
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NarxModel {
    arch: Architecture,
    delays: DelayConfig,
    hidden_acts: Vec<Activation>,
    layers: Vec<LayerShape>,
    params: Vec<f64>,
    pub norm: Normalization,
    pub data_tag: Option<DataTag>,
}

impl NarxModel {
    /// All-zero parameters with the architecture's default activations.
    pub fn zeros(arch: Architecture, delays: DelayConfig) -> Result<Self> {
        Self::with_activations(arch, delays, arch.default_activations())
    }

    pub fn with_activations(
        arch: Architecture,
        delays: DelayConfig,
        hidden_acts: Vec<Activation>,
    ) -> Result<Self> {
        arch.validate()?;
        DelayConfig::new(delays.na, delays.nb)?;
        if hidden_acts.len() != arch.hidden_sizes().len() {
            return Err(Error::Model(format!(
                "{arch} needs {} hidden activations, got {}",
                arch.hidden_sizes().len(),
                hidden_acts.len()
            )));
        }
        let layers = arch.layer_shapes(delays.regressor_len(), &hidden_acts);
        let n = layers.iter().map(LayerShape::n_params).sum();
        Ok(Self {
            arch,
            delays,
            hidden_acts,
            layers,
            params: vec![0.0; n],
            norm: Normalization::default(),
            data_tag: None,
        })
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn delays(&self) -> DelayConfig {
        self.delays
    }

    pub fn hidden_activations(&self) -> &[Activation] {
        &self.hidden_acts
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Model(format!(
                "parameter vector has {} entries, model needs {}",
                params.len(),
                self.params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Weight matrix (row-major) of layer `index`, 0-based.
    pub fn weights(&self, index: usize) -> &[f64] {
        self.layers[index].weights(&self.params)
    }

    pub fn biases(&self, index: usize) -> &[f64] {
        self.layers[index].biases(&self.params)
    }

    fn layer_slices_mut(&mut self, index: usize) -> (&mut [f64], &mut [f64]) {
        let s = self.layers[index];
        self.params[s.offset..s.offset + s.n_params()].split_at_mut(s.rows * s.cols)
    }

    pub fn weights_mut(&mut self, index: usize) -> &mut [f64] {
        self.layer_slices_mut(index).0
    }

    pub fn biases_mut(&mut self, index: usize) -> &mut [f64] {
        self.layer_slices_mut(index).1
    }

    /// Network output for an already normalized regressor.
    pub fn forward(&self, x: &Regressor) -> Result<f64> {
        if x.0.len() != self.delays.regressor_len() {
            return Err(Error::Model(format!(
                "regressor length {} does not match model input {}",
                x.0.len(),
                self.delays.regressor_len()
            )));
        }
        let mut ws = Workspace::for_model(self);
        Ok(forward(self, &x.0, &mut ws))
    }

    /// Fill `x` with the normalized regressor predicting sample `k`.
    #[inline]
    pub(crate) fn fill_regressor(&self, y: &[f64], u: &[f64], k: usize, x: &mut [f64]) {
        let na = self.delays.na;
        for i in 0..na {
            x[i] = self.norm.y.normalize(y[k - 1 - i]);
        }
        for j in 0..self.delays.nb {
            x[na + j] = self.norm.u.normalize(u[k - 1 - j]);
        }
    }
}

/// Regressor vector `[y(k-1)..y(k-na), u(k-1)..u(k-nb)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Regressor(pub Vec<f64>);

impl Regressor {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Build a regressor from chronological histories (last element is the
/// most recent sample).
pub fn build_regressor(y_hist: &[f64], u_hist: &[f64], delays: DelayConfig) -> Result<Regressor> {
    if y_hist.len() < delays.na || u_hist.len() < delays.nb {
        return Err(Error::Argument(format!(
            "need {} outputs and {} inputs of history, got {} and {}",
            delays.na,
            delays.nb,
            y_hist.len(),
            u_hist.len()
        )));
    }
    let x = y_hist.iter().rev().take(delays.na).chain(u_hist.iter().rev().take(delays.nb));
    Ok(Regressor(x.copied().collect()))
}

/// `f(sum(inputs * weights) + bias)`
pub fn neuron(inputs: &[f64], weights: &[f64], bias: f64, act: Activation) -> Result<f64> {
    if inputs.len() != weights.len() {
        return Err(Error::Argument(format!(
            "neuron has {} inputs but {} weights",
            inputs.len(),
            weights.len()
        )));
    }
    let n = inputs.iter().zip(weights).fold(bias, |s, (a, b)| s + a * b);
    Ok(act.apply(n))
}

/// Predictions aligned with a record: `values[i]` estimates `y[offset + i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub offset: usize,
    pub values: Vec<f64>,
}

impl Prediction {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The measured samples these predictions line up with.
    pub fn targets<'a>(&self, y: &'a [f64]) -> &'a [f64] {
        &y[self.offset..self.offset + self.values.len()]
    }
}

fn check_record(model: &NarxModel, u: &[f64], y: &[f64]) -> Result<()> {
    if u.len() != y.len() {
        return Err(Error::Argument(format!("u has {} samples, y has {}", u.len(), y.len())));
    }
    let window = model.delays.window();
    if y.len() <= window {
        return Err(Error::Argument(format!(
            "record of {} samples is not longer than the delay window {window}",
            y.len()
        )));
    }
    Ok(())
}

/// One-step-ahead (series-parallel) predictions from measured outputs.
pub fn predict_sp_record(model: &NarxModel, u: &[f64], y: &[f64]) -> Result<Prediction> {
    check_record(model, u, y)?;
    let window = model.delays.window();
    let mut ws = Workspace::for_model(model);
    let mut x = vec![0.0; model.delays.regressor_len()];
    let values = (window..y.len())
        .map(|k| {
            model.fill_regressor(y, u, k, &mut x);
            model.norm.y.denormalize(forward(model, &x, &mut ws))
        })
        .collect();
    Ok(Prediction { offset: window, values })
}

/// Series-parallel predictions over a whole dataset.
pub fn predict_sp(model: &NarxModel, data: &Dataset) -> Result<Prediction> {
    predict_sp_record(model, data.u.samples(), data.y.samples())
}

/// Free-run (parallel) simulation driven by `u`. The first `window` outputs
/// are copied from `y_init`; later regressors use the model's own outputs.
pub fn simulate_p(model: &NarxModel, u: &Signal, y_init: &[f64]) -> Result<Signal> {
    let window = model.delays.window();
    if y_init.len() < window {
        return Err(Error::Argument(format!(
            "free run needs {window} initial outputs, got {}",
            y_init.len()
        )));
    }
    let dt = u.dt();
    let u = u.samples();
    if u.len() <= window {
        return Err(Error::Argument(format!(
            "input of {} samples is not longer than the delay window {window}",
            u.len()
        )));
    }
    let mut ws = Workspace::for_model(model);
    let mut x = vec![0.0; model.delays.regressor_len()];
    let mut y = Vec::with_capacity(u.len());
    y.extend_from_slice(&y_init[..window]);
    for k in window..u.len() {
        model.fill_regressor(&y, u, k, &mut x);
        let v = model.norm.y.denormalize(forward(model, &x, &mut ws));
        if !v.is_finite() {
            return Err(Error::Model(format!("free-run simulation diverged at sample {k}")));
        }
        y.push(v);
    }
    Signal::new(y, dt)
}

/// Radial-basis biases are drawn from `±RADBAS_BIAS_SPREAD` so units start on
/// the slopes of `exp(-n^2)` instead of its flat peak.
pub const RADBAS_BIAS_SPREAD: f64 = 2.0;

/// Uniform initialization in `±1/sqrt(fan_in)` per layer, identity
/// normalization.
pub fn init_weights(arch: Architecture, delays: DelayConfig, seed: u64) -> Result<NarxModel> {
    init_weights_with(arch, delays, arch.default_activations(), seed)
}

pub fn init_weights_with(
    arch: Architecture,
    delays: DelayConfig,
    hidden_acts: Vec<Activation>,
    seed: u64,
) -> Result<NarxModel> {
    let mut model = NarxModel::with_activations(arch, delays, hidden_acts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for l in 0..model.layers.len() {
        let bound = 1.0 / (model.layers[l].cols as f64).sqrt();
        let bias_bound = match model.layers[l].act {
            Activation::RadialBasis => RADBAS_BIAS_SPREAD,
            _ => bound,
        };
        let (w, b) = model.layer_slices_mut(l);
        for v in w.iter_mut() {
            *v = rng.random_range(-bound..=bound);
        }
        for v in b.iter_mut() {
            *v = rng.random_range(-bias_bound..=bias_bound);
        }
    }
    Ok(model)
}
