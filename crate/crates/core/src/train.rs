//! Series-parallel training of NARX models: Levenberg-Marquardt on one-step
//! residuals (primary) or full-batch Adam, with validation checkpointing.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::control::Dataset;
use crate::error::{Error, Result};
use crate::narx::{backward, forward, DataTag, DelayConfig, NarxModel, Normalization, Workspace};
use crate::signals::Signal;

/// Damping beyond which a singular normal-equation system is an error.
pub const LAMBDA_MAX: f64 = 1e12;
/// Rejected damping trials before an LM epoch gives up.
const MAX_TRIALS: usize = 12;
/// Rows of the Jacobian held in memory at once.
const JACOBIAN_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    LevenbergMarquardt,
    Adam,
}

impl Algorithm {
    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::LevenbergMarquardt => "lm",
            Algorithm::Adam => "adam",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lm" | "levenberg_marquardt" => Ok(Algorithm::LevenbergMarquardt),
            "adam" => Ok(Algorithm::Adam),
            other => Err(Error::Config(format!("unknown training algorithm '{other}' (lm|adam)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingOptions {
    pub algorithm: Algorithm,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub lm_lambda0: f64,
    pub lm_lambda_factor: f64,
    pub learning_rate: f64,
    pub seed: u64,
    /// Compare analytic and finite-difference gradients before training.
    pub gradient_check: bool,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::LevenbergMarquardt,
            max_epochs: 200,
            patience: 6,
            lm_lambda0: 1e-2,
            lm_lambda_factor: 10.0,
            learning_rate: 1e-3,
            seed: 0,
            gradient_check: false,
        }
    }
}

impl TrainingOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs < 1 || self.patience < 1 {
            return Err(Error::Config("max_epochs and patience must be >= 1".into()));
        }
        if !(self.lm_lambda0 > 0.0 && self.lm_lambda_factor > 1.0 && self.learning_rate > 0.0) {
            return Err(Error::Config(
                "lm_lambda0 and learning_rate must be > 0, lm_lambda_factor > 1".into(),
            ));
        }
        Ok(())
    }

    /// Short stable hash of every option.
    pub fn digest(&self) -> String {
        let text = format!(
            "{}|{}|{}|{:e}|{:e}|{:e}|{}|{}",
            self.algorithm.tag(),
            self.max_epochs,
            self.patience,
            self.lm_lambda0,
            self.lm_lambda_factor,
            self.learning_rate,
            self.seed,
            self.gradient_check
        );
        hex::encode(&Sha256::digest(text.as_bytes())[..8])
    }
}

/// Contiguous piece of a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub u: Signal,
    pub y: Signal,
    /// Index of the first sample within the parent record.
    pub start: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// Estimation and validation segments at the dataset's split index.
pub fn split(data: &Dataset, delays: DelayConfig) -> Result<(Segment, Segment)> {
    let n = data.len();
    let s = data.split;
    let window = delays.window();
    if s <= window || n - s <= window {
        return Err(Error::Config(format!(
            "split at {s} of {n} samples leaves a segment no longer than the delay window {window}"
        )));
    }
    let est = Segment { u: data.u.slice(0..s), y: data.y.slice(0..s), start: 0 };
    let val = Segment { u: data.u.slice(s..n), y: data.y.slice(s..n), start: s };
    Ok((est, val))
}

/// Normalized regressor/target pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    n_in: usize,
    x: Vec<f64>,
    t: Vec<f64>,
}

impl Batch {
    pub fn new(n_in: usize, x: Vec<f64>, t: Vec<f64>) -> Result<Self> {
        if t.is_empty() || x.len() != n_in * t.len() {
            return Err(Error::Argument(format!(
                "batch needs {} regressor values for {} targets, got {}",
                n_in * t.len(),
                t.len(),
                x.len()
            )));
        }
        Ok(Self { n_in, x, t })
    }

    /// One row per predictable sample of the record, normalized with the
    /// model's statistics.
    pub fn from_record(model: &NarxModel, u: &[f64], y: &[f64]) -> Result<Self> {
        let d = model.delays();
        let window = d.window();
        if u.len() != y.len() || y.len() <= window {
            return Err(Error::Argument(format!(
                "record of {} samples cannot fill a delay window of {window}",
                y.len()
            )));
        }
        let n_in = d.regressor_len();
        let rows = y.len() - window;
        let mut x = vec![0.0; rows * n_in];
        let mut t = Vec::with_capacity(rows);
        for (r, k) in (window..y.len()).enumerate() {
            model.fill_regressor(y, u, k, &mut x[r * n_in..(r + 1) * n_in]);
            t.push(model.norm.y.normalize(y[k]));
        }
        Self::new(n_in, x, t)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_in..(i + 1) * self.n_in]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.t[i]
    }

    /// First `n` rows.
    pub fn head(&self, n: usize) -> Batch {
        let n = n.min(self.len());
        Batch { n_in: self.n_in, x: self.x[..n * self.n_in].to_vec(), t: self.t[..n].to_vec() }
    }
}

fn check_batch(model: &NarxModel, batch: &Batch) -> Result<()> {
    if batch.n_in != model.delays().regressor_len() {
        return Err(Error::Model(format!(
            "batch regressor length {} does not match model input {}",
            batch.n_in,
            model.delays().regressor_len()
        )));
    }
    Ok(())
}

/// Mean squared one-step error in normalized units.
pub fn batch_mse(model: &NarxModel, batch: &Batch) -> Result<f64> {
    check_batch(model, batch)?;
    let mut ws = Workspace::for_model(model);
    let sse: f64 = (0..batch.len())
        .map(|i| {
            let e = forward(model, batch.row(i), &mut ws) - batch.target(i);
            e * e
        })
        .sum();
    Ok(sse / batch.len() as f64)
}

/// MSE and its gradient with respect to the flat parameter vector.
pub fn loss_and_gradient(model: &NarxModel, batch: &Batch) -> Result<(f64, Vec<f64>)> {
    check_batch(model, batch)?;
    let p = model.n_params();
    let mut ws = Workspace::for_model(model);
    let mut row = vec![0.0; p];
    let mut grad = vec![0.0; p];
    let mut sse = 0.0;
    for i in 0..batch.len() {
        let x = batch.row(i);
        let e = forward(model, x, &mut ws) - batch.target(i);
        backward(model, x, &mut ws, &mut row);
        sse += e * e;
        for (g, r) in grad.iter_mut().zip(&row) {
            *g += e * r;
        }
    }
    let n = batch.len() as f64;
    for g in &mut grad {
        *g *= 2.0 / n;
    }
    Ok((sse / n, grad))
}

/// Central-difference gradient of [`batch_mse`], for self-checks.
pub fn finite_difference_gradient(model: &NarxModel, batch: &Batch, step: f64) -> Result<Vec<f64>> {
    let mut probe = model.clone();
    let base = model.params().to_vec();
    let mut grad = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        probe.params_mut()[i] = base[i] + step;
        let plus = batch_mse(&probe, batch)?;
        probe.params_mut()[i] = base[i] - step;
        let minus = batch_mse(&probe, batch)?;
        probe.params_mut()[i] = base[i];
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}

/// `JᵀJ` and `Jᵀe` for `J = ∂ŷ/∂θ` and residuals `e = t - ŷ`.
#[derive(Clone, Debug)]
pub struct NormalEquations {
    pub jtj: DMatrix<f64>,
    pub jte: DVector<f64>,
    pub mse: f64,
}

pub fn normal_equations(model: &NarxModel, batch: &Batch) -> Result<NormalEquations> {
    check_batch(model, batch)?;
    let p = model.n_params();
    let mut ws = Workspace::for_model(model);
    // column-major p×p; symmetric, so row/column order is immaterial
    let mut jtj = vec![0.0; p * p];
    let mut jte = vec![0.0; p];
    let mut chunk = vec![0.0; JACOBIAN_CHUNK * p];
    let mut sse = 0.0;
    let mut start = 0;
    while start < batch.len() {
        let rows = JACOBIAN_CHUNK.min(batch.len() - start);
        for r in 0..rows {
            let x = batch.row(start + r);
            let jrow = &mut chunk[r * p..(r + 1) * p];
            let e = batch.target(start + r) - forward(model, x, &mut ws);
            backward(model, x, &mut ws, jrow);
            sse += e * e;
            for (acc, j) in jte.iter_mut().zip(jrow.iter()) {
                *acc += j * e;
            }
        }
        // jtj += chunkᵀ · chunk, chunk is rows×p row-major
        unsafe {
            matrixmultiply::dgemm(
                p,
                rows,
                p,
                1.0,
                chunk.as_ptr(),
                1,
                p as isize,
                chunk.as_ptr(),
                p as isize,
                1,
                1.0,
                jtj.as_mut_ptr(),
                p as isize,
                1,
            );
        }
        start += rows;
    }
    Ok(NormalEquations {
        jtj: DMatrix::from_vec(p, p, jtj),
        jte: DVector::from_vec(jte),
        mse: sse / batch.len() as f64,
    })
}

/// Solve `(JᵀJ + λ·diag(JᵀJ))·δ = Jᵀe`. `None` when the damped system is
/// not positive definite.
pub fn solve_damped(ne: &NormalEquations, lambda: f64) -> Option<DVector<f64>> {
    let p = ne.jte.len();
    let max_diag = (0..p).map(|i| ne.jtj[(i, i)]).fold(0.0f64, f64::max);
    let floor = (max_diag * 1e-12).max(f64::MIN_POSITIVE);
    let mut a = ne.jtj.clone();
    for i in 0..p {
        a[(i, i)] += lambda * ne.jtj[(i, i)].max(floor);
    }
    let chol = a.cholesky()?;
    let delta = chol.solve(&ne.jte);
    delta.iter().all(|v| v.is_finite()).then_some(delta)
}

/// Solve at `lambda`, raising it by `factor` while the system is singular.
fn solve_escalating(ne: &NormalEquations, mut lambda: f64, factor: f64, epoch: usize) -> Result<(DVector<f64>, f64)> {
    loop {
        if let Some(d) = solve_damped(ne, lambda) {
            return Ok((d, lambda));
        }
        lambda *= factor;
        if lambda > LAMBDA_MAX {
            return Err(Error::Training {
                epoch,
                reason: format!("normal equations singular up to damping {LAMBDA_MAX:e}"),
            });
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmStep {
    /// Candidate parameters (the current ones when rejected).
    pub params: Vec<f64>,
    pub lambda: f64,
    pub accepted: bool,
    pub mse: f64,
    pub delta: Vec<f64>,
}

/// Single damped Gauss-Newton trial.
pub fn lm_step(model: &NarxModel, batch: &Batch, lambda: f64, factor: f64) -> Result<LmStep> {
    if !(lambda > 0.0) {
        return Err(Error::Argument(format!("lambda must be > 0, got {lambda}")));
    }
    let ne = normal_equations(model, batch)?;
    lm_trial(model, batch, &ne, lambda, factor, 0)
}

fn lm_trial(
    model: &NarxModel,
    batch: &Batch,
    ne: &NormalEquations,
    lambda: f64,
    factor: f64,
    epoch: usize,
) -> Result<LmStep> {
    let (delta, lambda) = solve_escalating(ne, lambda, factor, epoch)?;
    let mut candidate = model.clone();
    for (p, d) in candidate.params_mut().iter_mut().zip(delta.iter()) {
        *p += d;
    }
    let mse = batch_mse(&candidate, batch)?;
    let delta = delta.as_slice().to_vec();
    if mse.is_finite() && mse < ne.mse {
        Ok(LmStep { params: candidate.params().to_vec(), lambda: lambda / factor, accepted: true, mse, delta })
    } else {
        Ok(LmStep { params: model.params().to_vec(), lambda: lambda * factor, accepted: false, mse: ne.mse, delta })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    Patience,
    /// No damping level produced a decrease.
    Converged,
}

impl StopReason {
    pub fn tag(self) -> &'static str {
        match self {
            StopReason::MaxEpochs => "max_epochs",
            StopReason::Patience => "patience",
            StopReason::Converged => "converged",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingReport {
    /// Epoch 0 is the initial model.
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub stop: StopReason,
    pub wall_time_s: f64,
    pub seed: u64,
    pub options_digest: String,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Largest relative mismatch between analytic and central-difference
/// gradients, with magnitudes below `floor` treated as `floor`.
pub fn gradient_mismatch(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

fn diverged(epoch: usize, what: &str) -> Error {
    Error::Training { epoch, reason: format!("{what} is not finite") }
}

/// Fit `model` to `data`: normalization from the estimation segment, then
/// epochs of the chosen algorithm with the validation-best weights returned.
pub fn fit(model: &NarxModel, data: &Dataset, opts: &TrainingOptions) -> Result<(NarxModel, TrainingReport)> {
    opts.validate()?;
    let started = Instant::now();
    let (est, val) = split(data, model.delays())?;

    let mut model = model.clone();
    model.norm = Normalization::fit(est.u.samples(), est.y.samples())?;
    model.data_tag = Some(DataTag { axis: data.axis, dt: data.dt() });
    let train_batch = Batch::from_record(&model, est.u.samples(), est.y.samples())?;
    let val_batch = Batch::from_record(&model, val.u.samples(), val.y.samples())?;

    if opts.gradient_check {
        let probe = train_batch.head(64);
        let (_, analytic) = loss_and_gradient(&model, &probe)?;
        let numeric = finite_difference_gradient(&model, &probe, 1e-6)?;
        let worst = gradient_mismatch(&analytic, &numeric, 1e-4);
        if worst > 1e-5 {
            return Err(Error::Training {
                epoch: 0,
                reason: format!("gradient check failed: relative error {worst:e}"),
            });
        }
    }

    let train0 = batch_mse(&model, &train_batch)?;
    let val0 = batch_mse(&model, &val_batch)?;
    if !train0.is_finite() || !val0.is_finite() {
        return Err(diverged(0, "initial loss"));
    }
    let mut epochs = vec![EpochRecord { epoch: 0, train_mse: train0, val_mse: val0 }];
    let mut best = (0usize, val0, model.params().to_vec());
    let mut lambda = opts.lm_lambda0;
    let mut adam = Adam::new(model.n_params());
    let mut stop = StopReason::MaxEpochs;

    for epoch in 1..=opts.max_epochs {
        let train_mse = match opts.algorithm {
            Algorithm::LevenbergMarquardt => {
                let ne = normal_equations(&model, &train_batch)?;
                if !ne.mse.is_finite() {
                    return Err(diverged(epoch, "training loss"));
                }
                let mut outcome = None;
                for _ in 0..MAX_TRIALS {
                    let step = lm_trial(&model, &train_batch, &ne, lambda, opts.lm_lambda_factor, epoch)?;
                    lambda = step.lambda.clamp(f64::MIN_POSITIVE, LAMBDA_MAX);
                    if step.accepted {
                        model.set_params(&step.params)?;
                        outcome = Some(step.mse);
                        break;
                    }
                }
                match outcome {
                    Some(mse) => mse,
                    None => {
                        stop = StopReason::Converged;
                        break;
                    }
                }
            }
            Algorithm::Adam => {
                let (loss, grad) = loss_and_gradient(&model, &train_batch)?;
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(diverged(epoch, "training loss"));
                }
                adam.update(model.params_mut(), &grad, opts.learning_rate);
                batch_mse(&model, &train_batch)?
            }
        };
        let val_mse = batch_mse(&model, &val_batch)?;
        if !train_mse.is_finite() || !val_mse.is_finite() {
            return Err(diverged(epoch, "loss"));
        }
        epochs.push(EpochRecord { epoch, train_mse, val_mse });
        if val_mse < best.1 {
            best = (epoch, val_mse, model.params().to_vec());
        } else if epoch - best.0 >= opts.patience {
            stop = StopReason::Patience;
            break;
        }
    }

    model.set_params(&best.2)?;
    let report = TrainingReport {
        epochs,
        best_epoch: best.0,
        best_val_mse: best.1,
        stop,
        wall_time_s: started.elapsed().as_secs_f64(),
        seed: opts.seed,
        options_digest: opts.digest(),
    };
    Ok((model, report))
}

/// Validation MSE (normalized, series-parallel) of a fitted model on `data`,
/// computed exactly as during training.
pub fn validation_mse(model: &NarxModel, data: &Dataset) -> Result<f64> {
    let (_, val) = split(data, model.delays())?;
    batch_mse(model, &Batch::from_record(model, val.u.samples(), val.y.samples())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::Axis;
    use crate::narx::{init_weights, Architecture};

    fn single_neuron(w: f64, b: f64) -> NarxModel {
        let mut m = NarxModel::zeros(Architecture::Linear, DelayConfig::new(1, 1).unwrap()).unwrap();
        m.params_mut().copy_from_slice(&[w, 0.0, b]);
        m
    }

    #[test]
    fn single_neuron_gradient() {
        let m = single_neuron(1.0, 0.0);
        let batch = Batch::new(2, vec![1.0, 0.0], vec![0.0]).unwrap();
        let (loss, grad) = loss_and_gradient(&m, &batch).unwrap();
        assert_eq!(loss, 1.0);
        assert_eq!(grad[0], 2.0);
        assert_eq!(grad[2], 2.0);
    }

    #[test]
    fn perfect_model_has_zero_gradient() {
        let m = single_neuron(0.5, 0.25);
        let x = vec![1.0, 3.0, -2.0, 1.0, 0.5, 0.0];
        let t = x.chunks(2).map(|r| 0.5 * r[0] + 0.25).collect();
        let batch = Batch::new(2, x, t).unwrap();
        let (loss, grad) = loss_and_gradient(&m, &batch).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn zero_residual_step_is_zero() {
        let m = single_neuron(0.5, 0.25);
        let x = vec![1.0, 3.0, -2.0, 1.0, 0.5, 0.0];
        let t = x.chunks(2).map(|r| 0.5 * r[0] + 0.25).collect();
        let batch = Batch::new(2, x, t).unwrap();
        let step = lm_step(&m, &batch, 1e-3, 10.0).unwrap();
        assert!(step.delta.iter().all(|&d| d == 0.0));
        assert!(!step.accepted);
    }

    #[test]
    fn split_guards() {
        let u = Signal::new(vec![0.0; 1000], 0.01).unwrap();
        let d = Dataset::new(u.clone(), u.clone(), Axis::Roll, 700).unwrap();
        let (e, v) = split(&d, DelayConfig::new(2, 2).unwrap()).unwrap();
        assert_eq!((e.len(), v.len()), (700, 300));
        let mut joined = e.u.samples().to_vec();
        joined.extend_from_slice(v.u.samples());
        assert_eq!(joined, u.samples());
        let d = Dataset::new(u.clone(), u, Axis::Roll, 10).unwrap();
        assert!(matches!(split(&d, DelayConfig::new(15, 7).unwrap()), Err(Error::Config(_))));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for arch in [
            Architecture::SigmoidSingle { hidden: 4 },
            Architecture::FeedForwardTwo { h1: 3, h2: 4 },
            Architecture::CascadeForward { hidden: 3 },
        ] {
            let delays = DelayConfig::new(3, 2).unwrap();
            let m = init_weights(arch, delays, 11).unwrap();
            let x: Vec<f64> = (0..5 * 12).map(|i| ((i * 37 % 17) as f64 - 8.0) / 6.0).collect();
            let t: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
            let batch = Batch::new(5, x, t).unwrap();
            let (_, g) = loss_and_gradient(&m, &batch).unwrap();
            let fd = finite_difference_gradient(&m, &batch, 1e-6).unwrap();
            assert!(gradient_mismatch(&g, &fd, 1e-4) < 1e-5, "{arch}");
        }
    }
}
