#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use narx_sysid::control::{Axis, Dataset};
use narx_sysid::narx::{Architecture, DelayConfig, NarxModel};
use narx_sysid::signals::{generate_prbs, PrbsSpec, Signal};

pub const DT: f64 = 0.004;
/// y(k) = 1.5 y(k-1) - 0.7 y(k-2) + u(k-1) + 0.5 u(k-2)
pub const ARX: [f64; 4] = [1.5, -0.7, 1.0, 0.5];

pub fn arx_input(n: usize, seed: u32) -> Vec<f64> {
    let spec = PrbsSpec { seed, ..PrbsSpec::with_order(9, 1, 1.0, DT).unwrap() };
    let p = generate_prbs(&spec).unwrap();
    (0..n).map(|k| p.samples()[k % p.len()]).collect()
}

/// Direct recursion of the ARX law from zero initial conditions.
pub fn arx_output(u: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; u.len()];
    for k in 2..u.len() {
        y[k] = ARX[0] * y[k - 1] + ARX[1] * y[k - 2] + ARX[2] * u[k - 1] + ARX[3] * u[k - 2];
    }
    y
}

pub fn arx_dataset(n: usize, split: usize) -> Dataset {
    let u = arx_input(n, 1);
    let y = arx_output(&u);
    Dataset::new(Signal::new(u, DT).unwrap(), Signal::new(y, DT).unwrap(), Axis::Roll, split).unwrap()
}

/// Identity-activation network whose weights are the ARX coefficients.
pub fn arx_replica() -> NarxModel {
    let mut m = NarxModel::zeros(Architecture::Linear, DelayConfig::new(2, 2).unwrap()).unwrap();
    m.weights_mut(0).copy_from_slice(&ARX);
    m
}

/// Closed-form least squares `[a1, a2, b1, b2, c]` over samples `2..n`.
pub fn arx_least_squares(u: &[f64], y: &[f64]) -> Vec<f64> {
    let rows = y.len() - 2;
    let phi = DMatrix::from_fn(rows, 5, |i, j| {
        let k = i + 2;
        match j {
            0 => y[k - 1],
            1 => y[k - 2],
            2 => u[k - 1],
            3 => u[k - 2],
            _ => 1.0,
        }
    });
    let t = DVector::from_iterator(rows, y[2..].iter().copied());
    let sol = phi.svd(true, true).solve(&t, 1e-14).unwrap();
    sol.iter().copied().collect()
}

/// Physical-unit affine coefficients of a linear model with `na = nb = 2`:
/// `[a1, a2, b1, b2, c]`, probed through normalization and forward pass.
pub fn physical_coefficients(m: &NarxModel) -> Vec<f64> {
    let eval = |x: [f64; 4]| {
        let xn = vec![
            m.norm.y.normalize(x[0]),
            m.norm.y.normalize(x[1]),
            m.norm.u.normalize(x[2]),
            m.norm.u.normalize(x[3]),
        ];
        m.norm.y.denormalize(m.forward(&narx_sysid::narx::Regressor(xn)).unwrap())
    };
    let c = eval([0.0; 4]);
    let mut out: Vec<f64> = (0..4)
        .map(|i| {
            let mut x = [0.0; 4];
            x[i] = 1.0;
            eval(x) - c
        })
        .collect();
    out.push(c);
    out
}

/// Record whose estimation half follows `y(k) = u(k-1)` and validation half
/// `y(k) = 0.3 u(k-1)`: validation error falls, then rises, as a linear
/// model trained from zero moves toward the estimation law.
pub fn early_stopping_fixture() -> Dataset {
    let n = 2000;
    let u = arx_input(n, 5);
    let y: Vec<f64> = (0..n)
        .map(|k| match k {
            0 => 0.0,
            k if k < n / 2 => u[k - 1],
            k => 0.3 * u[k - 1],
        })
        .collect();
    Dataset::new(Signal::new(u, DT).unwrap(), Signal::new(y, DT).unwrap(), Axis::Roll, n / 2).unwrap()
}

pub fn early_stopping_options(max_epochs: usize, patience: usize) -> narx_sysid::train::TrainingOptions {
    narx_sysid::train::TrainingOptions {
        algorithm: narx_sysid::train::Algorithm::Adam,
        learning_rate: 0.01,
        max_epochs,
        patience,
        ..Default::default()
    }
}

pub fn early_stopping_model() -> NarxModel {
    NarxModel::zeros(Architecture::Linear, DelayConfig::new(1, 1).unwrap()).unwrap()
}
