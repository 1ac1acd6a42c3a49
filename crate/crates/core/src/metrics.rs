//! Fit percentage, MSE, Akaike FPE, Pearson correlation and residual
//! whiteness. All functions take physical-unit slices already aligned to the
//! valid (post-window) samples.

use crate::error::{Error, Result};

fn check_pair(y: &[f64], y_hat: &[f64], min_len: usize) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::Argument(format!(
            "signals differ in length: {} vs {}",
            y.len(),
            y_hat.len()
        )));
    }
    if y.len() < min_len {
        return Err(Error::Argument(format!("need at least {min_len} samples, got {}", y.len())));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat, 1)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

/// `100 * (1 - |y - y_hat| / |y - mean(y)|)`
pub fn fit_percent(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat, 1)?;
    let m = mean(y);
    let err = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let spread = y.iter().map(|a| (a - m) * (a - m)).sum::<f64>().sqrt();
    if spread == 0.0 {
        return Err(Error::Metric("fit percentage of a constant signal".into()));
    }
    Ok(100.0 * (1.0 - err / spread))
}

/// Akaike's final prediction error.
pub fn fpe(mse_est: f64, n_params: usize, n_samples: usize) -> Result<f64> {
    if n_params >= n_samples {
        return Err(Error::Metric(format!(
            "FPE needs fewer parameters ({n_params}) than samples ({n_samples})"
        )));
    }
    if !(mse_est >= 0.0) {
        return Err(Error::Argument(format!("mse must be >= 0, got {mse_est}")));
    }
    let ratio = n_params as f64 / n_samples as f64;
    Ok(mse_est * (1.0 + ratio) / (1.0 - ratio))
}

/// Pearson product-moment correlation.
pub fn correlation(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat, 2)?;
    let (my, mh) = (mean(y), mean(y_hat));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in y.iter().zip(y_hat) {
        let (da, db) = (a - my, b - mh);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Metric("correlation with a constant signal".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Least-squares line `y_hat ≈ slope * y + intercept`, used for scatter plots.
pub fn least_squares_line(y: &[f64], y_hat: &[f64]) -> Result<(f64, f64)> {
    check_pair(y, y_hat, 2)?;
    let (my, mh) = (mean(y), mean(y_hat));
    let sxy: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - my) * (b - mh)).sum();
    let sxx: f64 = y.iter().map(|a| (a - my) * (a - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Metric("regression line on a constant signal".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, mh - slope * my))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualAutocorr {
    /// Normalized autocorrelation at lags 0..=max_lag.
    pub lags: Vec<f64>,
    /// Half-width of the 95% whiteness band, `1.96 / sqrt(N)`.
    pub band: f64,
}

impl ResidualAutocorr {
    pub fn inside_band(&self) -> usize {
        self.lags[1..].iter().filter(|r| r.abs() <= self.band).count()
    }
}

pub fn residual_autocorr(residuals: &[f64], max_lag: usize) -> Result<ResidualAutocorr> {
    let n = residuals.len();
    if n == 0 {
        return Err(Error::Argument("autocorrelation of empty residuals".into()));
    }
    if max_lag >= n {
        return Err(Error::Argument(format!("max_lag {max_lag} must be < length {n}")));
    }
    let m = mean(residuals);
    let c: Vec<f64> = residuals.iter().map(|e| e - m).collect();
    let c0: f64 = c.iter().map(|e| e * e).sum();
    if c0 == 0.0 {
        return Err(Error::Metric("autocorrelation of constant residuals".into()));
    }
    let lags = (0..=max_lag)
        .map(|lag| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / c0)
        .collect();
    Ok(ResidualAutocorr { lags, band: 1.96 / (n as f64).sqrt() })
}

/// Figures for one prediction mode over the estimation and validation
/// segments, in physical units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub fit_percent_est: f64,
    pub fit_percent_val: f64,
    pub mse_est: f64,
    pub mse_val: f64,
    pub fpe: f64,
    pub r_est: f64,
    pub r_val: f64,
    pub n_params: usize,
    pub n_samples_est: usize,
}

impl MetricsReport {
    /// `est`/`val` are `(measured, predicted)` pairs over valid samples.
    pub fn compute(est: (&[f64], &[f64]), val: (&[f64], &[f64]), n_params: usize) -> Result<Self> {
        let mse_est = mse(est.0, est.1)?;
        Ok(Self {
            fit_percent_est: fit_percent(est.0, est.1)?,
            fit_percent_val: fit_percent(val.0, val.1)?,
            mse_est,
            mse_val: mse(val.0, val.1)?,
            fpe: fpe(mse_est, n_params, est.0.len())?,
            r_est: correlation(est.0, est.1)?,
            r_val: correlation(val.0, val.1)?,
            n_params,
            n_samples_est: est.0.len(),
        })
    }

    /// `key = value` lines in fixed order, 6 significant digits.
    pub fn to_lines(&self, prefix: &str) -> Vec<String> {
        let s = crate::cli::format::sig6;
        vec![
            format!("{prefix}fit_percent_est = {}", s(self.fit_percent_est)),
            format!("{prefix}fit_percent_val = {}", s(self.fit_percent_val)),
            format!("{prefix}mse_est = {}", s(self.mse_est)),
            format!("{prefix}mse_val = {}", s(self.mse_val)),
            format!("{prefix}fpe = {}", s(self.fpe)),
            format!("{prefix}r_est = {}", s(self.r_est)),
            format!("{prefix}r_val = {}", s(self.r_val)),
            format!("{prefix}n_params = {}", self.n_params),
            format!("{prefix}n_samples_est = {}", self.n_samples_est),
        ]
    }
}
