//! Excitation signals: maximal-length PRBS generation, band design and
//! circular autocorrelation.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Half-power point of the sinc² envelope of a PRBS spectrum, in units of 1/T_b.
pub const HALF_POWER_OMEGA: f64 = 2.78;

pub const MIN_ORDER: u32 = 2;
pub const MAX_ORDER: u32 = 16;

/// Uniformly sampled scalar time series.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    dt: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Argument(format!("sample period must be > 0, got {dt}")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, dt })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Sub-signal over `range`, keeping the sample period.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Signal {
        Signal { samples: self.samples[range].to_vec(), dt: self.dt }
    }
}

/// Frequency band in rad/s.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandSpec {
    pub omega_min: f64,
    pub omega_max: f64,
}

impl BandSpec {
    pub fn new(omega_min: f64, omega_max: f64) -> Result<Self> {
        if !(omega_min > 0.0 && omega_min < omega_max && omega_max.is_finite()) {
            return Err(Error::Argument(format!(
                "band requires 0 < omega_min < omega_max, got [{omega_min}, {omega_max}]"
            )));
        }
        Ok(Self { omega_min, omega_max })
    }

    pub fn covers(&self, other: &BandSpec) -> bool {
        self.omega_min <= other.omega_min && self.omega_max >= other.omega_max
    }
}

/// Feedback taps (1-based stage positions) of a maximal-length Fibonacci LFSR
/// for each register length in `MIN_ORDER..=MAX_ORDER`.
pub fn maximal_taps(order: u32) -> Option<&'static [u32]> {
    const TABLE: [&[u32]; 15] = [
        &[2, 1],
        &[3, 2],
        &[4, 3],
        &[5, 3],
        &[6, 5],
        &[7, 6],
        &[8, 6, 5, 4],
        &[9, 5],
        &[10, 7],
        &[11, 9],
        &[12, 11, 10, 4],
        &[13, 12, 11, 8],
        &[14, 13, 12, 2],
        &[15, 14],
        &[16, 15, 13, 4],
    ];
    if (MIN_ORDER..=MAX_ORDER).contains(&order) {
        Some(TABLE[(order - MIN_ORDER) as usize])
    } else {
        None
    }
}

/// Fibonacci LFSR. Stage `i` (1-based) lives in bit `i - 1`; the output is
/// stage `order` and the feedback enters stage 1.
#[derive(Clone, Debug)]
pub struct Lfsr {
    order: u32,
    tap_mask: u32,
    state: u32,
}

impl Lfsr {
    pub fn new(order: u32, taps: &[u32], seed: u32) -> Result<Self> {
        if !(MIN_ORDER..=MAX_ORDER).contains(&order) {
            return Err(Error::Config(format!(
                "PRBS order must be in [{MIN_ORDER}, {MAX_ORDER}], got {order}"
            )));
        }
        if !taps.contains(&order) {
            return Err(Error::Config(format!("PRBS taps {taps:?} must include stage {order}")));
        }
        let mut tap_mask = 0u32;
        for &t in taps {
            if t == 0 || t > order {
                return Err(Error::Config(format!("PRBS tap {t} outside 1..={order}")));
            }
            tap_mask |= 1 << (t - 1);
        }
        let full = (1u32 << order) - 1;
        if seed & full == 0 || seed > full {
            return Err(Error::Config(format!(
                "PRBS seed {seed:#b} must be a nonzero {order}-bit value"
            )));
        }
        Ok(Self { order, tap_mask, state: seed })
    }

    pub fn state(&self) -> u32 {
        self.state
    }

    /// Emit the output bit and advance one clock.
    pub fn next_bit(&mut self) -> bool {
        let out = (self.state >> (self.order - 1)) & 1 == 1;
        let feedback = (self.state & self.tap_mask).count_ones() & 1;
        let full = (1u32 << self.order) - 1;
        self.state = ((self.state << 1) | feedback) & full;
        out
    }

    /// Number of clocks until the register returns to its current state.
    pub fn period(&self) -> u64 {
        let mut probe = self.clone();
        let start = probe.state;
        let mut n = 0u64;
        loop {
            probe.next_bit();
            n += 1;
            if probe.state == start || n > (1u64 << self.order) {
                return n;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrbsSpec {
    pub order: u32,
    pub taps: Vec<u32>,
    pub seed: u32,
    pub bit_interval_s: f64,
    pub amplitude: f64,
    pub n_periods: usize,
    pub dt: f64,
}

impl PrbsSpec {
    /// Spec using the built-in tap set and an all-ones seed.
    pub fn with_order(order: u32, bit_samples: usize, amplitude: f64, dt: f64) -> Result<Self> {
        let taps = maximal_taps(order)
            .ok_or_else(|| Error::Config(format!("no maximal tap set for order {order}")))?;
        Ok(Self {
            order,
            taps: taps.to_vec(),
            seed: (1u32 << order) - 1,
            bit_interval_s: bit_samples as f64 * dt,
            amplitude,
            n_periods: 1,
            dt,
        })
    }

    /// Bits in one LFSR period, 2^n - 1.
    pub fn period_bits(&self) -> usize {
        (1usize << self.order) - 1
    }

    /// Samples each bit is held for.
    pub fn samples_per_bit(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.bit_interval_s > 0.0) {
            return Err(Error::Config("PRBS dt and bit interval must be > 0".into()));
        }
        let ratio = self.bit_interval_s / self.dt;
        let rounded = ratio.round();
        if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Config(format!(
                "PRBS bit interval {} s is not a positive integer multiple of dt {} s",
                self.bit_interval_s, self.dt
            )));
        }
        Ok(rounded as usize)
    }

    /// Samples in one full LFSR period.
    pub fn period_samples(&self) -> Result<usize> {
        Ok(self.period_bits() * self.samples_per_bit()?)
    }

    pub fn covered_band(&self) -> Result<BandSpec> {
        prbs_covered_band(self.samples_per_bit()? as f64 * self.dt, self.period_bits())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_periods < 1 {
            return Err(Error::Config("PRBS n_periods must be >= 1".into()));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::Config("PRBS amplitude must be finite".into()));
        }
        self.samples_per_bit()?;
        let lfsr = Lfsr::new(self.order, &self.taps, self.seed)?;
        if lfsr.period() != self.period_bits() as u64 {
            return Err(Error::Config(format!(
                "PRBS taps {:?} are not maximal-length for order {}",
                self.taps, self.order
            )));
        }
        Ok(())
    }
}

/// One LFSR period of output bits starting from the spec's seed.
pub fn prbs_bits(spec: &PrbsSpec) -> Result<Vec<bool>> {
    spec.validate()?;
    let mut lfsr = Lfsr::new(spec.order, &spec.taps, spec.seed)?;
    Ok((0..spec.period_bits()).map(|_| lfsr.next_bit()).collect())
}

/// Two-level ±amplitude sequence, zero-order held for `bit_interval_s`.
pub fn generate_prbs(spec: &PrbsSpec) -> Result<Signal> {
    let bits = prbs_bits(spec)?;
    let hold = spec.samples_per_bit()?;
    let high = spec.amplitude;
    let low = -spec.amplitude;
    let mut samples = Vec::with_capacity(spec.n_periods * bits.len() * hold);
    for _ in 0..spec.n_periods {
        for &b in &bits {
            let v = if b { high } else { low };
            samples.extend(std::iter::repeat_n(v, hold));
        }
    }
    Signal::new(samples, spec.dt)
}

/// Band excited by a PRBS with clock period `bit_interval_s` and
/// `n_bits_per_period` bits per period.
pub fn prbs_covered_band(bit_interval_s: f64, n_bits_per_period: usize) -> Result<BandSpec> {
    if !(bit_interval_s > 0.0) || n_bits_per_period == 0 {
        return Err(Error::Argument("bit interval and period length must be positive".into()));
    }
    let omega_min = 2.0 * PI / (n_bits_per_period as f64 * bit_interval_s);
    let omega_max = HALF_POWER_OMEGA / bit_interval_s;
    Ok(BandSpec { omega_min, omega_max })
}

/// Pick the slowest admissible bit clock for `band.omega_max`, then the
/// shortest register whose period reaches down to `band.omega_min`.
pub fn design_prbs_for_band(band: &BandSpec, dt: f64, amplitude: f64) -> Result<PrbsSpec> {
    let band = BandSpec::new(band.omega_min, band.omega_max)?;
    if !(dt > 0.0) {
        return Err(Error::Argument(format!("dt must be > 0, got {dt}")));
    }
    let mut hold = (HALF_POWER_OMEGA / (band.omega_max * dt)).floor() as usize;
    while hold > 0 && HALF_POWER_OMEGA / (hold as f64 * dt) < band.omega_max {
        hold -= 1;
    }
    if hold == 0 {
        return Err(Error::Design(format!(
            "omega_max {} rad/s needs a bit interval below dt = {dt} s (max reachable {:.4} rad/s)",
            band.omega_max,
            HALF_POWER_OMEGA / dt
        )));
    }
    let bit_interval = hold as f64 * dt;
    for order in MIN_ORDER..=MAX_ORDER {
        let n_bits = (1usize << order) - 1;
        let covered = prbs_covered_band(bit_interval, n_bits)?;
        if covered.covers(&band) {
            return PrbsSpec::with_order(order, hold, amplitude, dt);
        }
    }
    Err(Error::Design(format!(
        "omega_min {} rad/s needs a register longer than {MAX_ORDER} stages",
        band.omega_min
    )))
}

/// Circular autocorrelation treating the whole signal as one period,
/// normalized to 1 at lag 0. Lags are in samples.
pub fn autocorrelation(signal: &Signal, max_lag: usize) -> Result<Vec<f64>> {
    let x = signal.samples();
    let n = x.len();
    if n == 0 {
        return Err(Error::Argument("autocorrelation of an empty signal".into()));
    }
    if max_lag >= n {
        return Err(Error::Argument(format!("max_lag {max_lag} must be < length {n}")));
    }
    let energy: f64 = x.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Err(Error::Argument("autocorrelation of an all-zero signal".into()));
    }
    Ok((0..=max_lag)
        .map(|lag| {
            let s: f64 = (0..n).map(|k| x[k] * x[(k + lag) % n]).sum();
            s / energy
        })
        .collect())
}
