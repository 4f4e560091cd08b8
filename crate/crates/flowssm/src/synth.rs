//! Synthetic multivariate sinusoid generator with labeled anomaly injection.
//!
//! Each dimension is an independent sinusoid with its own frequency,
//! amplitude and phase, plus i.i.d. Gaussian observation noise. Anomalies
//! scale the amplitude, the instantaneous frequency (phase-continuous at the
//! segment start) or the noise level inside a half-open interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Generator parameters for one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub dims: usize,
    pub length: usize,
    /// cycles per sample, one entry per dimension
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<f64>,
    /// radians, one entry per dimension
    pub phases: Vec<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SignalSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dims == 0 || self.length == 0 {
            return Err(Error::invalid("dims and length must be >= 1"));
        }
        for (name, v) in [
            ("frequencies", &self.frequencies),
            ("amplitudes", &self.amplitudes),
            ("phases", &self.phases),
        ] {
            if v.len() != self.dims {
                return Err(Error::invalid(format!(
                    "{name} has {} entries, expected {}",
                    v.len(),
                    self.dims
                )));
            }
        }
        if self.amplitudes.iter().any(|&a| a <= 0.0) {
            return Err(Error::invalid("amplitudes must be positive"));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::invalid("noise_sigma must be non-negative"));
        }
        Ok(())
    }

    /// Fig. 1-style desk-scale defaults: four dimensions, a thousand steps.
    pub fn desk_scale(seed: u64) -> Self {
        Self {
            dims: 4,
            length: 1000,
            frequencies: vec![1.0 / 50.0, 1.0 / 40.0, 1.0 / 25.0, 1.0 / 100.0],
            amplitudes: vec![2.0, 1.6, 2.4, 1.8],
            phases: vec![0.0, 0.7, 1.9, 3.1],
            noise_sigma: 0.1,
            seed,
        }
    }

    fn clean_value(&self, d: usize, t: usize) -> f64 {
        self.amplitudes[d]
            * (2.0 * std::f64::consts::PI * self.frequencies[d] * t as f64 + self.phases[d]).sin()
    }

    /// Derived spec with globally scaled amplitude / frequency / noise.
    pub fn scaled(&self, amplitude_factor: f64, frequency_factor: f64, noise_factor: f64) -> Self {
        Self {
            amplitudes: self.amplitudes.iter().map(|a| a * amplitude_factor).collect(),
            frequencies: self.frequencies.iter().map(|f| f * frequency_factor).collect(),
            noise_sigma: self.noise_sigma * noise_factor,
            ..self.clone()
        }
    }
}

/// Which base quantity an anomaly multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    Amplitude,
    Frequency,
    Noise,
}

/// A multiplicative modification over the half-open interval `[start, end)`.
/// `factor = 1` leaves the series (and labels) untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalySpec {
    pub start: usize,
    pub end: usize,
    pub kind: AnomalyKind,
    pub factor: f64,
}

impl AnomalySpec {
    pub fn validate(&self, series_len: usize) -> Result<()> {
        if self.start >= self.end || self.end > series_len {
            return Err(Error::invalid(format!(
                "anomaly interval [{}, {}) out of range for length {series_len}",
                self.start, self.end
            )));
        }
        if self.factor <= 0.0 {
            return Err(Error::invalid("anomaly factor must be positive"));
        }
        Ok(())
    }
}

/// Standard-normal noise draws in (t, d) order, so every generator variant
/// sees the same underlying randomness for a given seed.
fn noise_matrix(spec: &SignalSpec) -> Vec<Vec<f64>> {
    use rand::SeedableRng;
    use rand_distr::Distribution;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.length)
        .map(|_| {
            (0..spec.dims)
                .map(|_| rand_distr::StandardNormal.sample(&mut rng))
                .collect()
        })
        .collect()
}

/// Generates the clean-plus-noise base series with all-zero labels.
pub fn generate_base(spec: &SignalSpec) -> Result<TimeSeries> {
    spec.validate()?;
    let noise = noise_matrix(spec);
    let values: Vec<Vec<f64>> = (0..spec.length)
        .map(|t| {
            (0..spec.dims)
                .map(|d| spec.clean_value(d, t) + spec.noise_sigma * noise[t][d])
                .collect()
        })
        .collect();
    let mut series = TimeSeries::new(values, None)?;
    series.set_labels(vec![false; spec.length]);
    Ok(series)
}

/// Applies one anomaly to a series generated from `base`. The underlying
/// noise draws are recovered by subtracting the clean signal, so amplitude
/// and frequency anomalies keep the original observation noise while noise
/// anomalies rescale it. Frequency anomalies keep the phase continuous at
/// the interval start.
pub fn inject_anomaly(
    series: &TimeSeries,
    base: &SignalSpec,
    anomaly: &AnomalySpec,
) -> Result<TimeSeries> {
    base.validate()?;
    anomaly.validate(series.len())?;
    if series.len() != base.length || series.dims() != base.dims {
        return Err(Error::invalid("series shape does not match the base spec"));
    }
    let mut out = series.clone();
    if anomaly.factor == 1.0 {
        return Ok(out);
    }
    let mut labels: Vec<bool> =
        series.labels().map(|l| l.to_vec()).unwrap_or_else(|| vec![false; series.len()]);
    let two_pi = 2.0 * std::f64::consts::PI;
    for t in anomaly.start..anomaly.end {
        for d in 0..base.dims {
            let clean = base.clean_value(d, t);
            let eps = out.values_mut()[t][d] - clean;
            let modified = match anomaly.kind {
                AnomalyKind::Amplitude => anomaly.factor * clean + eps,
                AnomalyKind::Frequency => {
                    // phase at the interval start matches the base signal
                    let theta0 =
                        two_pi * base.frequencies[d] * anomaly.start as f64 + base.phases[d];
                    let arg = two_pi * base.frequencies[d] * anomaly.factor
                        * (t - anomaly.start) as f64
                        + theta0;
                    base.amplitudes[d] * arg.sin() + eps
                }
                AnomalyKind::Noise => clean + anomaly.factor * eps,
            };
            out.values_mut()[t][d] = modified;
        }
        labels[t] = true;
    }
    out.set_labels(labels);
    Ok(out)
}

/// One cell of a sensitivity grid: the factor triple and the regenerated
/// whole-series modification.
#[derive(Debug, Clone)]
pub struct GridCell {
    pub amplitude_factor: f64,
    pub frequency_factor: f64,
    pub noise_factor: f64,
    pub series: TimeSeries,
}

/// Cartesian product of global modifications: every cell regenerates the
/// full series from a scaled spec sharing the base noise draws. Labels mark
/// the whole series anomalous whenever any factor differs from 1.
pub fn sensitivity_grid(
    base: &SignalSpec,
    amplitude_factors: &[f64],
    frequency_factors: &[f64],
    noise_factors: &[f64],
) -> Result<Vec<GridCell>> {
    base.validate()?;
    for (name, f) in [
        ("amplitude", amplitude_factors),
        ("frequency", frequency_factors),
        ("noise", noise_factors),
    ] {
        if f.is_empty() {
            return Err(Error::invalid(format!("{name} factor list is empty")));
        }
        if !f.contains(&1.0) {
            return Err(Error::invalid(format!("{name} factor list must contain 1.0")));
        }
    }
    let mut cells = Vec::new();
    for &fa in amplitude_factors {
        for &ff in frequency_factors {
            for &fn_ in noise_factors {
                let spec = base.scaled(fa, ff, fn_);
                let mut series = generate_base(&spec)?;
                let anomalous = fa != 1.0 || ff != 1.0 || fn_ != 1.0;
                series.set_labels(vec![anomalous; spec.length]);
                cells.push(GridCell {
                    amplitude_factor: fa,
                    frequency_factor: ff,
                    noise_factor: fn_,
                    series,
                });
            }
        }
    }
    Ok(cells)
}
