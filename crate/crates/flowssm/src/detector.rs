//! Sliding-window anomaly scoring over whitened latent trajectories, the
//! per-timestep NLL baseline, and the training-time FIT compliance
//! diagnostic.
//!
//! The first `k` timesteps of a series only ever provide context: they are
//! never scored, carry score 0 and flag `false` in per-timestep outputs.

use serde::{Deserialize, Serialize};

use crate::dynamics::whiten;
use crate::error::{Error, Result};
use crate::flow::ContextWindow;
use crate::gof::{critical_value, mv_ks_statistic, KsResult};
use crate::series::TimeSeries;
use crate::train::Model;

const LN_2PI: f64 = 1.8378770664093453;

/// One scored window over the latent trajectory. `t_start` is in original
/// series timesteps (so it is at least `k`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    pub t_start: usize,
    pub w: usize,
    pub statistic: f64,
    pub tau: f64,
    pub flag: bool,
}

/// Per-timestep scores and flags over the full series timeline.
#[derive(Debug, Clone)]
pub struct DetectionResult {
    /// length-T; zero on the unscored context prefix
    pub ks_score: Vec<f64>,
    pub ks_flag: Vec<bool>,
    /// length-T; zero on the unscored context prefix
    pub nll_score: Vec<f64>,
    pub windows: Vec<WindowScore>,
    pub context: usize,
    pub window: usize,
    pub stride: usize,
    pub alpha: f64,
}

/// FIT training diagnostic: the fraction of windows whose latent
/// trajectories pass the compliance test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub n_windows: usize,
    pub n_compliant: usize,
    pub fit_fraction: f64,
    pub trustworthy: bool,
    pub windows: Vec<KsResult>,
}

/// Whitened latent trajectory of a series under a model: `z~_t = z_t - mu_t`
/// for every scored timestep, plus the mean trajectory and per-timestep
/// log-determinants.
pub struct LatentTrajectory {
    pub whitened: Vec<Vec<f64>>,
    pub means: Vec<Vec<f64>>,
    pub logdets: Vec<f64>,
}

/// Maps each scored observation through the flow with its context and
/// whitens against the unrolled mean trajectory. Output length is `T - k`.
pub fn latent_trajectory(model: &Model, series: &TimeSeries, k: usize) -> Result<LatentTrajectory> {
    if series.len() <= k {
        return Err(Error::invalid(format!(
            "series length {} leaves no scored range for context {k}",
            series.len()
        )));
    }
    let count = series.len() - k;
    let mut whitened = Vec::with_capacity(count);
    let mut means = Vec::with_capacity(count);
    let mut logdets = Vec::with_capacity(count);
    let mut mu = model.ldm.mu_init();
    for t in k..series.len() {
        mu = model.ldm.step(&mu)?;
        let ctx = ContextWindow::from_rows(&series.rows()[t - k..t])?;
        let (z, logdet) = model.flow.normalize(series.row(t), &ctx)?;
        whitened.push(whiten(&z, &mu)?);
        means.push(mu.clone());
        logdets.push(logdet);
    }
    Ok(LatentTrajectory { whitened, means, logdets })
}

/// Sliding-window MV-KS scores over a whitened trajectory.
///
/// Every window `[i, i+w)` is tested against `N(0, I)` with
/// `tau = critical_value(w, D, alpha)`. The per-timestep score is the max
/// statistic over covering windows; flags compare that max against `tau`.
/// Returned vectors cover the trajectory (length `T - k`), not the full
/// series; [`detect`] pads them back onto the original timeline.
pub fn score_windows(
    whitened: &[Vec<f64>],
    w: usize,
    stride: usize,
    alpha: f64,
) -> Result<(Vec<WindowScore>, Vec<f64>, Vec<bool>)> {
    let n = whitened.len();
    if w == 0 || w > n {
        return Err(Error::invalid(format!("window {w} outside [1, {n}]")));
    }
    if stride == 0 {
        return Err(Error::invalid("stride must be >= 1"));
    }
    let dims = whitened[0].len();
    let tau = critical_value(w, dims, alpha)?;
    let mut windows = Vec::new();
    let mut ks_score = vec![0.0; n];
    let mut start = 0;
    loop {
        let s = mv_ks_statistic(&whitened[start..start + w])?;
        windows.push(WindowScore { t_start: start, w, statistic: s, tau, flag: s >= tau });
        for slot in ks_score[start..start + w].iter_mut() {
            if s > *slot {
                *slot = s;
            }
        }
        if start + w >= n {
            break;
        }
        start += stride;
        if start + w > n {
            // clamp the final window onto the trajectory end so every
            // timestep is covered
            start = n - w;
        }
    }
    let flags = ks_score.iter().map(|&s| s >= tau).collect();
    Ok((windows, ks_score, flags))
}

/// Per-timestep negative log-likelihood over the full timeline (zeros on the
/// context prefix). The mean over the scored range equals the sequential
/// training loss for the same model and series.
pub fn nll_score(model: &Model, series: &TimeSeries, k: usize) -> Result<Vec<f64>> {
    let traj = latent_trajectory(model, series, k)?;
    let dims = series.dims() as f64;
    let mut out = vec![0.0; series.len()];
    for (i, (zt, logdet)) in traj.whitened.iter().zip(traj.logdets.iter()).enumerate() {
        let sq: f64 = zt.iter().map(|v| v * v).sum();
        out[k + i] = 0.5 * dims * LN_2PI + 0.5 * sq - logdet;
    }
    Ok(out)
}

/// Full detection pass: latent trajectory, windowed KS scores and the NLL
/// baseline, all expanded onto the original series timeline.
pub fn detect(
    model: &Model,
    series: &TimeSeries,
    k: usize,
    w: usize,
    stride: usize,
    alpha: f64,
) -> Result<(DetectionResult, LatentTrajectory)> {
    let traj = latent_trajectory(model, series, k)?;
    let (mut windows, scores, flags) = score_windows(&traj.whitened, w, stride, alpha)?;
    for win in &mut windows {
        win.t_start += k;
    }
    let mut ks_score = vec![0.0; series.len()];
    let mut ks_flag = vec![false; series.len()];
    ks_score[k..].copy_from_slice(&scores);
    for (slot, f) in ks_flag[k..].iter_mut().zip(flags.iter()) {
        *slot = *f;
    }
    let mut nll = vec![0.0; series.len()];
    let dims = series.dims() as f64;
    for (i, (zt, logdet)) in traj.whitened.iter().zip(traj.logdets.iter()).enumerate() {
        let sq: f64 = zt.iter().map(|v| v * v).sum();
        nll[k + i] = 0.5 * dims * LN_2PI + 0.5 * sq - logdet;
    }
    Ok((
        DetectionResult {
            ks_score,
            ks_flag,
            nll_score: nll,
            windows,
            context: k,
            window: w,
            stride,
            alpha,
        },
        traj,
    ))
}

/// Runs the compliance diagnostic on (training) data: non-overlapping by
/// default in the caller's hands via `stride`. The model is deemed
/// trustworthy when `fit_fraction >= 1 - alpha - margin`.
pub fn fit_diagnostic(
    model: &Model,
    series: &TimeSeries,
    k: usize,
    w: usize,
    stride: usize,
    alpha: f64,
    margin: f64,
) -> Result<FitReport> {
    let traj = latent_trajectory(model, series, k)?;
    fit_from_latents(&traj.whitened, w, stride, alpha, margin)
}

/// FIT on an explicit latent trajectory; the calibration path for tests and
/// the backing of [`fit_diagnostic`].
pub fn fit_from_latents(
    whitened: &[Vec<f64>],
    w: usize,
    stride: usize,
    alpha: f64,
    margin: f64,
) -> Result<FitReport> {
    let (windows, _, _) = score_windows(whitened, w, stride, alpha)?;
    let dims = whitened[0].len();
    let results: Vec<KsResult> = windows
        .iter()
        .map(|win| KsResult {
            statistic: win.statistic,
            critical_value: win.tau,
            n: win.w,
            dims,
            alpha,
            compliant: !win.flag,
        })
        .collect();
    let n_windows = results.len();
    let n_compliant = results.iter().filter(|r| r.compliant).count();
    let fit_fraction = n_compliant as f64 / n_windows as f64;
    Ok(FitReport {
        n_windows,
        n_compliant,
        fit_fraction,
        trustworthy: fit_fraction >= 1.0 - alpha - margin,
        windows: results,
    })
}

/// Window-size guidance: `D^3` scaled for test power, floored at the cheap
/// `2 D^2` alternative and capped by the caller's budget.
pub fn recommended_window(dims: usize, cap: usize) -> usize {
    let cubic = dims * dims * dims;
    let floor = 2 * dims * dims;
    cubic.min(cap).max(floor)
}
