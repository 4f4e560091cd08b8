//! Multivariate Kolmogorov-Smirnov goodness-of-fit machinery against the
//! standard-normal product reference.
//!
//! Whitened latent trajectories are prescribed to be `N(0, I)`, so the
//! reference CDF factorizes: `Phi_d(p) = prod_i Phi(p_i)`. The statistic
//! compares the lower-left-orthant empirical CDF with that product, with the
//! supremum evaluated at the sample points plus a left-limit correction. The
//! critical value comes from the tight multivariate DKW bound
//! `P(sup |F_n - F| > eps) <= d (n+1) exp(-2 n eps^2)`, which is closed-form,
//! conservative, and adapts to the sample size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outcome of one MV-KS compliance test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub critical_value: f64,
    pub n: usize,
    pub dims: usize,
    pub alpha: f64,
    pub compliant: bool,
}

/// Test configuration. The significance level defaults to 0.05.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GofConfig {
    pub alpha: f64,
}

impl Default for GofConfig {
    fn default() -> Self {
        Self { alpha: 0.05 }
    }
}

impl GofConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Standard normal CDF, evaluated through `erfc` for accuracy in both tails.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// MV-KS statistic of `samples` (rows are points) against `N(0, I)`:
///
/// `s = max_p max(|F_n(p) - Phi_d(p)|, |F_n^-(p) - Phi_d(p)|)`
///
/// where `F_n(p)` counts points dominated componentwise by `p` and `F_n^-`
/// excludes points equal to `p` in every coordinate. O(n^2 d).
pub fn mv_ks_statistic(samples: &[Vec<f64>]) -> Result<f64> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::invalid("mv-ks statistic needs at least one sample"));
    }
    let dims = samples[0].len();
    if dims == 0 {
        return Err(Error::invalid("mv-ks statistic needs at least one dimension"));
    }
    for (i, row) in samples.iter().enumerate() {
        if row.len() != dims {
            return Err(Error::invalid(format!("sample {i} has inconsistent dimension")));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("sample {i} contains non-finite values")));
        }
    }
    let inv_n = 1.0 / n as f64;
    let mut sup = 0.0_f64;
    for p in samples {
        let mut le = 0_usize;
        let mut eq = 0_usize;
        for q in samples {
            let mut dominated = true;
            let mut equal = true;
            for d in 0..dims {
                if q[d] > p[d] {
                    dominated = false;
                    equal = false;
                    break;
                }
                if q[d] != p[d] {
                    equal = false;
                }
            }
            if dominated {
                le += 1;
                if equal {
                    eq += 1;
                }
            }
        }
        let mut reference = 1.0;
        for &v in p {
            reference *= std_normal_cdf(v);
        }
        let upper = (le as f64 * inv_n - reference).abs();
        let lower = ((le - eq) as f64 * inv_n - reference).abs();
        sup = sup.max(upper).max(lower);
    }
    Ok(sup)
}

/// Sample-size-dependent critical value from the tight multivariate DKW
/// bound: `tau = sqrt(ln(d (n+1) / alpha) / (2 n))`, capped at 1.
pub fn critical_value(n: usize, dims: usize, alpha: f64) -> Result<f64> {
    if n == 0 || dims == 0 {
        return Err(Error::invalid("critical value needs n >= 1 and dims >= 1"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let tau = ((dims as f64 * (n as f64 + 1.0) / alpha).ln() / (2.0 * n as f64)).sqrt();
    Ok(tau.min(1.0))
}

/// Compliance decision rule: expected behavior iff `s < tau`; the boundary
/// `s = tau` rejects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Expected,
    Unexpected,
}

pub fn decide(statistic: f64, tau: f64) -> Decision {
    if statistic < tau {
        Decision::Expected
    } else {
        Decision::Unexpected
    }
}

/// Runs the full test: statistic, critical value and decision in one package.
pub fn ks_test(samples: &[Vec<f64>], alpha: f64) -> Result<KsResult> {
    let statistic = mv_ks_statistic(samples)?;
    let n = samples.len();
    let dims = samples[0].len();
    let tau = critical_value(n, dims, alpha)?;
    Ok(KsResult {
        statistic,
        critical_value: tau,
        n,
        dims,
        alpha,
        compliant: decide(statistic, tau) == Decision::Expected,
    })
}
