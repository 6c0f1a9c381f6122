//! Renewal-model forward maps and loss functions.
//!
//! The latent object is a daily scaled-incidence series `j`. Expected deaths
//! follow by convolution with the infection-to-death kernel, and the
//! instantaneous reproduction number follows by inverting the renewal
//! equation. The data loss is a weighted Poisson negative log-likelihood
//! whose `1/(1 + lambda)` weights emphasize relative rather than absolute
//! deviations; the dynamics loss is the mean absolute day-over-day change of
//! `ln R`, which is what drives fitted reproduction numbers toward step
//! functions.

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::series::{IncidenceSeries, IntensitySeries, ReproductionSeries};

/// Additive guard used inside logarithms of quantities that can reach zero.
pub const DEFAULT_LOG_GUARD: f64 = 0.1;

/// Minimum `|ln R_{t+1} - ln R_t|` that counts as a reproduction-number
/// change, both for regime counting and for change detection.
pub const LOG_CHANGE_THRESHOLD: f64 = 1e-3;

/// Renewal denominators below this are flagged undefined in exact mode.
const DENOMINATOR_FLOOR: f64 = 1e-12;

/// Convolution of `values` with `kernel` evaluated at 1-based day `t`:
/// the sum of `kernel[tau] * values[t - tau]` over lags with `t - tau >= 1`.
fn lag_sum(values: &[f64], kernel: &Kernel, t: usize) -> f64 {
    let start = kernel.support_start();
    let mut acc = 0.0;
    for (i, k) in kernel.values().iter().enumerate() {
        let tau = start + i;
        if tau >= t {
            break;
        }
        acc += k * values[t - tau - 1];
    }
    acc
}

/// Expected daily deaths `lambda_t = sum_tau f_tau * j_{t-tau}`.
pub fn expected_deaths(j: &IncidenceSeries, f: &Kernel) -> IntensitySeries {
    let vals = j.values();
    let lambda = (1..=vals.len()).map(|t| lag_sum(vals, f, t)).collect();
    IntensitySeries::from_values(lambda)
}

/// Renewal denominator `sum_tau w_tau * j_{t-tau}` for each day.
fn renewal_denominators(j: &IncidenceSeries, w: &Kernel) -> Vec<f64> {
    let vals = j.values();
    (1..=vals.len()).map(|t| lag_sum(vals, w, t)).collect()
}

/// Instantaneous reproduction number `R_t = j_t / sum_tau w_tau * j_{t-tau}`
/// for `t` in `[2, T]`, computed as an exact ratio.
///
/// Days whose renewal denominator is below `1e-12` are flagged undefined.
/// The exact ratio keeps the series invariant under rescaling of `j`, which
/// the change-detection stage relies on.
pub fn reproduction_number(j: &IncidenceSeries, w: &Kernel) -> ReproductionSeries {
    let denoms = renewal_denominators(j, w);
    let vals = j.values();
    let r = (2..=vals.len())
        .map(|t| {
            let d = denoms[t - 1];
            if d < DENOMINATOR_FLOOR {
                None
            } else {
                Some(vals[t - 1] / d)
            }
        })
        .collect();
    ReproductionSeries::from_values(r)
}

/// Reproduction number with the denominator guard applied:
/// `R_t = j_t / (denominator + guard)`. Every entry is defined and finite.
pub fn reproduction_number_guarded(
    j: &IncidenceSeries,
    w: &Kernel,
    guard: f64,
) -> ReproductionSeries {
    let denoms = renewal_denominators(j, w);
    let vals = j.values();
    let r = (2..=vals.len())
        .map(|t| Some(vals[t - 1] / (denoms[t - 1] + guard)))
        .collect();
    ReproductionSeries::from_values(r)
}

/// Reproduction number as the regularizer sees it: `(j_t + guard) /
/// (denominator + guard)`, the exponential of the guarded log difference the
/// dynamics penalty acts on. Where incidence runs far below the guard the
/// ratio pins to 1, so day-over-day changes vanish; change detection and
/// regime counting scan this series, which is why interventions occurring at
/// near-zero death counts go undetected.
pub fn detection_reproduction_number(
    j: &IncidenceSeries,
    w: &Kernel,
    guard: f64,
) -> ReproductionSeries {
    let denoms = renewal_denominators(j, w);
    let vals = j.values();
    let r = (2..=vals.len())
        .map(|t| Some((vals[t - 1] + guard) / (denoms[t - 1] + guard)))
        .collect();
    ReproductionSeries::from_values(r)
}

/// Poisson log-likelihood `n ln(lambda) - lambda - ln(n!)` with `ln(n!)`
/// evaluated through the log-gamma function and `log_guard` added inside the
/// logarithm. `0 * ln(0)` is taken as zero, so `log_guard = 0` reproduces the
/// textbook expression wherever it is finite.
pub fn poisson_loglik(n: u64, lambda: f64, log_guard: f64) -> f64 {
    let ln_term = if n == 0 {
        0.0
    } else {
        n as f64 * (lambda + log_guard).ln()
    };
    ln_term - lambda - ln_factorial(n)
}

/// `ln(n!)` via the log-gamma function, exactly zero for `n <= 1` where the
/// log-gamma routine is only approximate.
pub(crate) fn ln_factorial(n: u64) -> f64 {
    if n <= 1 {
        0.0
    } else {
        statrs::function::gamma::ln_gamma(n as f64 + 1.0)
    }
}

/// Scale-weighted Poisson data loss.
///
/// `L = -(1/Z) * sum_t [1/(1 + lambda_t)] * loglik(n_t, lambda_t)` with
/// `Z = sum_t 1/(1 + lambda_t)`.
pub fn data_loss(n: &[u64], lambda: &IntensitySeries, log_guard: f64) -> Result<f64> {
    if n.is_empty() {
        return Err(Error::EmptySeries);
    }
    if n.len() != lambda.len() {
        return Err(Error::LengthMismatch(format!(
            "counts ({}) vs intensities ({})",
            n.len(),
            lambda.len()
        )));
    }
    let mut num = 0.0;
    let mut z = 0.0;
    for (&nt, &lt) in n.iter().zip(lambda.values()) {
        let wt = 1.0 / (1.0 + lt);
        num += wt * poisson_loglik(nt, lt, log_guard);
        z += wt;
    }
    Ok(-num / z)
}

/// Mean absolute day-over-day change of `ln R`:
/// `L = (1/(T-2)) * sum_{t=2}^{T-1} |ln R_{t+1} - ln R_t|`.
///
/// Computed from the exact reproduction-number ratios, so the value is
/// invariant under `j -> c * j`. Transitions touching an undefined or
/// non-positive entry are skipped; the `T - 2` normalization is fixed.
pub fn dynamics_loss(j: &IncidenceSeries, w: &Kernel) -> Result<f64> {
    let t_len = j.len();
    if t_len < 3 {
        return Err(Error::SeriesTooShort {
            need: 3,
            got: t_len,
        });
    }
    let r = reproduction_number(j, w);
    let total: f64 = r.log_changes().map(|(_, d)| d.abs()).sum();
    Ok(total / (t_len - 2) as f64)
}

/// Combined loss for a candidate incidence series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub data: f64,
    pub dynamics: f64,
}

/// Evaluates `data_loss + gamma * dynamics_loss` for a given incidence
/// series against observed counts.
pub fn objective(
    j: &IncidenceSeries,
    n: &[u64],
    f: &Kernel,
    w: &Kernel,
    gamma: f64,
    log_guard: f64,
) -> Result<LossBreakdown> {
    let lambda = expected_deaths(j, f);
    let data = data_loss(n, &lambda, log_guard)?;
    let dynamics = dynamics_loss(j, w)?;
    Ok(LossBreakdown {
        total: data + gamma * dynamics,
        data,
        dynamics,
    })
}
