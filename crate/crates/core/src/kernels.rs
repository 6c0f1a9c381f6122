//! Discretized delay distributions for the renewal model.
//!
//! Two kernels drive everything downstream: the generation-interval
//! distribution `w` (infection to onward infection, support starting at lag 1)
//! and the infection-to-death delay `f` (support starting at lag 0). Both are
//! gamma distributions matched to published mean/SD pairs and discretized to
//! daily probabilities by unit-bin CDF differences.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma};

use crate::error::{Error, Result};

/// Default infection-to-death delay: mean 19.3 days, SD 9.1 days.
pub const DEATH_DELAY_MEAN: f64 = 19.3;
pub const DEATH_DELAY_SD: f64 = 9.1;
/// Default truncation length for the death-delay kernel.
pub const DEATH_DELAY_LENGTH: usize = 60;

/// Default generation interval: mean 6.3 days, SD 4.2 days.
pub const GENERATION_MEAN: f64 = 6.3;
pub const GENERATION_SD: f64 = 4.2;
/// Default truncation length for the generation-interval kernel.
pub const GENERATION_LENGTH: usize = 30;

/// Fraction of gamma mass that must fall inside the truncation window before
/// a kernel is flagged as truncated.
pub const MASS_WARN_FRACTION: f64 = 0.99;

/// A gamma distribution parametrized by its target moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSpec {
    pub mean: f64,
    pub sd: f64,
    pub shape: f64,
    pub scale: f64,
}

/// Builds a [`GammaSpec`] by moment matching: shape = mean^2/sd^2,
/// scale = sd^2/mean.
pub fn gamma_from_moments(mean: f64, sd: f64) -> Result<GammaSpec> {
    if !mean.is_finite() || !sd.is_finite() || mean <= 0.0 || sd <= 0.0 {
        return Err(Error::KernelParam(format!(
            "mean and sd must be positive and finite, got mean={mean}, sd={sd}"
        )));
    }
    Ok(GammaSpec {
        mean,
        sd,
        shape: (mean * mean) / (sd * sd),
        scale: (sd * sd) / mean,
    })
}

/// Daily delay probabilities over a bounded lag range.
///
/// Entry `i` carries the probability mass of the continuous distribution on
/// the unit interval `[lag, lag + 1)` with `lag = support_start + i`. Values
/// are renormalized to sum to one after truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    values: Vec<f64>,
    support_start: usize,
    captured_mass: f64,
}

impl Kernel {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support_start(&self) -> usize {
        self.support_start
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest lag carrying mass, i.e. `support_start + len - 1`.
    pub fn max_lag(&self) -> usize {
        self.support_start + self.values.len() - 1
    }

    /// Fraction of the gamma mass at or beyond `support_start` that the
    /// truncation window captured, before renormalization. Mass below
    /// `support_start` is excluded by construction and does not count as
    /// truncation loss.
    pub fn captured_mass(&self) -> f64 {
        self.captured_mass
    }

    /// True when the truncation window captured less than
    /// [`MASS_WARN_FRACTION`] of the continuous distribution.
    pub fn is_truncated(&self) -> bool {
        self.captured_mass < MASS_WARN_FRACTION
    }

    /// Mean lag of the discretized distribution, with each entry treated as
    /// mass spread uniformly over `[lag, lag + 1)`.
    pub fn mean(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, p)| ((self.support_start + i) as f64 + 0.5) * p)
            .sum()
    }

    /// Standard deviation of the discretized distribution under the same
    /// unit-interval convention as [`Kernel::mean`].
    pub fn sd(&self) -> f64 {
        let m = self.mean();
        let var: f64 = self
            .values
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let x = (self.support_start + i) as f64 + 0.5;
                (x - m) * (x - m) * p
            })
            .sum();
        var.sqrt()
    }
}

/// Discretizes a gamma distribution to daily probabilities.
///
/// The entry at lag `tau` equals `CDF(tau + 1) - CDF(tau)`. Entries below
/// `support_start` are dropped and the remainder is renormalized to sum to
/// one. Check [`Kernel::is_truncated`] to detect windows that cut off a
/// non-negligible tail.
pub fn discretize(spec: &GammaSpec, support_start: usize, length: usize) -> Result<Kernel> {
    if length == 0 {
        return Err(Error::KernelParam("kernel length must be positive".into()));
    }
    let dist = Gamma::new(spec.shape, 1.0 / spec.scale).map_err(|e| {
        Error::KernelParam(format!(
            "gamma(shape={}, scale={}) rejected: {e}",
            spec.shape, spec.scale
        ))
    })?;
    let mut values = Vec::with_capacity(length);
    for i in 0..length {
        let tau = (support_start + i) as f64;
        values.push(dist.cdf(tau + 1.0) - dist.cdf(tau));
    }
    let window_mass: f64 = values.iter().sum();
    if window_mass <= 0.0 {
        return Err(Error::KernelParam(format!(
            "no gamma mass inside lags [{support_start}, {})",
            support_start + length
        )));
    }
    for v in &mut values {
        *v /= window_mass;
    }
    let available = 1.0 - dist.cdf(support_start as f64);
    Ok(Kernel {
        values,
        support_start,
        captured_mass: window_mass / available,
    })
}

/// Default infection-to-death delay kernel `f` over lags 0..=59.
pub fn default_death_delay() -> Kernel {
    let spec = gamma_from_moments(DEATH_DELAY_MEAN, DEATH_DELAY_SD).expect("valid constants");
    discretize(&spec, 0, DEATH_DELAY_LENGTH).expect("valid constants")
}

/// Default generation-interval kernel `w` over lags 1..=30.
pub fn default_generation_interval() -> Kernel {
    let spec = gamma_from_moments(GENERATION_MEAN, GENERATION_SD).expect("valid constants");
    discretize(&spec, 1, GENERATION_LENGTH).expect("valid constants")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn moment_matching_generation_interval() {
        let s = gamma_from_moments(6.3, 4.2).unwrap();
        assert_relative_eq!(s.shape, 2.25, max_relative = 1e-12);
        assert_relative_eq!(s.scale, 2.8, max_relative = 1e-12);
    }

    #[test]
    fn moment_matching_death_delay() {
        let s = gamma_from_moments(19.3, 9.1).unwrap();
        // shape = 19.3^2 / 9.1^2, scale = 9.1^2 / 19.3
        assert_relative_eq!(s.shape, 4.498128, max_relative = 1e-6);
        assert_relative_eq!(s.scale, 4.290674, max_relative = 1e-6);
    }

    #[test]
    fn moment_matching_round_trip() {
        // shape * scale = mean, shape * scale^2 = sd^2
        for (m, sd) in [(6.3, 4.2), (19.3, 9.1), (3.0, 0.5), (40.0, 12.0)] {
            let s = gamma_from_moments(m, sd).unwrap();
            assert_relative_eq!(s.shape * s.scale, m, max_relative = 1e-12);
            assert_relative_eq!(s.shape * s.scale * s.scale, sd * sd, max_relative = 1e-12);
        }
    }

    #[test]
    fn rejects_bad_moments() {
        assert!(gamma_from_moments(0.0, 1.0).is_err());
        assert!(gamma_from_moments(1.0, -2.0).is_err());
        assert!(gamma_from_moments(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn pmf_sums_to_one() {
        let f = default_death_delay();
        let w = default_generation_interval();
        assert!((f.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((w.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn default_kernels_reproduce_moments() {
        let f = default_death_delay();
        assert!((f.mean() - DEATH_DELAY_MEAN).abs() < 0.2, "mean {}", f.mean());
        assert!((f.sd() - DEATH_DELAY_SD).abs() < 0.2, "sd {}", f.sd());

        let w = default_generation_interval();
        assert!((w.mean() - GENERATION_MEAN).abs() < 0.2, "mean {}", w.mean());
        assert!((w.sd() - GENERATION_SD).abs() < 0.2, "sd {}", w.sd());
    }

    #[test]
    fn single_entry_kernel_is_a_point_mass() {
        let s = gamma_from_moments(6.3, 4.2).unwrap();
        let k = discretize(&s, 1, 1).unwrap();
        assert_eq!(k.values(), &[1.0]);
        assert!(k.is_truncated());
    }

    #[test]
    fn tail_decreases_past_the_mode() {
        for k in [default_death_delay(), default_generation_interval()] {
            let vals = k.values();
            let mode = vals
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            for i in mode..vals.len() - 1 {
                assert!(
                    vals[i + 1] < vals[i],
                    "entries must decrease past the mode: lag {i}"
                );
            }
        }
    }

    #[test]
    fn truncation_flag_tracks_captured_mass() {
        let s = gamma_from_moments(19.3, 9.1).unwrap();
        let short = discretize(&s, 0, 12).unwrap();
        assert!(short.is_truncated());
        assert!(short.captured_mass() < 0.99);
        let full = discretize(&s, 0, 60).unwrap();
        assert!(!full.is_truncated());
        assert!(full.captured_mass() > 0.99);
    }

    #[test]
    fn default_kernels_capture_most_mass() {
        assert!(!default_death_delay().is_truncated());
        assert!(!default_generation_interval().is_truncated());
    }
}
