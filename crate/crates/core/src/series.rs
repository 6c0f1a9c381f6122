//! Time-indexed series shared across the pipeline.
//!
//! Day indices are 1-based throughout the public API (`t = 1` is the first
//! observed day), matching the renewal-model conventions used in the loss
//! functions. Backing storage is 0-based.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observed daily death counts for one location.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeathSeries {
    pub location: String,
    pub start_date: NaiveDate,
    pub counts: Vec<u64>,
}

impl DeathSeries {
    pub fn new(location: impl Into<String>, start_date: NaiveDate, counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::EmptySeries);
        }
        Ok(DeathSeries {
            location: location.into(),
            start_date,
            counts,
        })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Calendar date of 1-based day index `t`.
    pub fn date_at(&self, t: usize) -> NaiveDate {
        self.start_date + chrono::Duration::days(t as i64 - 1)
    }

    /// 1-based day index of `date`, if it falls inside the series.
    pub fn day_index(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.start_date).num_days();
        if offset < 0 || offset >= self.counts.len() as i64 {
            None
        } else {
            Some(offset as usize + 1)
        }
    }
}

/// Latent daily scaled incidence.
///
/// Fitted series are strictly positive by construction (the fitter works in
/// log space); hand-built series may contain zeros, e.g. impulses in tests.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceSeries {
    values: Vec<f64>,
}

impl IncidenceSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySeries);
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::NonFinite {
                    context: "incidence",
                    index: i,
                });
            }
        }
        Ok(IncidenceSeries { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Expected daily deaths implied by an incidence series.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensitySeries {
    values: Vec<f64>,
}

impl IntensitySeries {
    pub(crate) fn from_values(values: Vec<f64>) -> Self {
        IntensitySeries { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Instantaneous reproduction number per day, defined for `t` in `[2, T]`.
///
/// Entries where the renewal denominator vanishes are flagged as undefined
/// rather than silently set to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ReproductionSeries {
    values: Vec<Option<f64>>,
}

/// First day index carrying a reproduction-number value.
pub const R_FIRST_DAY: usize = 2;

impl ReproductionSeries {
    pub(crate) fn from_values(values: Vec<Option<f64>>) -> Self {
        ReproductionSeries { values }
    }

    /// Length `T` of the underlying daily series.
    pub fn series_len(&self) -> usize {
        self.values.len() + 1
    }

    /// Value at 1-based day `t`; `None` for `t < 2`, `t > T`, or undefined
    /// entries.
    pub fn get(&self, t: usize) -> Option<f64> {
        if t < R_FIRST_DAY || t > self.series_len() {
            None
        } else {
            self.values[t - R_FIRST_DAY]
        }
    }

    /// Entries for `t = 2..=T` in day order.
    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    /// Number of defined entries.
    pub fn defined_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Log-scale changes between consecutive defined entries.
    ///
    /// Yields `(day, |change| signed)` pairs where `day` is the later day
    /// `t + 1` of the transition `(t, t + 1)` and the value is
    /// `ln R_{t+1} - ln R_t`. Transitions touching an undefined entry are
    /// skipped.
    pub fn log_changes(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.windows(2).enumerate().filter_map(|(i, pair)| {
            match (pair[0], pair[1]) {
                (Some(a), Some(b)) if a > 0.0 && b > 0.0 => {
                    Some((i + R_FIRST_DAY + 1, b.ln() - a.ln()))
                }
                _ => None,
            }
        })
    }

    /// Number of transitions skipped because an endpoint was undefined or
    /// non-positive.
    pub fn skipped_transitions(&self) -> usize {
        self.values
            .windows(2)
            .filter(|pair| !matches!((pair[0], pair[1]), (Some(a), Some(b)) if a > 0.0 && b > 0.0))
            .count()
    }
}
