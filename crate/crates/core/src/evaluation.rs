//! Scoring inferred reproduction-number traces against recorded
//! interventions: change-date detection, offset statistics, and the Poisson
//! fluctuation check.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LOG_CHANGE_THRESHOLD;
use crate::series::{IntensitySeries, ReproductionSeries};

/// Default scan window (days) centered on a recorded intervention date.
pub const DEFAULT_WINDOW: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NpiKind {
    Implement,
    Lift,
}

impl NpiKind {
    pub fn parse(text: &str) -> Option<NpiKind> {
        match text.trim().to_ascii_lowercase().as_str() {
            "implement" | "implementation" => Some(NpiKind::Implement),
            "lift" | "lifting" => Some(NpiKind::Lift),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            NpiKind::Implement => "implement",
            NpiKind::Lift => "lift",
        }
    }
}

/// A recorded intervention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpiRecord {
    pub location: String,
    pub date: NaiveDate,
    pub label: String,
    pub kind: NpiKind,
}

/// Outcome of scanning one window for the strongest R change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowScan {
    /// Day (1-based) the strongest change is attributed to; `None` when every
    /// candidate change is below the detection threshold.
    pub inferred_day: Option<usize>,
    /// Magnitude `|ln R_{t+1} - ln R_t|` of the winning transition.
    pub strongest_change: f64,
    /// True when the window was clipped at the series bounds.
    pub truncated: bool,
}

/// Finds the day of the largest `|ln R|` jump in an odd `window` centered on
/// `npi_day` (1-based). Each transition `(t, t+1)` is attributed to the later
/// day `t + 1`. Ties break toward the day closest to `npi_day`, then toward
/// the earlier day. Changes below the detection threshold never win; if no
/// candidate clears it, the scan reports no detection.
pub fn infer_npi_day(r: &ReproductionSeries, npi_day: usize, window: usize) -> Result<WindowScan> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::Config(format!(
            "scan window must be odd, got {window}"
        )));
    }
    let t_len = r.series_len();
    if npi_day < 1 || npi_day > t_len {
        return Err(Error::Config(format!(
            "intervention day {npi_day} outside the series (1..={t_len})"
        )));
    }
    let half = (window - 1) / 2;
    // attributable days span [3, T]: the earliest transition is (2, 3)
    let truncated = npi_day < 3 + half || npi_day + half > t_len;
    let lo = npi_day.saturating_sub(half);
    let hi = npi_day + half;
    let mut best: Option<(f64, usize)> = None;
    for (day, change) in r.log_changes() {
        if day < lo || day > hi {
            continue;
        }
        let magnitude = change.abs();
        if magnitude < LOG_CHANGE_THRESHOLD {
            continue;
        }
        let better = match best {
            None => true,
            Some((bm, bd)) => {
                if magnitude != bm {
                    magnitude > bm
                } else {
                    let (da, db) = (day.abs_diff(npi_day), bd.abs_diff(npi_day));
                    if da != db {
                        da < db
                    } else {
                        day < bd
                    }
                }
            }
        };
        if better {
            best = Some((magnitude, day));
        }
    }
    Ok(WindowScan {
        inferred_day: best.map(|(_, d)| d),
        strongest_change: best.map(|(m, _)| m).unwrap_or(0.0),
        truncated,
    })
}

/// Mean, population SD, and the fraction of offsets within one day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetStats {
    pub mean: f64,
    pub sd: f64,
    pub within_one_fraction: f64,
}

pub fn offset_stats(offsets: &[i64]) -> Result<OffsetStats> {
    if offsets.is_empty() {
        return Err(Error::NoData("no detected offsets to summarize".into()));
    }
    let len = offsets.len() as f64;
    let mean = offsets.iter().map(|&d| d as f64).sum::<f64>() / len;
    let var = offsets
        .iter()
        .map(|&d| (d as f64 - mean).powi(2))
        .sum::<f64>()
        / len;
    let within = offsets.iter().filter(|d| d.abs() <= 1).count() as f64 / len;
    Ok(OffsetStats {
        mean,
        sd: var.sqrt(),
        within_one_fraction: within,
    })
}

/// One histogram bin: offset day and how many detections landed on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub offset: i64,
    pub count: usize,
}

/// Integer-day histogram covering at least [-4, 4], extended when an offset
/// falls outside that range. Bin counts sum to the number of offsets.
pub fn offset_histogram(offsets: &[i64]) -> Vec<HistogramBin> {
    let lo = offsets.iter().copied().min().unwrap_or(0).min(-4);
    let hi = offsets.iter().copied().max().unwrap_or(0).max(4);
    (lo..=hi)
        .map(|offset| HistogramBin {
            offset,
            count: offsets.iter().filter(|&&d| d == offset).count(),
        })
        .collect()
}

/// Mean squared Poisson residual `<(n_t - lambda_t)^2 / (lambda_t + 0.1)>`.
/// Values near 1 indicate the fitted intensity absorbs the trend but not the
/// shot noise, as a Poisson model should.
pub fn fluctuation_statistic(n: &[u64], lambda: &IntensitySeries) -> Result<f64> {
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
    let total: f64 = n
        .iter()
        .zip(lambda.values())
        .map(|(&nt, &lt)| {
            let resid = nt as f64 - lt;
            resid * resid / (lt + crate::model::DEFAULT_LOG_GUARD)
        })
        .sum();
    Ok(total / n.len() as f64)
}

/// Per-intervention evaluation row as emitted in the offset report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetRow {
    pub location: String,
    pub label: String,
    pub kind: NpiKind,
    pub npi_date: NaiveDate,
    pub npi_day: usize,
    pub inferred_day: Option<usize>,
    pub inferred_date: Option<NaiveDate>,
    pub offset: Option<i64>,
    pub strongest_change: f64,
    pub truncated_window: bool,
}

/// Summary block of an offset report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetSummary {
    pub detected: usize,
    pub not_detected: usize,
    pub mean: f64,
    pub sd: f64,
    pub within_one_fraction: f64,
}

/// Full evaluation artifact: per-intervention rows, aggregate statistics over
/// the detected subset, and the offset histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetReport {
    pub rows: Vec<OffsetRow>,
    pub summary: Option<OffsetSummary>,
    pub histogram: Vec<HistogramBin>,
}

/// Assembles the report from evaluated rows; the summary is present only
/// when at least one intervention was detected.
pub fn build_offset_report(rows: Vec<OffsetRow>) -> OffsetReport {
    let offsets: Vec<i64> = rows.iter().filter_map(|r| r.offset).collect();
    let not_detected = rows.len() - offsets.len();
    let summary = offset_stats(&offsets).ok().map(|s| OffsetSummary {
        detected: offsets.len(),
        not_detected,
        mean: s.mean,
        sd: s.sd,
        within_one_fraction: s.within_one_fraction,
    });
    OffsetReport {
        rows,
        summary,
        histogram: offset_histogram(&offsets),
    }
}
