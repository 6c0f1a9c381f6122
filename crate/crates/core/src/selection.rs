//! Regularization-strength sweep and selection.
//!
//! The sweep fits every location at every grid value of the dynamics weight
//! and scores each value two ways: prospectively by an information criterion
//! balancing regime-change count against data fit, and retrospectively by the
//! timing error of detected intervention dates. Regime counting and change
//! detection both scan the guarded-ratio reproduction series
//! ([`crate::model::detection_reproduction_number`]), the same quantity the
//! regularizer penalizes during fitting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::infer_npi_day;
use crate::fitter::{fit, FitConfig, FitResult};
use crate::kernels::Kernel;
use crate::model::{detection_reproduction_number, LOG_CHANGE_THRESHOLD};
use crate::series::{DeathSeries, ReproductionSeries};

/// Candidate values for the dynamics-loss weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaGrid {
    values: Vec<f64>,
}

impl GammaGrid {
    /// `count` log-spaced values with exact endpoints.
    pub fn log_spaced(min: f64, max: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::Config("grid needs at least one value".into()));
        }
        if !(min > 0.0) || !min.is_finite() {
            return Err(Error::Config(format!("grid minimum must be positive, got {min}")));
        }
        if count == 1 {
            return Ok(GammaGrid { values: vec![min] });
        }
        if !(max > min) || !max.is_finite() {
            return Err(Error::Config(format!(
                "grid maximum must exceed the minimum, got [{min}, {max}]"
            )));
        }
        let ratio = max.ln() - min.ln();
        let mut values: Vec<f64> = (0..count)
            .map(|i| (min.ln() + ratio * i as f64 / (count - 1) as f64).exp())
            .collect();
        values[0] = min;
        values[count - 1] = max;
        Ok(GammaGrid { values })
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("grid needs at least one value".into()));
        }
        if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Config("grid values must be positive".into()));
        }
        if values.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::Config("grid values must be strictly increasing".into()));
        }
        Ok(GammaGrid { values })
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

impl Default for GammaGrid {
    /// 41 log-spaced values on [0.1, 10].
    fn default() -> Self {
        GammaGrid::log_spaced(0.1, 10.0, 41).expect("valid default grid")
    }
}

/// Count of day-over-day `ln R` changes at or above a threshold, plus the
/// number of transitions that could not be assessed because an endpoint was
/// undefined or non-positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegimeChanges {
    pub count: usize,
    pub skipped: usize,
}

pub fn count_regime_changes(r: &ReproductionSeries, threshold: f64) -> RegimeChanges {
    RegimeChanges {
        count: r
            .log_changes()
            .filter(|(_, d)| d.abs() >= threshold)
            .count(),
        skipped: r.skipped_transitions(),
    }
}

/// Scoring mode for the information criterion.
///
/// `Default` is the standard form `2k + 2 T L` per location, selected by
/// minimization. `Literal` is `2k - 2 T L` selected by maximization; it
/// rewards extra regime changes and is kept only for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AicMode {
    Default,
    Literal,
}

/// Per-location ingredients of an information-criterion score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AicInput {
    /// Regime-change count `k`.
    pub changes: usize,
    /// Series length `T`.
    pub days: usize,
    /// Weighted mean daily data loss.
    pub data_loss: f64,
}

/// Sums the per-location scores; additivity over locations is exact.
pub fn aic_score(inputs: &[AicInput], mode: AicMode) -> f64 {
    inputs
        .iter()
        .map(|c| {
            let fit_term = 2.0 * c.days as f64 * c.data_loss;
            match mode {
                AicMode::Default => 2.0 * c.changes as f64 + fit_term,
                AicMode::Literal => 2.0 * c.changes as f64 - fit_term,
            }
        })
        .sum()
}

/// One completed (location, gamma) fit inside a sweep.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub location: String,
    pub gamma: f64,
    pub fit: FitResult,
    /// Guarded-ratio reproduction series used for counting and detection.
    pub detection_r: ReproductionSeries,
    pub changes: usize,
    pub skipped_transitions: usize,
    /// Mean unweighted negative Poisson log-likelihood (diagnostic).
    pub unweighted_data_loss: f64,
}

/// A fit that failed; the sweep records it and moves on.
#[derive(Debug, Clone)]
pub struct SweepFailure {
    pub location: String,
    pub gamma: f64,
    pub detail: String,
}

/// Everything a selection pass needs: all fits, per-gamma scores, and the
/// prospective choices under both scoring modes.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub grid: GammaGrid,
    /// Gamma-major order: all locations at the first gamma, then the next.
    pub cells: Vec<SweepCell>,
    pub failures: Vec<SweepFailure>,
    /// Per-gamma scores over converged cells; `None` when nothing scorable.
    pub aic_default: Vec<Option<f64>>,
    pub aic_literal: Vec<Option<f64>>,
    /// Grid value minimizing the default score.
    pub prospective_default: Option<f64>,
    /// Grid value maximizing the literal score.
    pub prospective_literal: Option<f64>,
}

impl SweepResult {
    pub fn cell(&self, location: &str, gamma: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.location == location && c.gamma == gamma)
    }

    /// Selected gamma for the requested scoring mode.
    pub fn prospective(&self, mode: AicMode) -> Option<f64> {
        match mode {
            AicMode::Default => self.prospective_default,
            AicMode::Literal => self.prospective_literal,
        }
    }
}

/// Sweep configuration: the per-fit settings (gamma is overwritten per grid
/// value), the change-counting threshold, and the worker-pool width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub fit: FitConfig,
    pub change_threshold: f64,
    /// Fit worker threads; 0 means one per available core.
    pub parallelism: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            fit: FitConfig::default(),
            change_threshold: LOG_CHANGE_THRESHOLD,
            parallelism: 0,
        }
    }
}

/// Runs every (gamma, location) fit on a bounded worker pool, returning
/// results in task order so the outcome matches a sequential run exactly.
fn run_fits(
    locations: &[DeathSeries],
    grid: &GammaGrid,
    f: &Kernel,
    w: &Kernel,
    config: &SweepConfig,
) -> Vec<std::result::Result<FitResult, Error>> {
    let tasks: Vec<(f64, &DeathSeries)> = grid
        .values()
        .iter()
        .flat_map(|&gamma| locations.iter().map(move |s| (gamma, s)))
        .collect();
    let run = |&(gamma, series): &(f64, &DeathSeries)| {
        let mut cfg = config.fit;
        cfg.gamma = gamma;
        fit(&series.counts, f, w, &cfg)
    };
    let pool = if config.parallelism > 0 {
        config.parallelism
    } else {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    }
    .min(tasks.len())
    .max(1);
    if pool == 1 {
        return tasks.iter().map(run).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut results: Vec<Option<std::result::Result<FitResult, Error>>> =
        (0..tasks.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let workers: Vec<_> = (0..pool)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        if i >= tasks.len() {
                            return done;
                        }
                        done.push((i, run(&tasks[i])));
                    }
                })
            })
            .collect();
        for worker in workers {
            for (i, r) in worker.join().expect("fit worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    results.into_iter().map(|r| r.expect("every task ran")).collect()
}

/// Fits every location at every grid value and scores each gamma.
///
/// The fits run on a bounded worker pool (see [`SweepConfig::parallelism`]).
/// Individual fit failures are recorded and skipped; unconverged fits are
/// excluded from the scores with a warning. Deterministic given identical
/// inputs and configuration, whatever the pool width.
pub fn sweep(
    locations: &[DeathSeries],
    grid: &GammaGrid,
    f: &Kernel,
    w: &Kernel,
    config: &SweepConfig,
) -> Result<SweepResult> {
    if locations.is_empty() {
        return Err(Error::Config("sweep needs at least one location".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for series in locations {
        if !seen.insert(series.location.as_str()) {
            return Err(Error::Config(format!(
                "duplicate location label {:?}",
                series.location.as_str()
            )));
        }
    }
    let mut fits = run_fits(locations, grid, f, w, config).into_iter();
    let log_guard = config.fit.log_guard;
    let mut cells = Vec::with_capacity(locations.len() * grid.len());
    let mut failures = Vec::new();
    let mut aic_default = Vec::with_capacity(grid.len());
    let mut aic_literal = Vec::with_capacity(grid.len());
    for &gamma in grid.values() {
        let mut inputs = Vec::with_capacity(locations.len());
        let mut scorable = true;
        for series in locations {
            let result = match fits.next().expect("one fit per task") {
                Ok(r) => r,
                Err(e) => {
                    failures.push(SweepFailure {
                        location: series.location.clone(),
                        gamma,
                        detail: e.to_string(),
                    });
                    scorable = false;
                    continue;
                }
            };
            let detection_r = detection_reproduction_number(&result.j, w, log_guard);
            let regime = count_regime_changes(&detection_r, config.change_threshold);
            let unweighted = -result
                .lambda
                .values()
                .iter()
                .zip(&series.counts)
                .map(|(&l, &n)| crate::model::poisson_loglik(n, l, log_guard))
                .sum::<f64>()
                / series.counts.len() as f64;
            if result.converged {
                inputs.push(AicInput {
                    changes: regime.count,
                    days: series.counts.len(),
                    data_loss: result.losses.data,
                });
            } else {
                log::warn!(
                    "fit for {:?} at gamma {gamma} did not converge; excluded from scores",
                    series.location.as_str()
                );
                scorable = false;
            }
            cells.push(SweepCell {
                location: series.location.clone(),
                gamma,
                fit: result,
                detection_r,
                changes: regime.count,
                skipped_transitions: regime.skipped,
                unweighted_data_loss: unweighted,
            });
        }
        if scorable && inputs.len() == locations.len() {
            aic_default.push(Some(aic_score(&inputs, AicMode::Default)));
            aic_literal.push(Some(aic_score(&inputs, AicMode::Literal)));
        } else {
            aic_default.push(None);
            aic_literal.push(None);
        }
    }
    let prospective_default = pick(grid, &aic_default, false);
    let prospective_literal = pick(grid, &aic_literal, true);
    Ok(SweepResult {
        grid: grid.clone(),
        cells,
        failures,
        aic_default,
        aic_literal,
        prospective_default,
        prospective_literal,
    })
}

/// Grid value optimizing a per-gamma score; ties keep the first optimum.
fn pick(grid: &GammaGrid, scores: &[Option<f64>], maximize: bool) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for (&gamma, score) in grid.values().iter().zip(scores) {
        let Some(s) = *score else { continue };
        let better = match best {
            None => true,
            Some((bs, _)) => {
                if maximize {
                    s > bs
                } else {
                    s < bs
                }
            }
        };
        if better {
            best = Some((s, gamma));
        }
    }
    best.map(|(_, g)| g)
}

/// A recorded intervention mapped onto a location's day axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NpiTarget {
    pub location: String,
    /// 1-based day of the intervention within that location's series.
    pub day: usize,
}

/// Outcome of the retrospective pass: the chosen gamma, its timing MSE, and
/// the per-gamma MSE trace (None where any intervention went undetected).
#[derive(Debug, Clone, PartialEq)]
pub struct RetrospectiveChoice {
    pub gamma: f64,
    pub mse: f64,
    pub per_gamma_mse: Vec<(f64, Option<f64>)>,
}

/// Picks the grid value whose detected intervention dates have the smallest
/// mean squared offset. The mean runs over all (location, intervention)
/// pairs, so a gamma scores only when it detects every one of them; missing
/// any pair excludes that gamma outright. Exact MSE ties resolve toward the
/// larger gamma (stronger regularization at equal timing quality).
pub fn retrospective_select(
    sweep: &SweepResult,
    targets: &[NpiTarget],
    window: usize,
) -> Result<RetrospectiveChoice> {
    if targets.is_empty() {
        return Err(Error::Config("retrospective selection needs interventions".into()));
    }
    let mut per_gamma = Vec::with_capacity(sweep.grid.len());
    let mut best: Option<(f64, f64)> = None;
    for &gamma in sweep.grid.values() {
        let mut sum = 0.0;
        let mut covered = true;
        for target in targets {
            let detected = match sweep.cell(&target.location, gamma) {
                Some(cell) => infer_npi_day(&cell.detection_r, target.day, window)?.inferred_day,
                None => None,
            };
            match detected {
                Some(day) => {
                    let offset = day as f64 - target.day as f64;
                    sum += offset * offset;
                }
                None => {
                    covered = false;
                    break;
                }
            }
        }
        let mse = if covered {
            Some(sum / targets.len() as f64)
        } else {
            None
        };
        per_gamma.push((gamma, mse));
        if let Some(m) = mse {
            let take = match best {
                None => true,
                Some((bm, _)) => m <= bm, // ties fall to the later (larger) gamma
            };
            if take {
                best = Some((m, gamma));
            }
        }
    }
    match best {
        Some((mse, gamma)) => Ok(RetrospectiveChoice {
            gamma,
            mse,
            per_gamma_mse: per_gamma,
        }),
        None => Err(Error::NoSelection),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{default_death_delay, default_generation_interval};
    use crate::model::{expected_deaths, objective, reproduction_number};
    use crate::series::IncidenceSeries;
    use crate::simulator::{make_benchmark_suite, sample_scenario};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn r_series(values: Vec<f64>) -> ReproductionSeries {
        ReproductionSeries::from_values(values.into_iter().map(Some).collect())
    }

    #[test]
    fn default_grid_matches_the_published_layout() {
        let grid = GammaGrid::default();
        assert_eq!(grid.len(), 41);
        assert_eq!(grid.values()[0], 0.1);
        assert_eq!(grid.values()[40], 10.0);
        let expected_ratio = 10f64.powf(2.0 / 40.0);
        for pair in grid.values().windows(2) {
            assert_relative_eq!(pair[1] / pair[0], expected_ratio, max_relative = 1e-12);
        }
    }

    #[test]
    fn grid_validation_rejects_bad_inputs() {
        assert!(GammaGrid::log_spaced(0.1, 10.0, 0).is_err());
        assert!(GammaGrid::log_spaced(0.0, 10.0, 5).is_err());
        assert!(GammaGrid::log_spaced(1.0, 0.5, 5).is_err());
        assert!(GammaGrid::from_values(vec![]).is_err());
        assert!(GammaGrid::from_values(vec![1.0, 1.0]).is_err());
        let single = GammaGrid::log_spaced(2.51, 2.51, 1).unwrap();
        assert_eq!(single.values(), &[2.51]);
    }

    #[test]
    fn change_counting_matches_examples() {
        let flat = r_series(vec![1.3; 80]);
        assert_eq!(count_regime_changes(&flat, 1e-3).count, 0);

        let mut vals = vec![1.0; 49];
        vals.extend(vec![2.0; 50]); // step once inside a 100-day series
        assert_eq!(count_regime_changes(&r_series(vals), 1e-3).count, 1);

        let wiggly: Vec<f64> = (0..80)
            .map(|i| if i % 2 == 0 { 1.0 } else { 1.0 * (5e-4f64).exp() })
            .collect();
        assert_eq!(count_regime_changes(&r_series(wiggly), 1e-3).count, 0);
    }

    #[test]
    fn exactly_threshold_counts() {
        let vals = vec![1.0, 1.0, (1e-3f64).exp(), (1e-3f64).exp()];
        assert_eq!(count_regime_changes(&r_series(vals), 1e-3).count, 1);
    }

    #[test]
    fn undefined_entries_are_reported_not_counted() {
        let vals = vec![Some(1.0), None, Some(2.0), Some(2.0)];
        let r = ReproductionSeries::from_values(vals);
        let rc = count_regime_changes(&r, 1e-3);
        assert_eq!(rc.count, 0);
        assert_eq!(rc.skipped, 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn counting_is_non_increasing_in_threshold(
            values in proptest::collection::vec(0.1f64..10.0, 3..60),
            lo in 1e-4f64..1e-2,
            factor in 1.5f64..20.0,
        ) {
            let r = r_series(values);
            let a = count_regime_changes(&r, lo).count;
            let b = count_regime_changes(&r, lo * factor).count;
            prop_assert!(a >= b);
        }
    }

    #[test]
    fn score_arithmetic_matches_hand_values() {
        let one = [AicInput {
            changes: 3,
            days: 100,
            data_loss: 0.9,
        }];
        assert_relative_eq!(aic_score(&one, AicMode::Default), 186.0);
        assert_relative_eq!(aic_score(&one, AicMode::Literal), 6.0 - 180.0);

        let zero = [AicInput {
            changes: 0,
            days: 50,
            data_loss: 0.0,
        }];
        assert_eq!(aic_score(&zero, AicMode::Default), 0.0);

        let two = [one[0], one[0]];
        assert_eq!(aic_score(&two, AicMode::Default), 2.0 * aic_score(&one, AicMode::Default));
    }

    /// Fabricated sweep; each gamma's detection series halves at every
    /// listed step day.
    fn fake_sweep_steps(per_gamma_steps: &[(f64, Vec<usize>)]) -> SweepResult {
        let f = default_death_delay();
        let w = default_generation_interval();
        let j = IncidenceSeries::new(vec![1.0; 100]).unwrap();
        let lambda = expected_deaths(&j, &f);
        let losses = objective(&j, &[1; 100], &f, &w, 1.0, 0.1).unwrap();
        let grid =
            GammaGrid::from_values(per_gamma_steps.iter().map(|(g, _)| *g).collect()).unwrap();
        let cells = per_gamma_steps
            .iter()
            .map(|(gamma, steps)| {
                let mut vals = vec![1.0; 99];
                for (i, v) in vals.iter_mut().enumerate() {
                    let drops = steps.iter().filter(|&&d| i + 2 >= d).count();
                    *v = 0.5f64.powi(drops as i32);
                }
                SweepCell {
                    location: "x".into(),
                    gamma: *gamma,
                    fit: FitResult {
                        j: j.clone(),
                        lambda: lambda.clone(),
                        r: reproduction_number(&j, &w),
                        losses,
                        iterations: 1,
                        converged: true,
                        cutoff_index: 0,
                    },
                    detection_r: r_series(vals),
                    changes: steps.len(),
                    skipped_transitions: 0,
                    unweighted_data_loss: 1.0,
                }
            })
            .collect();
        SweepResult {
            grid,
            cells,
            failures: vec![],
            aic_default: vec![Some(0.0); per_gamma_steps.len()],
            aic_literal: vec![Some(0.0); per_gamma_steps.len()],
            prospective_default: None,
            prospective_literal: None,
        }
    }

    /// Fabricated sweep with one detection step per gamma.
    fn fake_sweep(per_gamma_step_days: &[(f64, usize)]) -> SweepResult {
        let steps: Vec<(f64, Vec<usize>)> = per_gamma_step_days
            .iter()
            .map(|&(g, d)| (g, vec![d]))
            .collect();
        fake_sweep_steps(&steps)
    }

    #[test]
    fn retrospective_picks_the_best_timed_gamma() {
        // true intervention at day 50; gamma=1.0 nails it
        let sweep = fake_sweep(&[(0.1, 52), (1.0, 50), (10.0, 53)]);
        let targets = [NpiTarget {
            location: "x".into(),
            day: 50,
        }];
        let choice = retrospective_select(&sweep, &targets, 9).unwrap();
        assert_eq!(choice.gamma, 1.0);
        assert_eq!(choice.mse, 0.0);
        assert_eq!(choice.per_gamma_mse.len(), 3);
        assert_eq!(choice.per_gamma_mse[0].1, Some(4.0));
    }

    #[test]
    fn retrospective_ties_resolve_to_larger_gamma() {
        let sweep = fake_sweep(&[(0.1, 51), (1.0, 49), (10.0, 51)]);
        let targets = [NpiTarget {
            location: "x".into(),
            day: 50,
        }];
        let choice = retrospective_select(&sweep, &targets, 9).unwrap();
        assert_eq!(choice.mse, 1.0);
        assert_eq!(choice.gamma, 10.0);
    }

    #[test]
    fn retrospective_requires_full_coverage() {
        // gamma 1.0 misses the second intervention entirely; a perfect hit on
        // the first cannot rescue it, so the fully covering gamma wins
        let sweep = fake_sweep_steps(&[(1.0, vec![50]), (2.0, vec![52, 88])]);
        let targets = [
            NpiTarget {
                location: "x".into(),
                day: 50,
            },
            NpiTarget {
                location: "x".into(),
                day: 90,
            },
        ];
        let choice = retrospective_select(&sweep, &targets, 9).unwrap();
        assert_eq!(choice.gamma, 2.0);
        assert_eq!(choice.mse, 4.0);
        assert_eq!(choice.per_gamma_mse[0], (1.0, None));
        assert_eq!(choice.per_gamma_mse[1], (2.0, Some(4.0)));
    }

    #[test]
    fn retrospective_with_single_gamma_returns_it() {
        let sweep = fake_sweep(&[(2.51, 50)]);
        let targets = [NpiTarget {
            location: "x".into(),
            day: 50,
        }];
        assert_eq!(retrospective_select(&sweep, &targets, 9).unwrap().gamma, 2.51);
    }

    #[test]
    fn retrospective_errors_when_nothing_is_detectable() {
        // steps far outside every scan window
        let sweep = fake_sweep(&[(0.1, 90), (1.0, 90)]);
        let targets = [NpiTarget {
            location: "x".into(),
            day: 20,
        }];
        assert!(matches!(
            retrospective_select(&sweep, &targets, 9),
            Err(Error::NoSelection)
        ));
        assert!(retrospective_select(&sweep, &[], 9).is_err());
    }

    #[test]
    fn sweep_runs_the_full_grid_deterministically() {
        let f = default_death_delay();
        let w = default_generation_interval();
        let suite = make_benchmark_suite().unwrap();
        let deaths = sample_scenario(&suite[0], 11).unwrap();
        let grid = GammaGrid::from_values(vec![0.5, 2.51]).unwrap();
        let mut config = SweepConfig::default();
        config.fit.max_iterations = 1200;
        // loose tolerance so the short fits register as converged and score
        config.fit.convergence_tol = 1e-2;

        let a = sweep(std::slice::from_ref(&deaths), &grid, &f, &w, &config).unwrap();
        let b = sweep(std::slice::from_ref(&deaths), &grid, &f, &w, &config).unwrap();
        assert_eq!(a.cells.len(), 2);
        assert!(a.failures.is_empty());
        for (ca, cb) in a.cells.iter().zip(&b.cells) {
            assert_eq!(ca.fit.j.values(), cb.fit.j.values());
            assert_eq!(ca.changes, cb.changes);
        }
        assert_eq!(a.aic_default, b.aic_default);
        // scores exist and the prospective choice is a grid member
        assert!(a.aic_default.iter().all(|s| s.is_some()));
        let pick = a.prospective_default.unwrap();
        assert!(grid.values().contains(&pick));
        // literal mode maximizes; both picks come from the same grid
        assert!(grid.values().contains(&a.prospective_literal.unwrap()));
    }

    #[test]
    fn worker_pool_width_does_not_change_the_sweep() {
        let f = default_death_delay();
        let w = default_generation_interval();
        let suite = make_benchmark_suite().unwrap();
        let one = sample_scenario(&suite[0], 3).unwrap();
        let mut two = sample_scenario(&suite[0], 4).unwrap();
        two.location = "other".into();
        let locations = [one, two];
        let grid = GammaGrid::from_values(vec![0.5, 2.51]).unwrap();
        let mut config = SweepConfig::default();
        config.fit.max_iterations = 600;
        config.parallelism = 1;
        let seq = sweep(&locations, &grid, &f, &w, &config).unwrap();
        config.parallelism = 3;
        let par = sweep(&locations, &grid, &f, &w, &config).unwrap();
        assert_eq!(seq.cells.len(), par.cells.len());
        for (a, b) in seq.cells.iter().zip(&par.cells) {
            assert_eq!(a.location, b.location);
            assert_eq!(a.gamma, b.gamma);
            assert_eq!(a.fit.j.values(), b.fit.j.values());
        }
        assert_eq!(seq.aic_default, par.aic_default);
    }

    #[test]
    fn sweep_rejects_empty_and_duplicate_inputs() {
        let f = default_death_delay();
        let w = default_generation_interval();
        let grid = GammaGrid::from_values(vec![1.0]).unwrap();
        assert!(sweep(&[], &grid, &f, &w, &SweepConfig::default()).is_err());

        let suite = make_benchmark_suite().unwrap();
        let d = sample_scenario(&suite[0], 1).unwrap();
        let dupes = vec![d.clone(), d];
        assert!(sweep(&dupes, &grid, &f, &w, &SweepConfig::default()).is_err());
    }
}
