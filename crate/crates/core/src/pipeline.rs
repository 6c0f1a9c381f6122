//! End-to-end orchestration: ingest, fit or sweep, select, evaluate, emit.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{
    build_offset_report, fluctuation_statistic, infer_npi_day, NpiRecord, OffsetReport,
    OffsetRow, DEFAULT_WINDOW,
};
use crate::fitter::{fit, FitConfig, FitResult};
use crate::io;
use crate::kernels::{self, discretize, gamma_from_moments, Kernel};
use crate::model::{detection_reproduction_number, LOG_CHANGE_THRESHOLD};
use crate::selection::{
    retrospective_select, sweep, GammaGrid, NpiTarget, SweepConfig, SweepResult,
};
use crate::series::{DeathSeries, ReproductionSeries};

/// How the pipeline picks the regularization weight after a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Standard information-criterion minimization.
    #[default]
    AicDefault,
    /// The sign-flipped score maximization kept behind this flag.
    AicLiteral,
    /// Timing-error minimization against known intervention dates.
    Retrospective,
}

impl SelectionMode {
    pub fn parse(text: &str) -> Option<SelectionMode> {
        match text.trim().to_ascii_lowercase().as_str() {
            "aic_default" | "aic-default" => Some(SelectionMode::AicDefault),
            "aic_literal" | "aic-literal" => Some(SelectionMode::AicLiteral),
            "retrospective" => Some(SelectionMode::Retrospective),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SelectionMode::AicDefault => "aic_default",
            SelectionMode::AicLiteral => "aic_literal",
            SelectionMode::Retrospective => "retrospective",
        }
    }
}

/// Flat run configuration; every field has a default so a config file only
/// needs to mention what it overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Death-count CSV paths, one per location.
    pub deaths: Vec<PathBuf>,
    /// Optional intervention CSV.
    pub npis: Option<PathBuf>,
    /// Directory receiving every artifact.
    pub output_dir: PathBuf,
    /// Post-sweep gamma selection rule.
    pub selection_mode: SelectionMode,
    /// When set, fit this single gamma and skip the sweep entirely.
    pub gamma: Option<f64>,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_count: usize,
    pub generation_mean: f64,
    pub generation_sd: f64,
    pub generation_length: usize,
    pub delay_mean: f64,
    pub delay_sd: f64,
    pub delay_length: usize,
    pub max_iterations: usize,
    pub step_size: f64,
    pub convergence_tol: f64,
    pub rng_seed: u64,
    pub smooth_abs_epsilon: f64,
    pub log_guard: f64,
    /// Minimum |ln R| jump that counts as a regime change.
    pub change_threshold: f64,
    /// Odd width of the evaluation scan window.
    pub window: usize,
    /// Sweep worker threads; 0 means one per available core.
    pub parallelism: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fit = FitConfig::default();
        RunConfig {
            deaths: Vec::new(),
            npis: None,
            output_dir: PathBuf::from("out"),
            selection_mode: SelectionMode::AicDefault,
            gamma: None,
            grid_min: 0.1,
            grid_max: 10.0,
            grid_count: 41,
            generation_mean: kernels::GENERATION_MEAN,
            generation_sd: kernels::GENERATION_SD,
            generation_length: kernels::GENERATION_LENGTH,
            delay_mean: kernels::DEATH_DELAY_MEAN,
            delay_sd: kernels::DEATH_DELAY_SD,
            delay_length: kernels::DEATH_DELAY_LENGTH,
            max_iterations: fit.max_iterations,
            step_size: fit.step_size,
            convergence_tol: fit.convergence_tol,
            rng_seed: fit.rng_seed,
            smooth_abs_epsilon: fit.smooth_abs_epsilon,
            log_guard: fit.log_guard,
            change_threshold: LOG_CHANGE_THRESHOLD,
            window: DEFAULT_WINDOW,
            parallelism: 0,
        }
    }
}

impl RunConfig {
    /// Reads a flat key-value JSON config; unknown keys are rejected.
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| Error::Json {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    }

    /// Per-fit settings with the given gamma.
    pub fn fit_config(&self, gamma: f64) -> FitConfig {
        FitConfig {
            gamma,
            max_iterations: self.max_iterations,
            step_size: self.step_size,
            convergence_tol: self.convergence_tol,
            rng_seed: self.rng_seed,
            smooth_abs_epsilon: self.smooth_abs_epsilon,
            log_guard: self.log_guard,
        }
    }

    /// Discretized delay and generation kernels from the configured moments.
    pub fn kernels(&self) -> Result<(Kernel, Kernel)> {
        let f = discretize(
            &gamma_from_moments(self.delay_mean, self.delay_sd)?,
            0,
            self.delay_length,
        )?;
        let w = discretize(
            &gamma_from_moments(self.generation_mean, self.generation_sd)?,
            1,
            self.generation_length,
        )?;
        Ok((f, w))
    }

    fn grid(&self) -> Result<GammaGrid> {
        GammaGrid::log_spaced(self.grid_min, self.grid_max, self.grid_count)
    }
}

/// Per-location results for the selected gamma.
#[derive(Debug, Clone)]
pub struct LocationOutcome {
    pub location: String,
    /// Mean squared Pearson residual of the counts under the fitted intensity.
    pub fluctuation: f64,
    pub series_path: PathBuf,
}

/// What a pipeline run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub selected_gamma: f64,
    pub selection_mode: SelectionMode,
    /// True when a fixed gamma was fitted and no sweep ran.
    pub single_gamma: bool,
    pub locations: Vec<LocationOutcome>,
    pub report: OffsetReport,
    pub sweep_path: Option<PathBuf>,
    pub offsets_path: PathBuf,
    pub histogram_path: PathBuf,
}

fn validate(config: &RunConfig) -> Result<()> {
    if config.deaths.is_empty() {
        return Err(Error::Config("no death-count files given".into()));
    }
    for path in &config.deaths {
        if !path.is_file() {
            return Err(Error::Config(format!(
                "deaths file {} does not exist",
                path.display()
            )));
        }
    }
    if let Some(path) = &config.npis {
        if !path.is_file() {
            return Err(Error::Config(format!(
                "intervention file {} does not exist",
                path.display()
            )));
        }
    }
    if config.selection_mode == SelectionMode::Retrospective
        && config.gamma.is_none()
        && config.npis.is_none()
    {
        return Err(Error::Config(
            "retrospective selection needs an intervention file".into(),
        ));
    }
    if let Some(g) = config.gamma {
        if !g.is_finite() || g < 0.0 {
            return Err(Error::Config(format!("gamma must be finite and >= 0, got {g}")));
        }
    } else {
        config.grid()?;
    }
    if config.window == 0 || config.window % 2 == 0 {
        return Err(Error::Config(format!(
            "scan window must be odd, got {}",
            config.window
        )));
    }
    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| Error::io(&config.output_dir, e))?;
    Ok(())
}

fn ingest(config: &RunConfig) -> Result<(Vec<DeathSeries>, Vec<NpiRecord>)> {
    let mut series = Vec::with_capacity(config.deaths.len());
    for path in &config.deaths {
        series.push(io::load_deaths_csv(path)?);
    }
    let mut seen = std::collections::HashSet::new();
    for s in &series {
        if !seen.insert(s.location.as_str()) {
            return Err(Error::Config(format!(
                "duplicate location label {:?} across input files",
                s.location
            )));
        }
    }
    let npis = match &config.npis {
        Some(path) => io::load_npi_csv(path)?,
        None => Vec::new(),
    };
    Ok((series, npis))
}

/// One location's fit at the selected gamma, plus the guarded ratio series
/// the evaluation scans.
struct SelectedFit {
    fit: FitResult,
    detection_r: ReproductionSeries,
}

fn npi_targets(series: &[DeathSeries], npis: &[NpiRecord]) -> Vec<NpiTarget> {
    let mut targets = Vec::new();
    for npi in npis {
        let Some(s) = series.iter().find(|s| s.location == npi.location) else {
            log::warn!(
                "intervention {:?} references unknown location {:?}; skipped",
                npi.label,
                npi.location
            );
            continue;
        };
        match s.day_index(npi.date) {
            Some(day) => targets.push(NpiTarget {
                location: npi.location.clone(),
                day,
            }),
            None => log::warn!(
                "intervention {:?} on {} falls outside the {} series; skipped",
                npi.label,
                npi.date,
                npi.location
            ),
        }
    }
    targets
}

fn select_gamma(
    config: &RunConfig,
    sweep_result: &SweepResult,
    series: &[DeathSeries],
    npis: &[NpiRecord],
) -> Result<f64> {
    match config.selection_mode {
        SelectionMode::AicDefault => sweep_result.prospective_default.ok_or_else(|| {
            Error::Selection(
                "no scorable gamma: every grid value had a failed or unconverged fit".into(),
            )
        }),
        SelectionMode::AicLiteral => sweep_result.prospective_literal.ok_or_else(|| {
            Error::Selection(
                "no scorable gamma: every grid value had a failed or unconverged fit".into(),
            )
        }),
        SelectionMode::Retrospective => {
            let targets = npi_targets(series, npis);
            if targets.is_empty() {
                return Err(Error::Selection(
                    "no intervention falls inside any loaded series".into(),
                ));
            }
            Ok(retrospective_select(sweep_result, &targets, config.window)?.gamma)
        }
    }
}

/// Runs the whole pipeline and writes every artifact into the output
/// directory. Errors carry the stage they surfaced in.
pub fn run_pipeline(config: &RunConfig) -> Result<RunSummary> {
    validate(config).map_err(|e| e.in_stage("config"))?;
    let (series, npis) = ingest(config).map_err(|e| e.in_stage("ingest"))?;
    let (f, w) = config.kernels().map_err(|e| e.in_stage("kernels"))?;

    let mut sweep_path = None;
    let (selected_gamma, fits): (f64, Vec<SelectedFit>) = match config.gamma {
        Some(gamma) => {
            let cfg = config.fit_config(gamma);
            let mut fits = Vec::with_capacity(series.len());
            for s in &series {
                let result = fit(&s.counts, &f, &w, &cfg).map_err(|e| e.in_stage("fit"))?;
                let detection_r = detection_reproduction_number(&result.j, &w, cfg.log_guard);
                fits.push(SelectedFit {
                    fit: result,
                    detection_r,
                });
            }
            (gamma, fits)
        }
        None => {
            let grid = config.grid().map_err(|e| e.in_stage("config"))?;
            let sweep_config = SweepConfig {
                fit: config.fit_config(1.0),
                change_threshold: config.change_threshold,
                parallelism: config.parallelism,
            };
            let result = sweep(&series, &grid, &f, &w, &sweep_config)
                .map_err(|e| e.in_stage("sweep"))?;
            let path = config.output_dir.join("sweep.csv");
            io::write_sweep_csv(&path, &result).map_err(|e| e.in_stage("emit"))?;
            sweep_path = Some(path);
            let gamma = select_gamma(config, &result, &series, &npis)
                .map_err(|e| e.in_stage("selection"))?;
            let mut fits = Vec::with_capacity(series.len());
            for s in &series {
                let cell = result.cell(&s.location, gamma).ok_or_else(|| {
                    Error::Selection(format!(
                        "selected gamma {gamma} has no fit for {}",
                        s.location
                    ))
                    .in_stage("selection")
                })?;
                fits.push(SelectedFit {
                    fit: cell.fit.clone(),
                    detection_r: cell.detection_r.clone(),
                });
            }
            (gamma, fits)
        }
    };

    let mut rows = Vec::new();
    let mut outcomes = Vec::with_capacity(series.len());
    for (s, selected) in series.iter().zip(&fits) {
        for npi in npis.iter().filter(|n| n.location == s.location) {
            let Some(npi_day) = s.day_index(npi.date) else {
                log::warn!(
                    "intervention {:?} on {} falls outside the {} series; skipped",
                    npi.label,
                    npi.date,
                    s.location
                );
                continue;
            };
            let scan = infer_npi_day(&selected.detection_r, npi_day, config.window)
                .map_err(|e| e.in_stage("evaluation"))?;
            rows.push(OffsetRow {
                location: s.location.clone(),
                label: npi.label.clone(),
                kind: npi.kind,
                npi_date: npi.date,
                npi_day,
                inferred_day: scan.inferred_day,
                inferred_date: scan.inferred_day.map(|d| s.date_at(d)),
                offset: scan.inferred_day.map(|d| d as i64 - npi_day as i64),
                strongest_change: scan.strongest_change,
                truncated_window: scan.truncated,
            });
        }
        let fluctuation = fluctuation_statistic(&s.counts, &selected.fit.lambda)
            .map_err(|e| e.in_stage("evaluation"))?;
        let series_path = config.output_dir.join(format!("{}_series.csv", s.location));
        io::write_series_csv(&series_path, s, &selected.fit).map_err(|e| e.in_stage("emit"))?;
        outcomes.push(LocationOutcome {
            location: s.location.clone(),
            fluctuation,
            series_path,
        });
    }

    let report = build_offset_report(rows);
    let offsets_path = config.output_dir.join("offsets.json");
    io::write_offsets_json(&offsets_path, &report).map_err(|e| e.in_stage("emit"))?;
    let histogram_path = config.output_dir.join("histogram.csv");
    io::write_histogram_csv(&histogram_path, &report.histogram)
        .map_err(|e| e.in_stage("emit"))?;

    Ok(RunSummary {
        selected_gamma,
        selection_mode: config.selection_mode,
        single_gamma: config.gamma.is_some(),
        locations: outcomes,
        report,
        sweep_path,
        offsets_path,
        histogram_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{make_benchmark_suite, sample_scenario};

    fn write_small_inputs(dir: &Path) -> (PathBuf, PathBuf) {
        let scenario = &make_benchmark_suite().unwrap()[0];
        let series = sample_scenario(scenario, 5).unwrap();
        let clipped = DeathSeries::new(
            "alpha",
            series.start_date,
            series.counts[..90].to_vec(),
        )
        .unwrap();
        let deaths = dir.join("alpha.csv");
        io::write_deaths_csv(&deaths, &clipped).unwrap();
        let npi_date = clipped.date_at(40);
        let npis = dir.join("npis.csv");
        std::fs::write(
            &npis,
            format!("location,date,label,kind\nalpha,{npi_date},lockdown,implement\n"),
        )
        .unwrap();
        (deaths, npis)
    }

    fn quick_config(dir: &Path, deaths: PathBuf, npis: Option<PathBuf>) -> RunConfig {
        RunConfig {
            deaths: vec![deaths],
            npis,
            output_dir: dir.join("out"),
            gamma: Some(2.51),
            max_iterations: 400,
            ..RunConfig::default()
        }
    }

    #[test]
    fn config_file_overrides_only_what_it_mentions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(
            &path,
            r#"{"deaths": ["a.csv"], "gamma": 2.51, "selection_mode": "retrospective"}"#,
        )
        .unwrap();
        let config = RunConfig::load(&path).unwrap();
        assert_eq!(config.deaths, vec![PathBuf::from("a.csv")]);
        assert_eq!(config.gamma, Some(2.51));
        assert_eq!(config.selection_mode, SelectionMode::Retrospective);
        assert_eq!(config.grid_count, 41);
        assert_eq!(config.window, DEFAULT_WINDOW);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, r#"{"gam": 2.51}"#).unwrap();
        assert!(matches!(RunConfig::load(&path), Err(Error::Json { .. })));
    }

    #[test]
    fn selection_mode_strings_round_trip() {
        for mode in [
            SelectionMode::AicDefault,
            SelectionMode::AicLiteral,
            SelectionMode::Retrospective,
        ] {
            assert_eq!(SelectionMode::parse(mode.as_str()), Some(mode));
        }
        assert_eq!(SelectionMode::parse("bayes"), None);
    }

    #[test]
    fn retrospective_without_interventions_fails_before_any_fit() {
        let dir = tempfile::tempdir().unwrap();
        let (deaths, _) = write_small_inputs(dir.path());
        let config = RunConfig {
            deaths: vec![deaths],
            output_dir: dir.path().join("out"),
            selection_mode: SelectionMode::Retrospective,
            ..RunConfig::default()
        };
        match run_pipeline(&config) {
            Err(Error::Stage { stage: "config", .. }) => {}
            other => panic!("expected config-stage error, got {other:?}"),
        }
    }

    #[test]
    fn missing_deaths_file_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let config = RunConfig {
            deaths: vec![dir.path().join("absent.csv")],
            output_dir: dir.path().join("out"),
            ..RunConfig::default()
        };
        assert!(matches!(
            run_pipeline(&config),
            Err(Error::Stage { stage: "config", .. })
        ));
    }

    #[test]
    fn single_gamma_run_writes_series_and_reports() {
        let dir = tempfile::tempdir().unwrap();
        let (deaths, npis) = write_small_inputs(dir.path());
        let config = quick_config(dir.path(), deaths, Some(npis));
        let summary = run_pipeline(&config).unwrap();
        assert_eq!(summary.selected_gamma, 2.51);
        assert!(summary.single_gamma);
        assert!(summary.sweep_path.is_none());
        assert_eq!(summary.locations.len(), 1);
        assert!(summary.locations[0].series_path.is_file());
        assert!(summary.offsets_path.is_file());
        assert!(summary.histogram_path.is_file());
        assert_eq!(summary.report.rows.len(), 1);
        let body = std::fs::read_to_string(&summary.locations[0].series_path).unwrap();
        let mut lines = body.lines();
        assert_eq!(lines.next(), Some("date,n,lambda,j,R"));
        assert_eq!(body.lines().count(), 91);
        // day 1 has no reproduction number: trailing field empty
        assert!(body.lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn repeated_runs_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (deaths, npis) = write_small_inputs(dir.path());
        let mut first = quick_config(dir.path(), deaths, Some(npis));
        let mut second = first.clone();
        first.output_dir = dir.path().join("run1");
        second.output_dir = dir.path().join("run2");
        let a = run_pipeline(&first).unwrap();
        let b = run_pipeline(&second).unwrap();
        for (x, y) in [
            (&a.locations[0].series_path, &b.locations[0].series_path),
            (&a.offsets_path, &b.offsets_path),
            (&a.histogram_path, &b.histogram_path),
        ] {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
    }

    #[test]
    fn sweep_mode_emits_summary_and_selects_from_grid() {
        let dir = tempfile::tempdir().unwrap();
        let (deaths, npis) = write_small_inputs(dir.path());
        let config = RunConfig {
            deaths: vec![deaths],
            npis: Some(npis),
            output_dir: dir.path().join("out"),
            selection_mode: SelectionMode::Retrospective,
            grid_min: 0.5,
            grid_max: 5.0,
            grid_count: 3,
            max_iterations: 400,
            ..RunConfig::default()
        };
        let summary = run_pipeline(&config).unwrap();
        assert!(!summary.single_gamma);
        let sweep_path = summary.sweep_path.as_ref().unwrap();
        assert!(sweep_path.is_file());
        let body = std::fs::read_to_string(sweep_path).unwrap();
        assert!(body.starts_with(
            "gamma,location,k,data_loss,dynamics_loss,aic_default,aic_literal,converged,unweighted_data_loss"
        ));
        // header + one row per (gamma, location)
        assert_eq!(body.lines().count(), 4);
        let grid = GammaGrid::log_spaced(0.5, 5.0, 3).unwrap();
        assert!(grid.values().contains(&summary.selected_gamma));
    }
}
