//! Command-line driver: fit, sweep, select, evaluate, simulate, report.
//!
//! Every subcommand accepts a JSON config file plus flags that override
//! individual fields, runs the requested stage, and writes its artifacts
//! under the output directory. Failures exit non-zero with the stage named
//! in the message.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail};
use clap::{Args, Parser, Subcommand};

use epideconv::detection_reproduction_number;
use epideconv::evaluation::{build_offset_report, infer_npi_day, OffsetReport, OffsetRow};
use epideconv::io;
use epideconv::pipeline::{run_pipeline, RunConfig, RunSummary, SelectionMode};
use epideconv::selection::{sweep, GammaGrid, SweepConfig};
use epideconv::series::DeathSeries;
use epideconv::simulator::{ground_truth, make_benchmark_suite, sample_scenario, GroundTruth};

#[derive(Parser)]
#[command(
    name = "epideconv",
    version,
    about = "Infers daily incidence and stepwise reproduction numbers from death counts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one regularization weight and write per-location series
    Fit(FitArgs),
    /// Fit the whole gamma grid and write the sweep table
    Sweep(SweepArgs),
    /// Sweep, pick gamma by the configured rule, evaluate, write artifacts
    Select(SelectArgs),
    /// Date interventions against already-fitted series files
    Evaluate(EvaluateArgs),
    /// Draw synthetic death counts from a benchmark or custom scenario
    Simulate(SimulateArgs),
    /// Print a saved offset report
    Report(ReportArgs),
}

/// Flags shared by the pipeline-driving subcommands. Everything is optional;
/// a given flag overrides the config-file value, an absent one leaves it.
#[derive(Args, Debug, Default)]
struct CommonOpts {
    /// JSON config file; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Death-count CSV, one per location (repeatable)
    #[arg(long = "deaths")]
    deaths: Vec<PathBuf>,
    /// Intervention CSV (location,date,label,kind)
    #[arg(long)]
    npis: Option<PathBuf>,
    /// Output directory [default: out]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optimizer RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on optimizer iterations
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Sweep worker threads; 0 means one per core
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct GridOpts {
    /// Smallest gamma on the sweep grid [default: 0.1]
    #[arg(long)]
    grid_min: Option<f64>,
    /// Largest gamma on the sweep grid [default: 10]
    #[arg(long)]
    grid_max: Option<f64>,
    /// Number of log-spaced grid points [default: 41]
    #[arg(long)]
    grid_count: Option<usize>,
}

#[derive(Args)]
struct FitArgs {
    /// Regularization weight for the single fit
    #[arg(long)]
    gamma: f64,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonOpts,
    #[command(flatten)]
    grid: GridOpts,
}

#[derive(Args)]
struct SelectArgs {
    /// Selection rule: aic_default, aic_literal, or retrospective
    #[arg(long)]
    selection_mode: Option<String>,
    #[command(flatten)]
    common: CommonOpts,
    #[command(flatten)]
    grid: GridOpts,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Fitted series CSV as written by fit/select (repeatable)
    #[arg(long = "series", required = true)]
    series: Vec<PathBuf>,
    /// Intervention CSV (location,date,label,kind)
    #[arg(long)]
    npis: PathBuf,
    /// Output directory [default: out]
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config file (kernel moments, scan window, guards)
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in scenario name or path to a scenario JSON
    #[arg(long, required_unless_present = "list")]
    scenario: Option<String>,
    /// Replicate seed [default: the scenario's own seed]
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: out]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the noise-free truth series
    #[arg(long)]
    truth: bool,
    /// List the built-in scenarios and exit
    #[arg(long)]
    list: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Path to a saved offsets.json
    offsets: PathBuf,
}

/// Config file merged with flag overrides.
fn build_config(common: &CommonOpts, grid: Option<&GridOpts>) -> anyhow::Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if !common.deaths.is_empty() {
        config.deaths = common.deaths.clone();
    }
    if let Some(path) = &common.npis {
        config.npis = Some(path.clone());
    }
    if let Some(path) = &common.out {
        config.output_dir = path.clone();
    }
    if let Some(seed) = common.seed {
        config.rng_seed = seed;
    }
    if let Some(cap) = common.max_iterations {
        config.max_iterations = cap;
    }
    if let Some(width) = common.parallelism {
        config.parallelism = width;
    }
    if let Some(grid) = grid {
        if let Some(v) = grid.grid_min {
            config.grid_min = v;
        }
        if let Some(v) = grid.grid_max {
            config.grid_max = v;
        }
        if let Some(v) = grid.grid_count {
            config.grid_count = v;
        }
    }
    Ok(config)
}

fn cmd_fit(args: &FitArgs) -> anyhow::Result<()> {
    let mut config = build_config(&args.common, None)?;
    config.gamma = Some(args.gamma);
    let summary = run_pipeline(&config)?;
    print_summary(&summary);
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> anyhow::Result<()> {
    let config = build_config(&args.common, Some(&args.grid))?;
    if config.deaths.is_empty() {
        bail!("no death-count files given (use --deaths)");
    }
    let mut locations = Vec::new();
    for path in &config.deaths {
        locations.push(io::load_deaths_csv(path)?);
    }
    let (f, w) = config.kernels()?;
    let grid = GammaGrid::log_spaced(config.grid_min, config.grid_max, config.grid_count)?;
    let sweep_config = SweepConfig {
        fit: config.fit_config(1.0),
        change_threshold: config.change_threshold,
        parallelism: config.parallelism,
    };
    let result = sweep(&locations, &grid, &f, &w, &sweep_config)?;
    std::fs::create_dir_all(&config.output_dir)?;
    let path = config.output_dir.join("sweep.csv");
    io::write_sweep_csv(&path, &result)?;
    println!("wrote {}", path.display());
    match result.prospective_default {
        Some(g) => println!("prospective gamma (default score): {g}"),
        None => println!("prospective gamma (default score): none scorable"),
    }
    match result.prospective_literal {
        Some(g) => println!("prospective gamma (literal score): {g}"),
        None => println!("prospective gamma (literal score): none scorable"),
    }
    if !result.failures.is_empty() {
        println!("{} fit(s) failed; see sweep.csv", result.failures.len());
    }
    Ok(())
}

fn cmd_select(args: &SelectArgs) -> anyhow::Result<()> {
    let mut config = build_config(&args.common, Some(&args.grid))?;
    config.gamma = None;
    if let Some(mode) = &args.selection_mode {
        config.selection_mode = SelectionMode::parse(mode).ok_or_else(|| {
            anyhow!("unknown selection mode {mode:?} (aic_default, aic_literal, retrospective)")
        })?;
    }
    let summary = run_pipeline(&config)?;
    print_summary(&summary);
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> anyhow::Result<()> {
    let config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let out = args.out.clone().unwrap_or_else(|| config.output_dir.clone());
    let npis = io::load_npi_csv(&args.npis)?;
    let (_, w) = config.kernels()?;
    let mut rows = Vec::new();
    for path in &args.series {
        let table = io::load_series_csv(path)?;
        let r = detection_reproduction_number(&table.j, &w, config.log_guard);
        for npi in npis.iter().filter(|n| n.location == table.deaths.location) {
            let Some(day) = table.deaths.day_index(npi.date) else {
                log::warn!(
                    "intervention {:?} on {} falls outside the {} series; skipped",
                    npi.label,
                    npi.date,
                    npi.location
                );
                continue;
            };
            let scan = infer_npi_day(&r, day, config.window)?;
            rows.push(OffsetRow {
                location: npi.location.clone(),
                label: npi.label.clone(),
                kind: npi.kind,
                npi_date: npi.date,
                npi_day: day,
                inferred_day: scan.inferred_day,
                inferred_date: scan.inferred_day.map(|d| table.deaths.date_at(d)),
                offset: scan.inferred_day.map(|d| d as i64 - day as i64),
                strongest_change: scan.strongest_change,
                truncated_window: scan.truncated,
            });
        }
    }
    if rows.is_empty() {
        bail!("no interventions matched the given series");
    }
    let report = build_offset_report(rows);
    std::fs::create_dir_all(&out)?;
    let offsets_path = out.join("offsets.json");
    io::write_offsets_json(&offsets_path, &report)?;
    let histogram_path = out.join("histogram.csv");
    io::write_histogram_csv(&histogram_path, &report.histogram)?;
    println!("wrote {}", offsets_path.display());
    println!("wrote {}", histogram_path.display());
    print_report(&report);
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> anyhow::Result<()> {
    let suite = make_benchmark_suite()?;
    if args.list {
        for s in &suite {
            println!("{}  ({} days, {} segments)", s.name, s.days, s.r_profile.len());
        }
        return Ok(());
    }
    let name = args.scenario.as_deref().expect("clap enforces --scenario");
    let scenario = match suite.into_iter().find(|s| s.name == name) {
        Some(s) => s,
        None => {
            let path = PathBuf::from(name);
            if !path.is_file() {
                bail!("no built-in scenario {name:?} and no such file; --list shows the built-ins");
            }
            io::load_scenario_json(&path)?
        }
    };
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)?;
    let seed = args.seed.unwrap_or(scenario.rng_seed);
    let deaths = sample_scenario(&scenario, seed)?;
    let deaths_path = out.join(format!("{}.csv", scenario.name));
    io::write_deaths_csv(&deaths_path, &deaths)?;
    println!("wrote {}", deaths_path.display());
    if args.truth {
        let truth = ground_truth(&scenario)?;
        let truth_path = out.join(format!("{}_truth.csv", scenario.name));
        write_truth_csv(&truth_path, &deaths, &truth)?;
        println!("wrote {}", truth_path.display());
    }
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> anyhow::Result<()> {
    let report = io::load_offsets_json(&args.offsets)?;
    print_report(&report);
    Ok(())
}

fn write_truth_csv(path: &Path, dates: &DeathSeries, truth: &GroundTruth) -> anyhow::Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "date,j_true,lambda_true,r_true")?;
    for t in 1..=truth.j_true.len() {
        writeln!(
            out,
            "{},{},{},{}",
            dates.date_at(t),
            truth.j_true.values()[t - 1],
            truth.lambda_true.values()[t - 1],
            truth.r_true[t - 1],
        )?;
    }
    out.flush()?;
    Ok(())
}

fn print_summary(summary: &RunSummary) {
    if summary.single_gamma {
        println!("fitted gamma {}", summary.selected_gamma);
    } else {
        println!(
            "selected gamma {} by {}",
            summary.selected_gamma,
            summary.selection_mode.as_str()
        );
    }
    for loc in &summary.locations {
        println!(
            "{}: fluctuation {:.3}, wrote {}",
            loc.location,
            loc.fluctuation,
            loc.series_path.display()
        );
    }
    if let Some(path) = &summary.sweep_path {
        println!("wrote {}", path.display());
    }
    println!("wrote {}", summary.offsets_path.display());
    println!("wrote {}", summary.histogram_path.display());
    if !summary.report.rows.is_empty() {
        print_report(&summary.report);
    }
}

fn print_report(report: &OffsetReport) {
    for row in &report.rows {
        let timing = match (row.inferred_date, row.offset) {
            (Some(date), Some(offset)) => format!("inferred {date} ({offset:+} days)"),
            _ => "not detected".to_string(),
        };
        println!(
            "{} {} ({}) on {}: {}",
            row.location,
            row.label,
            row.kind.as_str(),
            row.npi_date,
            timing
        );
    }
    match &report.summary {
        Some(s) => println!(
            "interventions: {} detected, {} missed; offset {:+.2} +/- {:.2} days, {:.0}% within one day",
            s.detected,
            s.not_detected,
            s.mean,
            s.sd,
            100.0 * s.within_one_fraction
        ),
        None => println!("interventions: 0 detected, {} missed", report.rows.len()),
    }
    let tallest = report.histogram.iter().map(|b| b.count).max().unwrap_or(0);
    if tallest > 0 {
        for bin in &report.histogram {
            let bar = "#".repeat(bin.count * 40 / tallest);
            println!("{:>+3}d |{:<40}| {}", bin.offset, bar, bin.count);
        }
    }
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Select(args) => cmd_select(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Report(args) => cmd_report(args),
    }
}
