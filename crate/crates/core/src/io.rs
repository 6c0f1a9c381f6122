//! CSV/JSON boundary: table ingestion and artifact emission.
//!
//! Calendar dates live only at this boundary; everything inside the pipeline
//! uses 1-based day offsets from the series start.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};
use crate::evaluation::{HistogramBin, NpiRecord, OffsetReport};
use crate::fitter::FitResult;
use crate::selection::SweepResult;
use crate::series::{DeathSeries, IncidenceSeries};
use crate::simulator::Scenario;

/// Days between two same-location, same-kind intervention records at or
/// below which they are treated as one "consecutive" block and merged.
pub const NPI_MERGE_WINDOW_DAYS: i64 = 3;

fn csv_line(err: &csv::Error) -> usize {
    err.position().map(|p| p.line() as usize).unwrap_or(0)
}

fn check_header(headers: &csv::StringRecord, expected: &[&str], path: &Path) -> Result<()> {
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::CsvFormat {
            path: path.display().to_string(),
            line: 1,
            detail: format!(
                "expected header `{}`, got `{}`",
                expected.join(","),
                got.join(",")
            ),
        });
    }
    Ok(())
}

fn open_csv(path: &Path, expected_header: &[&str]) -> Result<csv::Reader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|e| Error::CsvFormat {
            path: path.display().to_string(),
            line: csv_line(&e).max(1),
            detail: e.to_string(),
        })?
        .clone();
    check_header(&headers, expected_header, path)?;
    Ok(reader)
}

fn row_error(path: &Path, line: usize, detail: String) -> Error {
    Error::CsvFormat {
        path: path.display().to_string(),
        line,
        detail,
    }
}

fn parse_date(field: &str, path: &Path, line: usize) -> Result<NaiveDate> {
    field
        .parse()
        .map_err(|e| row_error(path, line, format!("invalid date {field:?}: {e}")))
}

/// Reads a `date,deaths` table into a [`DeathSeries`].
///
/// Rows may arrive unsorted; missing interior dates are filled with zero
/// deaths and reported through a log warning. The location label is taken
/// from the file stem.
pub fn load_deaths_csv(path: impl AsRef<Path>) -> Result<DeathSeries> {
    let path = path.as_ref();
    let mut reader = open_csv(path, &["date", "deaths"])?;
    let mut rows: Vec<(NaiveDate, u64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            row_error(path, csv_line(&e), e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 2 {
            return Err(row_error(
                path,
                line,
                format!("expected 2 fields, got {}", record.len()),
            ));
        }
        let date = parse_date(&record[0], path, line)?;
        let count: u64 = record[1].parse().map_err(|e| {
            row_error(
                path,
                line,
                format!("invalid death count {:?}: {e}", &record[1]),
            )
        })?;
        rows.push((date, count));
    }
    if rows.is_empty() {
        return Err(Error::NoData(path.display().to_string()));
    }
    rows.sort_by_key(|&(date, _)| date);
    for pair in rows.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::DuplicateDate {
                path: path.display().to_string(),
                date: pair[0].0,
            });
        }
    }
    let start = rows[0].0;
    let span = (rows[rows.len() - 1].0 - start).num_days() as usize + 1;
    let mut counts = vec![0u64; span];
    for &(date, count) in &rows {
        counts[(date - start).num_days() as usize] = count;
    }
    let gaps = span - rows.len();
    if gaps > 0 {
        log::warn!(
            "{}: filled {gaps} missing interior day(s) with zero deaths",
            path.display()
        );
    }
    let location = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("series")
        .to_string();
    DeathSeries::new(location, start, counts)
}

/// Reads a `location,date,label,kind` intervention table.
///
/// Same-location, same-kind records forming a chain with gaps of at most
/// [`NPI_MERGE_WINDOW_DAYS`] are merged into one record on the middle-point
/// date (rounded half-down), with labels joined by `+`. Records come back
/// sorted by location, kind, and date.
pub fn load_npi_csv(path: impl AsRef<Path>) -> Result<Vec<NpiRecord>> {
    let path = path.as_ref();
    let mut reader = open_csv(path, &["location", "date", "label", "kind"])?;
    let mut records: Vec<NpiRecord> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| row_error(path, csv_line(&e), e.to_string()))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 4 {
            return Err(row_error(
                path,
                line,
                format!("expected 4 fields, got {}", record.len()),
            ));
        }
        let kind = crate::evaluation::NpiKind::parse(&record[3]).ok_or_else(|| {
            row_error(
                path,
                line,
                format!("unknown intervention kind {:?}", &record[3]),
            )
        })?;
        records.push(NpiRecord {
            location: record[0].to_string(),
            date: parse_date(&record[1], path, line)?,
            label: record[2].to_string(),
            kind,
        });
    }
    Ok(merge_consecutive_npis(records))
}

/// Day number used for middle-point arithmetic on calendar dates.
fn day_number(date: NaiveDate) -> i64 {
    date.num_days_from_ce() as i64
}

fn middle_point_date(dates: &[NaiveDate]) -> NaiveDate {
    let sum: i64 = dates.iter().map(|&d| day_number(d)).sum();
    let count = dates.len() as i64;
    let quot = sum.div_euclid(count);
    let rem = sum.rem_euclid(count);
    // round half-down: only strictly-past-half remainders bump the day up
    let day = quot + i64::from(2 * rem > count);
    NaiveDate::from_num_days_from_ce_opt(day as i32)
        .expect("middle point of valid dates is a valid date")
}

fn merge_consecutive_npis(mut records: Vec<NpiRecord>) -> Vec<NpiRecord> {
    records.sort_by(|a, b| {
        (&a.location, a.kind.as_str(), a.date).cmp(&(&b.location, b.kind.as_str(), b.date))
    });
    let mut merged: Vec<NpiRecord> = Vec::with_capacity(records.len());
    let mut iter = records.into_iter().peekable();
    while let Some(first) = iter.next() {
        let mut chain = vec![first];
        while let Some(next) = iter.peek() {
            let last = &chain[chain.len() - 1];
            let same = next.location == last.location && next.kind == last.kind;
            if same && (next.date - last.date).num_days() <= NPI_MERGE_WINDOW_DAYS {
                chain.push(iter.next().unwrap());
            } else {
                break;
            }
        }
        if chain.len() == 1 {
            merged.push(chain.pop().unwrap());
        } else {
            let dates: Vec<NaiveDate> = chain.iter().map(|r| r.date).collect();
            let date = middle_point_date(&dates);
            let label = chain
                .iter()
                .map(|r| r.label.as_str())
                .collect::<Vec<_>>()
                .join("+");
            log::info!(
                "merged {} consecutive {} records for {} into {date}",
                chain.len(),
                chain[0].kind.as_str(),
                chain[0].location
            );
            merged.push(NpiRecord {
                location: chain[0].location.clone(),
                date,
                label,
                kind: chain[0].kind,
            });
        }
    }
    merged
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a series back out in the same `date,deaths` format the loader
/// reads, so generated data can feed the pipeline.
pub fn write_deaths_csv(path: impl AsRef<Path>, series: &DeathSeries) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let emit = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "date,deaths")?;
        for (i, &count) in series.counts.iter().enumerate() {
            writeln!(w, "{},{count}", series.date_at(i + 1))?;
        }
        Ok(())
    };
    emit(&mut w).map_err(|e| Error::io(path, e))?;
    finish(w, path)
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes the per-day fit table: `date,n,lambda,j,R`. Days where R is
/// undefined leave the column empty.
pub fn write_series_csv(
    path: impl AsRef<Path>,
    series: &DeathSeries,
    fit: &FitResult,
) -> Result<()> {
    let path = path.as_ref();
    if fit.j.len() != series.len() {
        return Err(Error::LengthMismatch(format!(
            "fit covers {} days, series has {}",
            fit.j.len(),
            series.len()
        )));
    }
    let mut w = create(path)?;
    let emit = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "date,n,lambda,j,R")?;
        for t in 1..=series.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                series.date_at(t),
                series.counts[t - 1],
                fit.lambda.values()[t - 1],
                fit.j.values()[t - 1],
                fmt_opt(fit.r.get(t)),
            )?;
        }
        Ok(())
    };
    emit(&mut w).map_err(|e| Error::io(path, e))?;
    finish(w, path)
}

/// Writes the sweep summary table. AIC columns repeat the per-gamma score on
/// every location row and stay empty when any fit at that gamma was excluded;
/// the trailing column carries the unweighted mean negative log-likelihood as
/// a diagnostic.
pub fn write_sweep_csv(path: impl AsRef<Path>, sweep: &SweepResult) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let emit = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(
            w,
            "gamma,location,k,data_loss,dynamics_loss,aic_default,aic_literal,converged,unweighted_data_loss"
        )?;
        for cell in &sweep.cells {
            let gi = sweep
                .grid
                .values()
                .iter()
                .position(|&g| g == cell.gamma)
                .expect("sweep cell gamma comes from the sweep grid");
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                cell.gamma,
                cell.location,
                cell.changes,
                cell.fit.losses.data,
                cell.fit.losses.dynamics,
                fmt_opt(sweep.aic_default[gi]),
                fmt_opt(sweep.aic_literal[gi]),
                cell.fit.converged,
                cell.unweighted_data_loss,
            )?;
        }
        Ok(())
    };
    emit(&mut w).map_err(|e| Error::io(path, e))?;
    finish(w, path)
}

/// Writes the offset report as pretty JSON.
pub fn write_offsets_json(path: impl AsRef<Path>, report: &OffsetReport) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Json {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let mut w = create(path)?;
    writeln!(w, "{json}").map_err(|e| Error::io(path, e))?;
    finish(w, path)
}

/// Writes the offset histogram as `offset_day,count` rows.
pub fn write_histogram_csv(path: impl AsRef<Path>, bins: &[HistogramBin]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let emit = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "offset_day,count")?;
        for bin in bins {
            writeln!(w, "{},{}", bin.offset, bin.count)?;
        }
        Ok(())
    };
    emit(&mut w).map_err(|e| Error::io(path, e))?;
    finish(w, path)
}

/// Serializes a scenario definition to pretty JSON.
pub fn write_scenario_json(path: impl AsRef<Path>, scenario: &Scenario) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(scenario).map_err(|e| Error::Json {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let mut w = create(path)?;
    writeln!(w, "{json}").map_err(|e| Error::io(path, e))?;
    finish(w, path)
}

/// Reads a scenario definition from JSON.
pub fn load_scenario_json(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let scenario: Scenario =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Json {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
    scenario.validate()?;
    Ok(scenario)
}

/// A re-ingested per-day fit table: the observed counts plus the fitted
/// incidence. Intensity and reproduction columns are recomputable from the
/// incidence, so only these two are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTable {
    pub deaths: DeathSeries,
    pub j: IncidenceSeries,
}

/// Reads a `date,n,lambda,j,R` table written by [`write_series_csv`]. The
/// location label is the file stem minus a `_series` suffix.
pub fn load_series_csv(path: impl AsRef<Path>) -> Result<SeriesTable> {
    let path = path.as_ref();
    let mut reader = open_csv(path, &["date", "n", "lambda", "j", "R"])?;
    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut counts: Vec<u64> = Vec::new();
    let mut j: Vec<f64> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| row_error(path, csv_line(&e), e.to_string()))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 5 {
            return Err(row_error(
                path,
                line,
                format!("expected 5 fields, got {}", record.len()),
            ));
        }
        dates.push(parse_date(&record[0], path, line)?);
        counts.push(record[1].parse().map_err(|e| {
            row_error(path, line, format!("invalid count {:?}: {e}", &record[1]))
        })?);
        j.push(record[3].parse().map_err(|e| {
            row_error(path, line, format!("invalid incidence {:?}: {e}", &record[3]))
        })?);
    }
    if dates.is_empty() {
        return Err(Error::NoData(path.display().to_string()));
    }
    for (i, pair) in dates.windows(2).enumerate() {
        if pair[0].succ_opt() != Some(pair[1]) {
            return Err(row_error(
                path,
                i + 3,
                format!("dates must be consecutive; {} follows {}", pair[1], pair[0]),
            ));
        }
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("series");
    let location = stem.strip_suffix("_series").unwrap_or(stem);
    Ok(SeriesTable {
        deaths: DeathSeries::new(location, dates[0], counts)?,
        j: IncidenceSeries::new(j)?,
    })
}

/// Reads an offset report back from JSON.
pub fn load_offsets_json(path: impl AsRef<Path>) -> Result<OffsetReport> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Json {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::NpiKind;

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn write_file(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        std::fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn deaths_round_trip_preserves_series() {
        let dir = tempfile::tempdir().unwrap();
        let original =
            DeathSeries::new("alpha", date("2020-03-01"), vec![0, 3, 17, 5, 0, 2]).unwrap();
        let path = dir.path().join("alpha.csv");
        write_deaths_csv(&path, &original).unwrap();
        let loaded = load_deaths_csv(&path).unwrap();
        assert_eq!(loaded, original);
    }

    #[test]
    fn interior_gaps_fill_with_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "x.csv",
            "date,deaths\n2020-03-01,5\n2020-03-03,7\n",
        );
        let series = load_deaths_csv(&path).unwrap();
        assert_eq!(series.counts, vec![5, 0, 7]);
        assert_eq!(series.start_date, date("2020-03-01"));
        assert_eq!(series.location, "x");
    }

    #[test]
    fn unsorted_rows_are_ordered_by_date() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "x.csv",
            "date,deaths\n2020-03-03,7\n2020-03-01,5\n2020-03-02,6\n",
        );
        let series = load_deaths_csv(&path).unwrap();
        assert_eq!(series.counts, vec![5, 6, 7]);
    }

    #[test]
    fn duplicate_date_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "x.csv",
            "date,deaths\n2020-03-01,5\n2020-03-01,7\n",
        );
        match load_deaths_csv(&path) {
            Err(Error::DuplicateDate { date: d, .. }) => assert_eq!(d, date("2020-03-01")),
            other => panic!("expected duplicate-date error, got {other:?}"),
        }
    }

    #[test]
    fn negative_count_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "x.csv",
            "date,deaths\n2020-03-01,5\n2020-03-02,-3\n",
        );
        match load_deaths_csv(&path) {
            Err(Error::CsvFormat { line, detail, .. }) => {
                assert_eq!(line, 3);
                assert!(detail.contains("-3"), "detail: {detail}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn empty_table_and_bad_header_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let empty = write_file(&dir, "empty.csv", "date,deaths\n");
        assert!(matches!(load_deaths_csv(&empty), Err(Error::NoData(_))));
        let bad = write_file(&dir, "bad.csv", "day,toll\n2020-03-01,5\n");
        assert!(matches!(
            load_deaths_csv(&bad),
            Err(Error::CsvFormat { line: 1, .. })
        ));
    }

    #[test]
    fn npi_pair_two_days_apart_merges_to_middle_point() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "npi.csv",
            "location,date,label,kind\n\
             aa,2020-03-10,schools,implement\n\
             aa,2020-03-12,borders,implement\n",
        );
        let records = load_npi_csv(&path).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].date, date("2020-03-11"));
        assert_eq!(records[0].label, "schools+borders");
        assert_eq!(records[0].kind, NpiKind::Implement);
    }

    #[test]
    fn npi_middle_point_rounds_half_down() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "npi.csv",
            "location,date,label,kind\n\
             aa,2020-03-10,a,lift\n\
             aa,2020-03-13,b,lift\n",
        );
        let records = load_npi_csv(&path).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].date, date("2020-03-11"));
    }

    #[test]
    fn npi_far_apart_and_cross_kind_records_stay_separate() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "npi.csv",
            "location,date,label,kind\n\
             aa,2020-03-10,a,implement\n\
             aa,2020-03-20,b,implement\n\
             aa,2020-03-21,c,lift\n\
             bb,2020-03-21,d,lift\n",
        );
        let records = load_npi_csv(&path).unwrap();
        assert_eq!(records.len(), 4);
    }

    #[test]
    fn npi_chain_merges_transitively() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "npi.csv",
            "location,date,label,kind\n\
             aa,2020-03-10,a,implement\n\
             aa,2020-03-13,b,implement\n\
             aa,2020-03-16,c,implement\n",
        );
        let records = load_npi_csv(&path).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].date, date("2020-03-13"));
        assert_eq!(records[0].label, "a+b+c");
    }

    #[test]
    fn npi_unknown_kind_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "npi.csv",
            "location,date,label,kind\naa,2020-03-10,a,suggestion\n",
        );
        match load_npi_csv(&path) {
            Err(Error::CsvFormat { line, detail, .. }) => {
                assert_eq!(line, 2);
                assert!(detail.contains("suggestion"), "detail: {detail}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn scenario_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = crate::simulator::make_benchmark_suite().unwrap().remove(0);
        let path = dir.path().join("scenario.json");
        write_scenario_json(&path, &scenario).unwrap();
        let loaded = load_scenario_json(&path).unwrap();
        assert_eq!(loaded, scenario);
    }

    #[test]
    fn series_table_round_trips_counts_and_incidence() {
        use crate::kernels::{default_death_delay, default_generation_interval};
        use crate::model::{expected_deaths, objective, reproduction_number};
        let dir = tempfile::tempdir().unwrap();
        let f = default_death_delay();
        let w = default_generation_interval();
        let j = IncidenceSeries::new((1..=40).map(|i| 1.5 + i as f64 * 0.33).collect()).unwrap();
        let lambda = expected_deaths(&j, &f);
        let counts: Vec<u64> = lambda.values().iter().map(|l| l.round() as u64).collect();
        let deaths = DeathSeries::new("alpha", date("2020-03-01"), counts).unwrap();
        let fit = FitResult {
            j: j.clone(),
            lambda,
            r: reproduction_number(&j, &w),
            losses: objective(&j, &deaths.counts, &f, &w, 1.0, 0.1).unwrap(),
            iterations: 1,
            converged: true,
            cutoff_index: 0,
        };
        let path = dir.path().join("alpha_series.csv");
        write_series_csv(&path, &deaths, &fit).unwrap();
        let table = load_series_csv(&path).unwrap();
        assert_eq!(table.deaths, deaths);
        assert_eq!(table.j.values(), j.values());
    }

    #[test]
    fn offset_report_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![crate::evaluation::OffsetRow {
            location: "alpha".into(),
            label: "lockdown".into(),
            kind: NpiKind::Implement,
            npi_date: date("2020-04-09"),
            npi_day: 40,
            inferred_day: Some(41),
            inferred_date: Some(date("2020-04-10")),
            offset: Some(1),
            strongest_change: 0.8,
            truncated_window: false,
        }];
        let report = crate::evaluation::build_offset_report(rows);
        let path = dir.path().join("offsets.json");
        write_offsets_json(&path, &report).unwrap();
        assert_eq!(load_offsets_json(&path).unwrap(), report);
    }
}
