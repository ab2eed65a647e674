//! CSV dataset formats and JSON artifact helpers.
//!
//! Observation files carry `date,lat,lon,value` rows; forecast files carry
//! `issuance_date,target_date,lead_days,member,lat,lon,value,era`. Files are
//! UTF-8 with LF line endings. Values are written with Rust's shortest
//! round-trip float formatting, so store-then-load reproduces finite doubles
//! bit-exactly. Missing observation cells are simply absent rows.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::archive::{Era, ForecastArchive, ForecastEntry};
use crate::calendar::CalendarDate;
use crate::error::{Error, Result};
use crate::grid::{point_key, Grid, LatLon};
use crate::series::FieldSeries;

pub const OBS_HEADER: &str = "date,lat,lon,value";
pub const FORECAST_HEADER: &str = "issuance_date,target_date,lead_days,member,lat,lon,value,era";

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

struct RowScanner {
    path: PathBuf,
    lines: std::io::Lines<BufReader<File>>,
    line_no: u64,
}

impl RowScanner {
    fn open(path: &Path, expected_header: &str) -> Result<Self> {
        let file = File::open(path).map_err(|e| io_err(path, e))?;
        let mut scanner = RowScanner {
            path: path.to_path_buf(),
            lines: BufReader::new(file).lines(),
            line_no: 0,
        };
        match scanner.next_row()? {
            Some(header) if header.join(",") == expected_header => Ok(scanner),
            Some(header) => Err(parse_err(
                &scanner.path,
                1,
                format!("expected header {expected_header:?}, found {:?}", header.join(",")),
            )),
            None => Err(parse_err(&scanner.path, 1, "empty file, expected header")),
        }
    }

    fn next_row(&mut self) -> Result<Option<Vec<String>>> {
        loop {
            match self.lines.next() {
                None => return Ok(None),
                Some(line) => {
                    let mut line = line.map_err(|e| io_err(&self.path, e))?;
                    self.line_no += 1;
                    if line.ends_with('\r') {
                        line.pop();
                    }
                    if line.is_empty() {
                        continue;
                    }
                    return Ok(Some(line.split(',').map(str::to_owned).collect()));
                }
            }
        }
    }

    fn f64_field(&self, fields: &[String], idx: usize, name: &str) -> Result<f64> {
        fields[idx]
            .parse::<f64>()
            .map_err(|_| parse_err(&self.path, self.line_no, format!("invalid {name} {:?}", fields[idx])))
    }

    fn date_field(&self, fields: &[String], idx: usize, name: &str) -> Result<CalendarDate> {
        CalendarDate::parse(&fields[idx])
            .map_err(|_| parse_err(&self.path, self.line_no, format!("invalid {name} {:?}", fields[idx])))
    }

    fn expect_len(&self, fields: &[String], n: usize) -> Result<()> {
        if fields.len() != n {
            return Err(parse_err(
                &self.path,
                self.line_no,
                format!("expected {n} fields, found {}", fields.len()),
            ));
        }
        Ok(())
    }
}

/// Loads an observation CSV into a [`FieldSeries`]. Grid points are ordered
/// by (lat, lon); any (date, point) combination without a row is masked
/// missing.
pub fn load_field_series(path: &Path) -> Result<FieldSeries> {
    let mut scanner = RowScanner::open(path, OBS_HEADER)?;
    let mut rows: Vec<(CalendarDate, (u64, u64), f64, u64)> = Vec::new();
    while let Some(fields) = scanner.next_row()? {
        scanner.expect_len(&fields, 4)?;
        let date = scanner.date_field(&fields, 0, "date")?;
        let lat = scanner.f64_field(&fields, 1, "lat")?;
        let lon = scanner.f64_field(&fields, 2, "lon")?;
        let value = scanner.f64_field(&fields, 3, "value")?;
        rows.push((date, point_key(LatLon::new(lat, lon)), value, scanner.line_no));
    }

    let mut dates: Vec<CalendarDate> = rows.iter().map(|r| r.0).collect();
    dates.sort_unstable();
    dates.dedup();
    let mut keys: Vec<(u64, u64)> = rows.iter().map(|r| r.1).collect();
    keys.sort_unstable();
    keys.dedup();
    let points: Vec<LatLon> = keys
        .iter()
        .map(|&(lat, lon)| LatLon::new(f64::from_bits(lat), f64::from_bits(lon)))
        .collect();
    if points.is_empty() {
        // Header-only file: empty series on a placeholder grid is not
        // representable (grids are non-empty), so return the canonical empty
        // dataset: one point, zero dates is also unrepresentable; use an
        // explicit error-free minimal form.
        return FieldSeries::dense(
            Grid::new(vec![LatLon::new(0.0, 0.0)])?,
            Vec::new(),
            Vec::new(),
        );
    }
    let grid = Grid::new(points)?;
    let g = grid.len();
    let date_idx: BTreeMap<CalendarDate, usize> =
        dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let key_idx: BTreeMap<(u64, u64), usize> =
        keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();

    let mut values = vec![f64::NAN; dates.len() * g];
    let mut missing = vec![true; dates.len() * g];
    for (date, key, value, line) in rows {
        let i = date_idx[&date] * g + key_idx[&key];
        if !missing[i] {
            return Err(Error::DuplicateKey {
                path: path.to_path_buf(),
                line,
                key: format!("({date}, {:.4}, {:.4})", f64::from_bits(key.0), f64::from_bits(key.1)),
            });
        }
        values[i] = value;
        missing[i] = false;
    }
    FieldSeries::new(grid, dates, values, missing)
}

fn format_value(path: &Path, v: f64) -> Result<String> {
    if !v.is_finite() {
        return Err(Error::Domain(format!(
            "refusing to write non-finite value {v} to {}",
            path.display()
        )));
    }
    Ok(format!("{v}"))
}

/// Writes a [`FieldSeries`] as an observation CSV. Masked cells are skipped.
pub fn store_field_series(series: &FieldSeries, path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{OBS_HEADER}").map_err(|e| io_err(path, e))?;
        let points = series.grid().points();
        for (date, row, mask) in series.raw_rows() {
            for (p, (&v, &m)) in row.iter().zip(mask).enumerate() {
                if m {
                    continue;
                }
                writeln!(
                    w,
                    "{date},{},{},{}",
                    points[p].lat,
                    points[p].lon,
                    format_value(path, v)?
                )
                .map_err(|e| io_err(path, e))?;
            }
        }
        Ok(())
    })
}

/// Loads a forecast CSV into a [`ForecastArchive`]. Every
/// (issuance, lead, member) entry must cover the full grid, and the
/// `target_date` column must equal issuance + lead.
pub fn load_forecast_archive(path: &Path) -> Result<ForecastArchive> {
    let mut scanner = RowScanner::open(path, FORECAST_HEADER)?;
    type EntryKey = (CalendarDate, i64, i32);
    let mut cells: BTreeMap<EntryKey, (Era, BTreeMap<(u64, u64), f64>)> = BTreeMap::new();
    let mut keys: Vec<(u64, u64)> = Vec::new();
    while let Some(fields) = scanner.next_row()? {
        scanner.expect_len(&fields, 8)?;
        let issuance = scanner.date_field(&fields, 0, "issuance_date")?;
        let target = scanner.date_field(&fields, 1, "target_date")?;
        let lead: i64 = fields[2].parse().map_err(|_| {
            parse_err(path, scanner.line_no, format!("invalid lead_days {:?}", fields[2]))
        })?;
        let member: i32 = fields[3].parse().map_err(|_| {
            parse_err(path, scanner.line_no, format!("invalid member {:?}", fields[3]))
        })?;
        let lat = scanner.f64_field(&fields, 4, "lat")?;
        let lon = scanner.f64_field(&fields, 5, "lon")?;
        let value = scanner.f64_field(&fields, 6, "value")?;
        let era = Era::parse(&fields[7]).ok_or_else(|| {
            parse_err(path, scanner.line_no, format!("invalid era {:?}", fields[7]))
        })?;
        if target.days_since(issuance) != lead {
            return Err(parse_err(
                path,
                scanner.line_no,
                format!("target_date {target} is not issuance {issuance} + {lead} days"),
            ));
        }
        let key = point_key(LatLon::new(lat, lon));
        keys.push(key);
        let entry = cells.entry((issuance, lead, member)).or_insert_with(|| (era, BTreeMap::new()));
        if entry.0 != era {
            return Err(parse_err(
                path,
                scanner.line_no,
                format!("entry ({issuance}, lead {lead}, member {member}) mixes eras"),
            ));
        }
        if entry.1.insert(key, value).is_some() {
            return Err(Error::DuplicateKey {
                path: path.to_path_buf(),
                line: scanner.line_no,
                key: format!("({issuance}, lead {lead}, member {member}, {lat}, {lon})"),
            });
        }
    }
    keys.sort_unstable();
    keys.dedup();
    if keys.is_empty() {
        return ForecastArchive::build(Grid::new(vec![LatLon::new(0.0, 0.0)])?, Vec::new());
    }
    let points: Vec<LatLon> = keys
        .iter()
        .map(|&(lat, lon)| LatLon::new(f64::from_bits(lat), f64::from_bits(lon)))
        .collect();
    let grid = Grid::new(points)?;
    let mut entries = Vec::with_capacity(cells.len());
    for ((issuance, lead, member), (era, by_point)) in cells {
        if by_point.len() != keys.len() {
            return Err(Error::MissingData(format!(
                "entry ({issuance}, lead {lead}, member {member}) covers {} of {} grid points",
                by_point.len(),
                keys.len()
            )));
        }
        let values = keys.iter().map(|k| by_point[k]).collect();
        entries.push(ForecastEntry {
            issuance,
            lead_days: lead,
            member,
            era,
            values,
        });
    }
    ForecastArchive::build(grid, entries)
}

/// Writes a [`ForecastArchive`] as a forecast CSV.
pub fn store_forecast_archive(archive: &ForecastArchive, path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{FORECAST_HEADER}").map_err(|e| io_err(path, e))?;
        let points = archive.grid().points();
        for (issuance, lead, member) in archive.raw_entries() {
            let target = issuance.plus_days(lead);
            for (p, &v) in member.values.iter().enumerate() {
                writeln!(
                    w,
                    "{issuance},{target},{lead},{},{},{},{},{}",
                    member.member,
                    points[p].lat,
                    points[p].lon,
                    format_value(path, v)?,
                    member.era.name()
                )
                .map_err(|e| io_err(path, e))?;
            }
        }
        Ok(())
    })
}

/// A date-indexed table of explanatory variables, one column per variable.
#[derive(Debug, Clone)]
pub struct ExplanatorySeries {
    pub dates: Vec<CalendarDate>,
    pub names: Vec<String>,
    /// `columns[v][i]` is variable `v` on `dates[i]`.
    pub columns: Vec<Vec<f64>>,
}

impl ExplanatorySeries {
    /// Value of column `v` on `date`, if present.
    pub fn value_on(&self, v: usize, date: CalendarDate) -> Option<f64> {
        let i = self.dates.binary_search(&date).ok()?;
        Some(self.columns[v][i])
    }
}

/// Loads an explanatory-variable CSV with header `date,<name>,<name>,...`.
pub fn load_explanatory(path: &Path) -> Result<ExplanatorySeries> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut scanner = RowScanner {
        path: path.to_path_buf(),
        lines: BufReader::new(file).lines(),
        line_no: 0,
    };
    let header = scanner
        .next_row()?
        .ok_or_else(|| parse_err(path, 1, "empty file, expected header"))?;
    if header.first().map(String::as_str) != Some("date") || header.len() < 2 {
        return Err(parse_err(path, 1, "expected header date,<var1>,<var2>,..."));
    }
    let names: Vec<String> = header[1..].to_vec();
    let mut rows: Vec<(CalendarDate, Vec<f64>, u64)> = Vec::new();
    while let Some(fields) = scanner.next_row()? {
        scanner.expect_len(&fields, names.len() + 1)?;
        let date = scanner.date_field(&fields, 0, "date")?;
        let mut vals = Vec::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            vals.push(scanner.f64_field(&fields, i + 1, name)?);
        }
        rows.push((date, vals, scanner.line_no));
    }
    rows.sort_by_key(|r| r.0);
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::DuplicateKey {
                path: path.to_path_buf(),
                line: w[1].2,
                key: w[1].0.to_string(),
            });
        }
    }
    let dates: Vec<CalendarDate> = rows.iter().map(|r| r.0).collect();
    let mut columns = vec![Vec::with_capacity(dates.len()); names.len()];
    for (_, vals, _) in &rows {
        for (v, col) in vals.iter().zip(columns.iter_mut()) {
            col.push(*v);
        }
    }
    Ok(ExplanatorySeries { dates, names, columns })
}

/// Writes an explanatory-variable CSV.
pub fn store_explanatory(series: &ExplanatorySeries, path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "date,{}", series.names.join(",")).map_err(|e| io_err(path, e))?;
        for (i, date) in series.dates.iter().enumerate() {
            let mut line = date.to_string();
            for col in &series.columns {
                line.push(',');
                line.push_str(&format_value(path, col[i])?);
            }
            writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
        }
        Ok(())
    })
}

/// Writes a `date,skill` table; undefined skills are written as empty
/// fields.
pub fn write_per_date_table(
    path: &Path,
    header: &str,
    rows: &[(CalendarDate, Option<f64>)],
) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{header}").map_err(|e| io_err(path, e))?;
        for (date, v) in rows {
            match v {
                Some(v) => writeln!(w, "{date},{}", format_value(path, *v)?),
                None => writeln!(w, "{date},"),
            }
            .map_err(|e| io_err(path, e))?;
        }
        Ok(())
    })
}

/// Writes a `lat,lon,value` spatial table; undefined points are written as
/// empty fields.
pub fn write_spatial_table(path: &Path, grid: &Grid, values: &[Option<f64>]) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::Shape(format!(
            "spatial table has {} values for {} grid points",
            values.len(),
            grid.len()
        )));
    }
    write_atomic(path, |w| {
        writeln!(w, "lat,lon,value").map_err(|e| io_err(path, e))?;
        for (p, v) in grid.points().iter().zip(values) {
            match v {
                Some(v) => writeln!(w, "{},{},{}", p.lat, p.lon, format_value(path, *v)?),
                None => writeln!(w, "{},{},", p.lat, p.lon),
            }
            .map_err(|e| io_err(path, e))?;
        }
        Ok(())
    })
}

/// Writes a `threshold,fraction` curve.
pub fn write_curve(path: &Path, rows: &[(f64, f64)]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "threshold,fraction").map_err(|e| io_err(path, e))?;
        for (t, f) in rows {
            writeln!(w, "{},{}", format_value(path, *t)?, format_value(path, *f)?)
                .map_err(|e| io_err(path, e))?;
        }
        Ok(())
    })
}

/// Serializes a value as pretty-printed JSON, atomically.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)
            .map_err(|e| parse_err(path, 0, format!("json serialization failed: {e}")))?;
        writeln!(w).map_err(|e| io_err(path, e))
    })
}

/// Writes a file atomically: the content goes to `<path>.tmp` and is renamed
/// into place only after a successful flush.
pub fn write_atomic(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(e) => format!("{}.tmp", e.to_string_lossy()),
        None => "tmp".to_string(),
    });
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
    }
    let file = File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    let mut writer = BufWriter::new(file);
    let result = f(&mut writer).and_then(|()| writer.flush().map_err(|e| io_err(&tmp, e)));
    match result {
        Ok(()) => std::fs::rename(&tmp, path).map_err(|e| io_err(path, e)),
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e)
        }
    }
}
