//! Dense time-by-grid data: observation/forecast series, climatologies, and
//! the period aggregation that turns daily data into two-week targets.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::audit::ReadAudit;
use crate::calendar::{CalendarDate, PERIOD_LENGTH_DAYS};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Forecast target variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    /// Two-week average 2-meter temperature, degrees C.
    Temperature,
    /// Two-week accumulated precipitation, mm.
    Precipitation,
}

impl Variable {
    /// How daily values combine into a two-week target value.
    pub fn aggregation(&self) -> AggregationMode {
        match self {
            Variable::Temperature => AggregationMode::Mean,
            Variable::Precipitation => AggregationMode::Sum,
        }
    }

    /// Whether negative corrected values are clipped to zero in
    /// probabilistic forecasts.
    pub fn clips_negative(&self) -> bool {
        matches!(self, Variable::Precipitation)
    }
}

/// Forecast horizon. Weeks 3-4 and 5-6 are the subseasonal horizons; weeks
/// 1-2 is the shorter-term horizon on which Climatology++ is excluded from
/// the ABC ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Weeks12,
    Weeks34,
    Weeks56,
}

impl Horizon {
    /// Lead time `l*` in days from issuance to the start of the target
    /// period: 15 for weeks 3-4, 29 for weeks 5-6, 1 for weeks 1-2.
    pub fn lead_days(&self) -> i64 {
        match self {
            Horizon::Weeks12 => 1,
            Horizon::Weeks34 => 15,
            Horizon::Weeks56 => 29,
        }
    }
}

/// A forecasting task: target variable, horizon, and period geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub variable: Variable,
    pub horizon: Horizon,
}

impl TaskSpec {
    pub fn new(variable: Variable, horizon: Horizon) -> Self {
        TaskSpec { variable, horizon }
    }

    /// Lead `l*` in days.
    pub fn lead_days(&self) -> i64 {
        self.horizon.lead_days()
    }

    /// Target period length `L` in days (always 14).
    pub fn period_length(&self) -> i64 {
        PERIOD_LENGTH_DAYS
    }

    /// Latest date whose two-week outcome is fully observable one day before
    /// the issuance of a forecast for `t_star`: `t* - l* - L - 1`.
    pub fn training_cutoff(&self, t_star: CalendarDate) -> CalendarDate {
        t_star.plus_days(-(self.lead_days() + self.period_length() + 1))
    }
}

/// Aggregation mode for [`aggregate_period`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    Mean,
    Sum,
}

/// Dense `[date][grid point]` array of one variable with an explicit missing
/// mask. Immutable after construction.
#[derive(Debug, Clone)]
pub struct FieldSeries {
    grid: Grid,
    dates: Arc<Vec<CalendarDate>>,
    values: Arc<Vec<f64>>,
    missing: Arc<Vec<bool>>,
    audit: Option<Arc<ReadAudit>>,
}

impl FieldSeries {
    /// Builds a series from row-major values (`dates.len() * grid.len()`),
    /// with `missing[i]` flagging unavailable cells. Dates must be strictly
    /// increasing.
    pub fn new(
        grid: Grid,
        dates: Vec<CalendarDate>,
        values: Vec<f64>,
        missing: Vec<bool>,
    ) -> Result<Self> {
        let expect = dates.len() * grid.len();
        if values.len() != expect || missing.len() != expect {
            return Err(Error::Shape(format!(
                "series expects {} cells ({} dates x {} points), got {} values / {} mask bits",
                expect,
                dates.len(),
                grid.len(),
                values.len(),
                missing.len()
            )));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Shape("series dates must be strictly increasing".into()));
        }
        Ok(FieldSeries {
            grid,
            dates: Arc::new(dates),
            values: Arc::new(values),
            missing: Arc::new(missing),
            audit: None,
        })
    }

    /// Convenience constructor for fully present data.
    pub fn dense(grid: Grid, dates: Vec<CalendarDate>, values: Vec<f64>) -> Result<Self> {
        let n = dates.len() * grid.len();
        FieldSeries::new(grid, dates, values, vec![false; n])
    }

    /// Returns a handle sharing this series' storage that records every
    /// value read into `audit`.
    pub fn audited(&self, audit: Arc<ReadAudit>) -> Self {
        let mut s = self.clone();
        s.audit = Some(audit);
        s
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dates(&self) -> &[CalendarDate] {
        &self.dates
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Index of `date` in the date axis.
    pub fn date_index(&self, date: CalendarDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    pub fn contains_date(&self, date: CalendarDate) -> bool {
        self.date_index(date).is_some()
    }

    fn record(&self, date: CalendarDate) {
        if let Some(a) = &self.audit {
            a.record(date);
        }
    }

    /// Value at `(date, point)`, `None` if the date is absent or the cell is
    /// masked missing.
    pub fn value(&self, date: CalendarDate, point: usize) -> Option<f64> {
        let di = self.date_index(date)?;
        self.value_by_index(di, point)
    }

    /// Value by date index; records the read when audited.
    pub fn value_by_index(&self, date_idx: usize, point: usize) -> Option<f64> {
        let g = self.grid.len();
        let i = date_idx * g + point;
        if self.missing[i] {
            None
        } else {
            self.record(self.dates[date_idx]);
            Some(self.values[i])
        }
    }

    /// Whether `date` is present with no missing cell. Consults only the
    /// mask, so it does not count as a data read for auditing purposes.
    pub fn is_complete_row(&self, date: CalendarDate) -> bool {
        match self.date_index(date) {
            Some(di) => self.complete_row_mask_only(di),
            None => false,
        }
    }

    /// Mask-only completeness check by date index (no value read).
    pub fn complete_row_mask_only(&self, date_idx: usize) -> bool {
        let g = self.grid.len();
        !self.missing[date_idx * g..(date_idx + 1) * g].iter().any(|&m| m)
    }

    /// Full grid row for `date` if the date is present and no cell is
    /// missing.
    pub fn complete_row(&self, date: CalendarDate) -> Option<&[f64]> {
        let di = self.date_index(date)?;
        self.complete_row_by_index(di)
    }

    /// Full grid row by date index if no cell is missing.
    pub fn complete_row_by_index(&self, date_idx: usize) -> Option<&[f64]> {
        let g = self.grid.len();
        let span = date_idx * g..(date_idx + 1) * g;
        if self.missing[span.clone()].iter().any(|&m| m) {
            None
        } else {
            self.record(self.dates[date_idx]);
            Some(&self.values[span])
        }
    }

    /// Grid row with per-cell missing values as `None`, regardless of mask.
    pub fn row(&self, date: CalendarDate) -> Option<Vec<Option<f64>>> {
        let di = self.date_index(date)?;
        self.record(date);
        let g = self.grid.len();
        Some(
            (0..g)
                .map(|p| {
                    let i = di * g + p;
                    if self.missing[i] {
                        None
                    } else {
                        Some(self.values[i])
                    }
                })
                .collect(),
        )
    }

    /// Iterates `(date, row)` pairs without auditing; used by dataset
    /// writers.
    pub(crate) fn raw_rows(&self) -> impl Iterator<Item = (CalendarDate, &[f64], &[bool])> {
        let g = self.grid.len();
        self.dates
            .iter()
            .enumerate()
            .map(move |(i, d)| (*d, &self.values[i * g..(i + 1) * g], &self.missing[i * g..(i + 1) * g]))
    }
}

/// Per-(month, day) climatological baseline over a base period.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Climatology {
    grid: Grid,
    table: BTreeMap<(u32, u32), Vec<f64>>,
    base_period: (i32, i32),
}

impl Climatology {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn base_period(&self) -> (i32, i32) {
        self.base_period
    }

    /// Baseline grid vector for a month-day key. Feb 29 lookups in tables
    /// without a Feb 29 entry fall back to Feb 28.
    pub fn values_for(&self, month: u32, day: u32) -> Option<&[f64]> {
        match self.table.get(&(month, day)) {
            Some(v) => Some(v.as_slice()),
            None if (month, day) == (2, 29) => self.table.get(&(2, 28)).map(|v| v.as_slice()),
            None => None,
        }
    }

    /// Baseline grid vector for a date.
    pub fn values_on(&self, date: CalendarDate) -> Option<&[f64]> {
        let (m, d) = date.month_day();
        self.values_for(m, d)
    }

    pub(crate) fn from_table(
        grid: Grid,
        table: BTreeMap<(u32, u32), Vec<f64>>,
        base_period: (i32, i32),
    ) -> Self {
        Climatology {
            grid,
            table,
            base_period,
        }
    }

    pub fn table(&self) -> &BTreeMap<(u32, u32), Vec<f64>> {
        &self.table
    }
}

/// Averages observations per (month, day, grid point) over the base-period
/// years. Feb 29 is averaged over leap years only.
///
/// Errors if the base period is empty or any (month, day, point) slot ends
/// up with no usable sample.
pub fn build_climatology(obs: &FieldSeries, base_period: (i32, i32)) -> Result<Climatology> {
    let (y0, y1) = base_period;
    if y1 < y0 {
        return Err(Error::Domain(format!(
            "empty base period {y0}..{y1}"
        )));
    }
    let g = obs.grid().len();
    let mut sums: BTreeMap<(u32, u32), (Vec<f64>, Vec<u32>)> = BTreeMap::new();
    for (idx, date) in obs.dates().iter().enumerate() {
        if date.year() < y0 || date.year() > y1 {
            continue;
        }
        let entry = sums
            .entry(date.month_day())
            .or_insert_with(|| (vec![0.0; g], vec![0u32; g]));
        for p in 0..g {
            if let Some(v) = obs.value_by_index(idx, p) {
                entry.0[p] += v;
                entry.1[p] += 1;
            }
        }
    }
    if sums.is_empty() {
        return Err(Error::EmptyWindow(format!(
            "no observations inside base period {y0}..{y1}"
        )));
    }
    // Every calendar day of the base period must be represented.
    let expected = expected_month_days(base_period);
    for md in &expected {
        if !sums.contains_key(md) {
            return Err(Error::MissingData(format!(
                "base period {y0}..{y1} has no observations for month-day {:02}-{:02}",
                md.0, md.1
            )));
        }
    }
    let mut table = BTreeMap::new();
    for (md, (sum, count)) in sums {
        let mut row = Vec::with_capacity(g);
        for p in 0..g {
            if count[p] == 0 {
                return Err(Error::MissingData(format!(
                    "no usable sample for month-day {:02}-{:02} at grid point {p}",
                    md.0, md.1
                )));
            }
            row.push(sum[p] / f64::from(count[p]));
        }
        table.insert(md, row);
    }
    Ok(Climatology::from_table(obs.grid().clone(), table, base_period))
}

fn expected_month_days(period: (i32, i32)) -> Vec<(u32, u32)> {
    let mut out: Vec<(u32, u32)> = Vec::with_capacity(366);
    let has_leap = (period.0..=period.1)
        .any(|y| (y % 4 == 0 && y % 100 != 0) || y % 400 == 0);
    let probe_year = if has_leap { 2000 } else { 2001 };
    let mut d = CalendarDate::new(probe_year, 1, 1).unwrap();
    while d.year() == probe_year {
        out.push(d.month_day());
        d = d.plus_days(1);
    }
    out
}

/// Rolls a daily series into length-`period` windows anchored at each start
/// date: mean for temperature-style variables, sum for precipitation.
///
/// A window containing any masked or absent day yields a masked output.
pub fn aggregate_period(
    daily: &FieldSeries,
    mode: AggregationMode,
    period: i64,
) -> Result<FieldSeries> {
    if period < 1 {
        return Err(Error::Domain(format!("period length {period} must be >= 1")));
    }
    let g = daily.grid().len();
    let mut dates = Vec::new();
    let mut values = Vec::new();
    let mut missing = Vec::new();
    for (idx, start) in daily.dates().iter().enumerate() {
        // Window is usable only when all dates start..start+period-1 exist
        // consecutively in the series.
        let end_idx = idx + (period as usize) - 1;
        if end_idx >= daily.len() {
            break;
        }
        if daily.dates()[end_idx].days_since(*start) != period - 1 {
            continue; // gap in the daily record
        }
        dates.push(*start);
        for p in 0..g {
            let mut acc = 0.0;
            let mut ok = true;
            for w in idx..=end_idx {
                match daily.value_by_index(w, p) {
                    Some(v) => acc += v,
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                let v = match mode {
                    AggregationMode::Mean => acc / period as f64,
                    AggregationMode::Sum => acc,
                };
                values.push(v);
                missing.push(false);
            } else {
                values.push(f64::NAN);
                missing.push(true);
            }
        }
    }
    FieldSeries::new(daily.grid().clone(), dates, values, missing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::LatLon;

    fn small_grid(n: usize) -> Grid {
        Grid::new((0..n).map(|i| LatLon::new(30.0 + 1.5 * i as f64, -100.0)).collect()).unwrap()
    }

    fn daily_series(start: CalendarDate, days: usize, f: impl Fn(usize, usize) -> f64, g: usize) -> FieldSeries {
        let grid = small_grid(g);
        let dates: Vec<_> = (0..days).map(|i| start.plus_days(i as i64)).collect();
        let mut values = Vec::new();
        for i in 0..days {
            for p in 0..g {
                values.push(f(i, p));
            }
        }
        FieldSeries::dense(grid, dates, values).unwrap()
    }

    #[test]
    fn climatology_of_constant_series() {
        let start = CalendarDate::new(2001, 1, 1).unwrap();
        let obs = daily_series(start, 365 * 3, |_, _| 7.25, 2);
        let clim = build_climatology(&obs, (2001, 2003)).unwrap();
        for row in clim.table().values() {
            assert!(row.iter().all(|&v| v == 7.25));
        }
        assert_eq!(clim.table().len(), 365); // no leap year in 2001..2003
    }

    #[test]
    fn climatology_means_years() {
        // Value k in year k (1..=3), any month-day -> mean 2.
        let start = CalendarDate::new(2001, 1, 1).unwrap();
        let obs = daily_series(start, 365 * 3, |i, _| (i / 365 + 1) as f64, 1);
        let clim = build_climatology(&obs, (2001, 2003)).unwrap();
        for row in clim.table().values() {
            assert!((row[0] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn climatology_feb29_leap_only_with_feb28_fallback() {
        let start = CalendarDate::new(2003, 1, 1).unwrap();
        // 2003 and 2004; Feb 29 exists only in 2004 with value 100.
        let obs = daily_series(start, 365 + 366, |i, _| {
            let d = start.plus_days(i as i64);
            if d.month_day() == (2, 29) {
                100.0
            } else {
                1.0
            }
        }, 1);
        let clim = build_climatology(&obs, (2003, 2004)).unwrap();
        assert_eq!(clim.values_for(2, 29).unwrap()[0], 100.0);
        assert_eq!(clim.values_for(2, 28).unwrap()[0], 1.0);

        // A table built without leap years serves Feb 28 for Feb 29 lookups.
        let obs2 = daily_series(CalendarDate::new(2001, 1, 1).unwrap(), 365, |_, _| 3.0, 1);
        let clim2 = build_climatology(&obs2, (2001, 2001)).unwrap();
        assert_eq!(clim2.values_for(2, 29).unwrap()[0], 3.0);
    }

    #[test]
    fn climatology_missing_month_day_errors() {
        let start = CalendarDate::new(2001, 1, 1).unwrap();
        let obs = daily_series(start, 100, |_, _| 1.0, 1); // stops in April
        assert!(build_climatology(&obs, (2001, 2001)).is_err());
    }

    #[test]
    fn climatology_row_permutation_invariant() {
        // Same data delivered in a different chronological chunking gives
        // the same table: here we reverse the year order by relabeling.
        let start = CalendarDate::new(2001, 1, 1).unwrap();
        let obs = daily_series(start, 365 * 2, |i, _| if i < 365 { 1.0 } else { 5.0 }, 1);
        let swapped = daily_series(start, 365 * 2, |i, _| if i < 365 { 5.0 } else { 1.0 }, 1);
        let a = build_climatology(&obs, (2001, 2002)).unwrap();
        let b = build_climatology(&swapped, (2001, 2002)).unwrap();
        for (k, row) in a.table() {
            assert_eq!(row, &b.table()[k]);
        }
    }

    #[test]
    fn aggregate_constant_mean_is_identity() {
        let start = CalendarDate::new(2001, 1, 1).unwrap();
        let daily = daily_series(start, 30, |_, _| 4.5, 2);
        let agg = aggregate_period(&daily, AggregationMode::Mean, 14).unwrap();
        assert_eq!(agg.len(), 17);
        for d in agg.dates() {
            let row = agg.complete_row(*d).unwrap();
            assert!(row.iter().all(|&v| (v - 4.5).abs() < 1e-12));
        }
    }

    #[test]
    fn aggregate_sum_1_to_14() {
        let start = CalendarDate::new(2001, 1, 1).unwrap();
        let daily = daily_series(start, 14, |i, _| (i + 1) as f64, 1);
        let agg = aggregate_period(&daily, AggregationMode::Sum, 14).unwrap();
        assert_eq!(agg.len(), 1);
        assert_eq!(agg.complete_row(start).unwrap()[0], 105.0);
    }

    #[test]
    fn aggregate_masks_windows_with_missing_days() {
        let grid = small_grid(1);
        let start = CalendarDate::new(2001, 1, 1).unwrap();
        let dates: Vec<_> = (0..20).map(|i| start.plus_days(i)).collect();
        let mut missing = vec![false; 20];
        missing[5] = true;
        let values = vec![1.0; 20];
        let daily = FieldSeries::new(grid, dates, values, missing).unwrap();
        let agg = aggregate_period(&daily, AggregationMode::Mean, 14).unwrap();
        // Windows starting at day 0..=5 include the masked day 5.
        for i in 0..=5usize {
            assert!(agg.value(start.plus_days(i as i64), 0).is_none());
        }
        assert!(agg.value(start.plus_days(6), 0).is_some());
    }

    #[test]
    fn aggregate_mean_equals_sum_over_period() {
        let start = CalendarDate::new(2001, 1, 1).unwrap();
        let daily = daily_series(start, 40, |i, p| (i * 7 + p) as f64 * 0.25, 2);
        let mean = aggregate_period(&daily, AggregationMode::Mean, 14).unwrap();
        let sum = aggregate_period(&daily, AggregationMode::Sum, 14).unwrap();
        for (i, d) in mean.dates().iter().enumerate() {
            assert_eq!(sum.dates()[i], *d);
            for p in 0..2 {
                let m = mean.value(*d, p).unwrap();
                let s = sum.value(*d, p).unwrap();
                assert!((m - s / 14.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn audit_records_reads() {
        let start = CalendarDate::new(2001, 1, 1).unwrap();
        let series = daily_series(start, 10, |_, _| 1.0, 1);
        let audit = crate::audit::ReadAudit::new();
        let view = series.audited(audit.clone());
        assert!(audit.max_ordinal().is_none());
        view.value(start.plus_days(3), 0);
        assert_eq!(audit.max_ordinal(), Some(start.plus_days(3).ordinal()));
        view.value(start.plus_days(1), 0);
        assert_eq!(audit.max_ordinal(), Some(start.plus_days(3).ordinal()));
        audit.reset();
        assert!(audit.max_ordinal().is_none());
    }
}
