//! Calendar dates and the day/year window arithmetic shared by every
//! corrector.
//!
//! Dates are proleptic-Gregorian; all `t* - t` arithmetic is carried out on
//! exact whole-day differences before the real-valued days-per-year constant
//! enters.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean length of a calendar year in days, used by the training-window
/// selectors.
pub const DAYS_PER_YEAR: f64 = 365.242199;

/// Default number of training years for Dynamical++ windows.
pub const DEFAULT_DYNPP_TRAINING_YEARS: i64 = 12;

/// Two-week forecast period length in days.
pub const PERIOD_LENGTH_DAYS: i64 = 14;

/// A Gregorian calendar date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CalendarDate(NaiveDate);

impl CalendarDate {
    /// Builds a date, rejecting invalid year/month/day combinations.
    pub fn new(year: i32, month: u32, day: u32) -> Result<Self> {
        NaiveDate::from_ymd_opt(year, month, day)
            .map(CalendarDate)
            .ok_or_else(|| Error::Domain(format!("invalid date {year:04}-{month:02}-{day:02}")))
    }

    /// Parses an ISO-8601 `YYYY-MM-DD` date.
    pub fn parse(s: &str) -> Result<Self> {
        NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map(CalendarDate)
            .map_err(|e| Error::Domain(format!("invalid date {s:?}: {e}")))
    }

    pub fn year(&self) -> i32 {
        self.0.year()
    }

    pub fn month(&self) -> u32 {
        self.0.month()
    }

    pub fn day(&self) -> u32 {
        self.0.day()
    }

    /// `(month, day)` pair, the key used by climatologies and month-day
    /// matched baselines.
    pub fn month_day(&self) -> (u32, u32) {
        (self.0.month(), self.0.day())
    }

    /// Days since the proleptic-Gregorian epoch; total order and exact
    /// differences come from this.
    pub fn ordinal(&self) -> i64 {
        i64::from(self.0.num_days_from_ce())
    }

    /// The date `days` whole days after (or before, if negative) `self`.
    pub fn plus_days(&self, days: i64) -> Self {
        CalendarDate(self.0 + chrono::Duration::days(days))
    }

    /// Exact whole-day difference `self - other`.
    pub fn days_since(&self, other: CalendarDate) -> i64 {
        self.ordinal() - other.ordinal()
    }

    pub fn is_leap_year(&self) -> bool {
        let y = self.year();
        (y % 4 == 0 && y % 100 != 0) || y % 400 == 0
    }

    /// DJF/MAM/JJA/SON season of the date's month.
    pub fn season(&self) -> Season {
        match self.month() {
            12 | 1 | 2 => Season::Djf,
            3 | 4 | 5 => Season::Mam,
            6 | 7 | 8 => Season::Jja,
            _ => Season::Son,
        }
    }
}

impl std::fmt::Display for CalendarDate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0.format("%Y-%m-%d"))
    }
}

/// Meteorological season (by month of the target date).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Season {
    Djf,
    Mam,
    Jja,
    Son,
}

impl Season {
    pub fn name(&self) -> &'static str {
        match self {
            Season::Djf => "DJF",
            Season::Mam => "MAM",
            Season::Jja => "JJA",
            Season::Son => "SON",
        }
    }
}

/// Distance in days between `t`'s day of year and `t_star`'s, folded onto
/// `[0, 182.5]`:
///
/// `365/2 - |floor((t* - t) mod D) - 365/2|` with `D` = [`DAYS_PER_YEAR`].
///
/// Errors if `t` is after `t_star`.
pub fn day_diff(t_star: CalendarDate, t: CalendarDate) -> Result<f64> {
    let delta = t_star.days_since(t);
    if delta < 0 {
        return Err(Error::Domain(format!(
            "day_diff requires t <= t_star, got t = {t}, t_star = {t_star}"
        )));
    }
    let folded = (delta as f64).rem_euclid(DAYS_PER_YEAR).floor();
    Ok(182.5 - (folded - 182.5).abs())
}

/// Whole training years separating `t` from `t_star`:
/// `floor((t* - t) / D)`.
///
/// Errors if `t` is after `t_star`.
pub fn year_diff(t_star: CalendarDate, t: CalendarDate) -> Result<i64> {
    let delta = t_star.days_since(t);
    if delta < 0 {
        return Err(Error::Domain(format!(
            "year_diff requires t <= t_star, got t = {t}, t_star = {t_star}"
        )));
    }
    Ok((delta as f64 / DAYS_PER_YEAR).floor() as i64)
}
