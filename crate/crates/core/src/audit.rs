//! Read-access instrumentation used by the leakage tests.
//!
//! A [`ReadAudit`] can be attached to a [`crate::series::FieldSeries`] or a
//! [`crate::archive::ForecastArchive`]; every value read through the audited
//! handle records the date (observations) or issuance date (forecasts) that
//! was touched. Tests drain the high-water mark after each emitted forecast
//! and compare it against the training cutoff.

use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use crate::calendar::CalendarDate;

/// Tracks the most recent date whose values were read.
#[derive(Debug)]
pub struct ReadAudit {
    max_ordinal: AtomicI64,
}

impl ReadAudit {
    pub fn new() -> Arc<Self> {
        Arc::new(ReadAudit {
            max_ordinal: AtomicI64::new(i64::MIN),
        })
    }

    pub(crate) fn record(&self, date: CalendarDate) {
        self.max_ordinal.fetch_max(date.ordinal(), Ordering::Relaxed);
    }

    /// Highest date ordinal read since the last [`Self::reset`], if any.
    pub fn max_ordinal(&self) -> Option<i64> {
        match self.max_ordinal.load(Ordering::Relaxed) {
            i64::MIN => None,
            v => Some(v),
        }
    }

    /// Clears the high-water mark.
    pub fn reset(&self) {
        self.max_ordinal.store(i64::MIN, Ordering::Relaxed);
    }
}
