//! Ensemble forecast storage keyed by (issuance date, lead days, member).

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::audit::ReadAudit;
use crate::calendar::CalendarDate;
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Whether an entry belongs to the retrospective (reforecast/hindcast) or the
/// real-time forecast era.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Era {
    Forecast,
    Reforecast,
}

impl Era {
    pub fn name(&self) -> &'static str {
        match self {
            Era::Forecast => "forecast",
            Era::Reforecast => "reforecast",
        }
    }

    pub fn parse(s: &str) -> Option<Era> {
        match s {
            "forecast" => Some(Era::Forecast),
            "reforecast" => Some(Era::Reforecast),
            _ => None,
        }
    }
}

/// One member's grid vector for a single (issuance, lead) cell.
#[derive(Debug, Clone)]
pub struct MemberForecast {
    /// Member id; raw ensembles use ids >= 0, deterministic corrector
    /// outputs are stored as member -1.
    pub member: i32,
    pub era: Era,
    pub values: Vec<f64>,
}

/// A single archive entry used when building an archive.
#[derive(Debug, Clone)]
pub struct ForecastEntry {
    pub issuance: CalendarDate,
    pub lead_days: i64,
    pub member: i32,
    pub era: Era,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
struct Cell {
    members: Vec<MemberForecast>,
}

/// Collection of ensemble forecasts for one model. The target date of an
/// entry is always `issuance + lead`. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ForecastArchive {
    grid: Grid,
    cells: Arc<BTreeMap<(CalendarDate, i64), Cell>>,
    audit: Option<Arc<ReadAudit>>,
}

impl ForecastArchive {
    /// Builds an archive, checking vector lengths, non-negative leads, and
    /// (issuance, lead, member) uniqueness.
    pub fn build(grid: Grid, entries: Vec<ForecastEntry>) -> Result<Self> {
        let g = grid.len();
        let mut cells: BTreeMap<(CalendarDate, i64), Cell> = BTreeMap::new();
        for e in entries {
            if e.lead_days < 0 {
                return Err(Error::Domain(format!(
                    "negative lead {} at issuance {}",
                    e.lead_days, e.issuance
                )));
            }
            if e.values.len() != g {
                return Err(Error::Shape(format!(
                    "forecast entry ({}, lead {}, member {}) has {} values, grid has {g}",
                    e.issuance,
                    e.lead_days,
                    e.member,
                    e.values.len()
                )));
            }
            let cell = cells.entry((e.issuance, e.lead_days)).or_default();
            if cell.members.iter().any(|m| m.member == e.member) {
                return Err(Error::Domain(format!(
                    "duplicate forecast key ({}, lead {}, member {})",
                    e.issuance, e.lead_days, e.member
                )));
            }
            cell.members.push(MemberForecast {
                member: e.member,
                era: e.era,
                values: e.values,
            });
        }
        for cell in cells.values_mut() {
            cell.members.sort_by_key(|m| m.member);
        }
        Ok(ForecastArchive {
            grid,
            cells: Arc::new(cells),
            audit: None,
        })
    }

    /// Returns a handle sharing this archive's storage that records the
    /// issuance date of every read into `audit`.
    pub fn audited(&self, audit: Arc<ReadAudit>) -> Self {
        let mut a = self.clone();
        a.audit = Some(audit);
        a
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn len(&self) -> usize {
        self.cells.iter().map(|(_, c)| c.members.len()).sum()
    }

    fn record(&self, issuance: CalendarDate) {
        if let Some(a) = &self.audit {
            a.record(issuance);
        }
    }

    /// True if the (issuance, lead) cell exists at all.
    pub fn has_cell(&self, issuance: CalendarDate, lead_days: i64) -> bool {
        self.cells.contains_key(&(issuance, lead_days))
    }

    /// Member vectors of a cell.
    pub fn members(&self, issuance: CalendarDate, lead_days: i64) -> Option<&[MemberForecast]> {
        let cell = self.cells.get(&(issuance, lead_days))?;
        self.record(issuance);
        Some(&cell.members)
    }

    /// Equal-weighted mean over raw ensemble members (ids >= 0), optionally
    /// restricted to one era. `None` when no matching member exists.
    pub fn ensemble_mean(
        &self,
        issuance: CalendarDate,
        lead_days: i64,
        era: Option<Era>,
    ) -> Option<Vec<f64>> {
        let cell = self.cells.get(&(issuance, lead_days))?;
        let mut acc = vec![0.0; self.grid.len()];
        let mut n = 0usize;
        for m in &cell.members {
            if m.member < 0 {
                continue;
            }
            if let Some(e) = era {
                if m.era != e {
                    continue;
                }
            }
            for (a, v) in acc.iter_mut().zip(&m.values) {
                *a += v;
            }
            n += 1;
        }
        if n == 0 {
            return None;
        }
        self.record(issuance);
        for a in &mut acc {
            *a /= n as f64;
        }
        Some(acc)
    }

    /// Deterministic value stored as member -1, as written by the
    /// correction commands.
    pub fn deterministic(&self, issuance: CalendarDate, lead_days: i64) -> Option<&[f64]> {
        let cell = self.cells.get(&(issuance, lead_days))?;
        let m = cell.members.iter().find(|m| m.member == -1)?;
        self.record(issuance);
        Some(&m.values)
    }

    /// All (issuance, lead) cell keys in ascending order.
    pub fn cell_keys(&self) -> impl Iterator<Item = (CalendarDate, i64)> + '_ {
        self.cells.keys().copied()
    }

    /// Iterates every entry; used by dataset writers (not audited).
    pub(crate) fn raw_entries(
        &self,
    ) -> impl Iterator<Item = (CalendarDate, i64, &MemberForecast)> {
        self.cells
            .iter()
            .flat_map(|((iss, lead), cell)| cell.members.iter().map(move |m| (*iss, *lead, m)))
    }
}
