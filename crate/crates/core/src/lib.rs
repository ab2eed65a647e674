//! Post-processing toolkit for gridded subseasonal forecasts: adaptive bias
//! correction (Dynamical++, Climatology++, Persistence++ and their ABC
//! ensemble), classical debiasing baselines, deterministic and probabilistic
//! verification, and a Cohort-Shapley-based opportunistic deployment
//! workflow — all runnable end-to-end on synthetic data.
//!
//! Start with the `examples/` directory: each example exercises one major
//! capability on generated data. The `sabc` binary wires the same pieces
//! into batch `generate` / `correct` / `evaluate` / `explain` runs.

pub mod archive;
pub mod audit;
pub mod baselines;
pub mod calendar;
pub mod cli;
pub mod correctors;
pub mod error;
pub mod explain;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod progressive;
pub mod seeding;
pub mod series;
pub mod synth;

pub use archive::{Era, ForecastArchive, ForecastEntry};
pub use calendar::{day_diff, year_diff, CalendarDate, DAYS_PER_YEAR};
pub use error::{Error, Result};
pub use grid::{Grid, LatLon};
pub use series::{
    aggregate_period, build_climatology, AggregationMode, Climatology, FieldSeries, Horizon,
    TaskSpec, Variable,
};
