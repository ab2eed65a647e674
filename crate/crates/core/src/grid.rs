//! Spatial grid of forecast locations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single grid location in degrees north / degrees east.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        LatLon { lat, lon }
    }
}

/// Ordered, duplicate-free list of grid points.
///
/// Grid point order fixes the layout of every grid vector in the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<LatLon>,
}

impl Grid {
    /// Builds a grid from an ordered point list; duplicates are rejected.
    pub fn new(points: Vec<LatLon>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Shape("grid must contain at least one point".into()));
        }
        let mut sorted: Vec<(u64, u64)> = points.iter().map(|p| point_key(*p)).collect();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Shape("grid contains duplicate points".into()));
        }
        Ok(Grid { points })
    }

    /// Regular `step`-degree grid covering the inclusive lat/lon box,
    /// points ordered lat-major then lon.
    pub fn regular(
        lat_range: (f64, f64),
        lon_range: (f64, f64),
        step: f64,
    ) -> Result<Self> {
        if step <= 0.0 {
            return Err(Error::Shape("grid step must be positive".into()));
        }
        let mut points = Vec::new();
        let mut lat = lat_range.0;
        while lat <= lat_range.1 + 1e-9 {
            let mut lon = lon_range.0;
            while lon <= lon_range.1 + 1e-9 {
                points.push(LatLon::new(lat, lon));
                lon += step;
            }
            lat += step;
        }
        Grid::new(points)
    }

    /// Number of grid points `G`.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[LatLon] {
        &self.points
    }

    /// Index of a point, matching on the exact bit pattern of its
    /// coordinates.
    pub fn index_of(&self, p: LatLon) -> Option<usize> {
        let key = point_key(p);
        self.points.iter().position(|q| point_key(*q) == key)
    }
}

/// Exact bit-pattern key; grids come from config or CSV so coordinates of
/// the same point are bitwise identical.
pub(crate) fn point_key(p: LatLon) -> (u64, u64) {
    (p.lat.to_bits(), p.lon.to_bits())
}
