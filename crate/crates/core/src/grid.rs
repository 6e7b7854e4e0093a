//! Georeferenced square-cell grids with a no-data sentinel.
//!
//! Cell `(i, j)` covers eastings `[e0 + i*cs, e0 + (i+1)*cs)` and northings
//! `[n0 + j*cs, n0 + (j+1)*cs)`. Values are stored row-major by `j`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("cell size must be positive, got {0}")]
    InvalidCellSize(f64),
    #[error("grid value count {got} does not match {width}x{height}")]
    ValueCount { got: usize, width: usize, height: usize },
    #[error("cell ({0}, {1}) outside grid")]
    OutOfBounds(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    /// South-west corner (easting, northing).
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
}

impl GridGeometry {
    pub fn new(origin: [f64; 2], cell_size: f64, width: usize, height: usize) -> Result<Self, GridError> {
        if !(cell_size > 0.0) {
            return Err(GridError::InvalidCellSize(cell_size));
        }
        Ok(Self { origin, cell_size, width, height })
    }

    /// Smallest grid anchored at `(min_e, min_n)` covering the bounds `[min_e, min_n, max_e, max_n]`.
    pub fn covering(bounds: [f64; 4], cell_size: f64) -> Result<Self, GridError> {
        if !(cell_size > 0.0) {
            return Err(GridError::InvalidCellSize(cell_size));
        }
        let w = (((bounds[2] - bounds[0]) / cell_size).floor() as usize) + 1;
        let h = (((bounds[3] - bounds[1]) / cell_size).floor() as usize) + 1;
        Self::new([bounds[0], bounds[1]], cell_size, w, h)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    pub fn cell_of(&self, e: f64, n: f64) -> Option<(usize, usize)> {
        let fi = ((e - self.origin[0]) / self.cell_size).floor();
        let fj = ((n - self.origin[1]) / self.cell_size).floor();
        if fi < 0.0 || fj < 0.0 {
            return None;
        }
        let (i, j) = (fi as usize, fj as usize);
        (i < self.width && j < self.height).then_some((i, j))
    }

    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.cell_size,
            self.origin[1] + (j as f64 + 0.5) * self.cell_size,
        ]
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height).flat_map(move |j| (0..self.width).map(move |i| (i, j)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoGrid<V> {
    #[serde(flatten)]
    pub geometry: GridGeometry,
    values: Vec<Option<V>>,
}

impl<V: Clone> GeoGrid<V> {
    pub fn empty(geometry: GridGeometry) -> Self {
        Self { values: vec![None; geometry.len()], geometry }
    }

    pub fn filled(geometry: GridGeometry, value: V) -> Self {
        Self { values: vec![Some(value); geometry.len()], geometry }
    }
}

impl<V> GeoGrid<V> {
    pub fn from_values(geometry: GridGeometry, values: Vec<Option<V>>) -> Result<Self, GridError> {
        if values.len() != geometry.len() {
            return Err(GridError::ValueCount { got: values.len(), width: geometry.width, height: geometry.height });
        }
        Ok(Self { geometry, values })
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn cell_size(&self) -> f64 {
        self.geometry.cell_size
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&V> {
        if i >= self.geometry.width || j >= self.geometry.height {
            return None;
        }
        self.values[self.geometry.index(i, j)].as_ref()
    }

    pub fn set(&mut self, i: usize, j: usize, value: Option<V>) -> Result<(), GridError> {
        if i >= self.geometry.width || j >= self.geometry.height {
            return Err(GridError::OutOfBounds(i, j));
        }
        let k = self.geometry.index(i, j);
        self.values[k] = value;
        Ok(())
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> Option<&mut Option<V>> {
        if i >= self.geometry.width || j >= self.geometry.height {
            return None;
        }
        let k = self.geometry.index(i, j);
        self.values.get_mut(k)
    }

    pub fn values(&self) -> &[Option<V>] {
        &self.values
    }

    pub fn map<U>(&self, mut f: impl FnMut(&V) -> U) -> GeoGrid<U> {
        GeoGrid { geometry: self.geometry, values: self.values.iter().map(|v| v.as_ref().map(&mut f)).collect() }
    }

    /// Number of cells holding data.
    pub fn count_data(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}
