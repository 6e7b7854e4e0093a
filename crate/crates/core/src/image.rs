//! Side-scan image container and slant/ground geometry.
//!
//! Rows are pings, columns are slant-range bins. For single-sided images bin
//! `k` sits at slant range `k * bin_resolution`. Full-swath images store the
//! port side mirrored in the left half (far range at column 0) and the
//! starboard side in the right half.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SonarError {
    #[error("slant range {slant} m is inside the nadir zone (altitude {altitude} m)")]
    InsideNadir { slant: f64, altitude: f64 },
    #[error("altitude must be positive, got {0}")]
    InvalidAltitude(f64),
    #[error("no ping crosses the first-return threshold")]
    NoFirstReturn,
    #[error("image too small for a {pings}x{bins} window")]
    ImageTooSmall { pings: usize, bins: usize },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid snippet spec: {0}")]
    InvalidSnippetSpec(String),
}

/// Which side(s) of the vehicle an image covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Port,
    Starboard,
    /// Both sides with the nadir gap in the middle.
    #[serde(rename = "full")]
    FullSwath,
}

/// Vehicle pose for one ping. Heading is compass radians (0 = north, clockwise).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavPose {
    pub e: f64,
    pub n: f64,
    pub heading: f64,
}

impl NavPose {
    pub fn forward(&self) -> [f64; 2] {
        [self.heading.sin(), self.heading.cos()]
    }

    /// Unit vector pointing across-track towards `side` (port or starboard).
    pub fn across(&self, side: Side) -> [f64; 2] {
        let stbd = [self.heading.cos(), -self.heading.sin()];
        match side {
            Side::Port => [-stbd[0], -stbd[1]],
            _ => stbd,
        }
    }
}

/// Straight-line trajectory starting at `start`, one pose per ping.
pub fn straight_track(start: [f64; 2], heading: f64, pings: usize, ping_resolution: f64) -> Vec<NavPose> {
    let (s, c) = heading.sin_cos();
    (0..pings)
        .map(|p| {
            let d = p as f64 * ping_resolution;
            NavPose { e: start[0] + d * s, n: start[1] + d * c, heading }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SidescanImage<T> {
    pub id: String,
    intensities: Array2<T>,
    bin_resolution: f64,
    ping_resolution: f64,
    altitude: Option<f64>,
    nav: Vec<NavPose>,
    side: Side,
}

impl<T: Scalar> SidescanImage<T> {
    pub fn new(
        id: impl Into<String>,
        intensities: Array2<T>,
        bin_resolution: f64,
        ping_resolution: f64,
        altitude: Option<f64>,
        nav: Vec<NavPose>,
        side: Side,
    ) -> Result<Self, SonarError> {
        let (pings, bins) = intensities.dim();
        if pings == 0 || bins == 0 {
            return Err(SonarError::InvalidImage("image must have at least one ping and one bin".into()));
        }
        if !(bin_resolution > 0.0) || !(ping_resolution > 0.0) {
            return Err(SonarError::InvalidImage("resolutions must be positive".into()));
        }
        if nav.len() != pings {
            return Err(SonarError::InvalidImage(format!(
                "nav length {} does not match {} pings",
                nav.len(),
                pings
            )));
        }
        if side == Side::FullSwath && bins % 2 != 0 {
            return Err(SonarError::InvalidImage("full-swath images need an even bin count".into()));
        }
        if let Some(a) = altitude {
            if !(a > 0.0) {
                return Err(SonarError::InvalidAltitude(a));
            }
        }
        let (zero, one) = (T::zero(), T::one());
        if intensities.iter().any(|&v| !(v >= zero && v <= one)) {
            return Err(SonarError::InvalidImage("intensities must lie in [0, 1]".into()));
        }
        Ok(Self { id: id.into(), intensities, bin_resolution, ping_resolution, altitude, nav, side })
    }

    pub fn intensities(&self) -> &Array2<T> {
        &self.intensities
    }

    /// Mutable pixel access for in-crate producers that clamp to [0, 1].
    pub(crate) fn intensities_mut(&mut self) -> &mut Array2<T> {
        &mut self.intensities
    }

    /// Copy of this image with the pixels replaced.
    pub fn with_intensities(&self, intensities: Array2<T>) -> Result<Self, SonarError> {
        Self::new(
            self.id.clone(),
            intensities,
            self.bin_resolution,
            self.ping_resolution,
            self.altitude,
            self.nav.clone(),
            self.side,
        )
    }

    pub fn with_altitude(mut self, altitude: Option<f64>) -> Self {
        self.altitude = altitude;
        self
    }

    pub fn pings(&self) -> usize {
        self.intensities.nrows()
    }

    pub fn bins(&self) -> usize {
        self.intensities.ncols()
    }

    pub fn bin_resolution(&self) -> f64 {
        self.bin_resolution
    }

    pub fn ping_resolution(&self) -> f64 {
        self.ping_resolution
    }

    pub fn altitude(&self) -> Option<f64> {
        self.altitude
    }

    pub fn nav(&self) -> &[NavPose] {
        &self.nav
    }

    pub fn side(&self) -> Side {
        self.side
    }

    /// Physical sides present in the image.
    pub fn sides(&self) -> &'static [Side] {
        match self.side {
            Side::Port => &[Side::Port],
            Side::Starboard => &[Side::Starboard],
            Side::FullSwath => &[Side::Port, Side::Starboard],
        }
    }

    /// Number of slant bins per side.
    pub fn swath_bins(&self) -> usize {
        match self.side {
            Side::FullSwath => self.bins() / 2,
            _ => self.bins(),
        }
    }

    pub fn max_slant_range(&self) -> f64 {
        self.swath_bins() as f64 * self.bin_resolution
    }

    /// Column holding slant bin `k` on `side`.
    pub fn column(&self, side: Side, k: usize) -> usize {
        match self.side {
            Side::FullSwath => {
                let m = self.bins() / 2;
                match side {
                    Side::Port => m - 1 - k,
                    _ => m + k,
                }
            }
            _ => k,
        }
    }

    /// Side and slant-bin index of a column.
    pub fn slant_bin_of_column(&self, col: usize) -> (Side, usize) {
        match self.side {
            Side::FullSwath => {
                let m = self.bins() / 2;
                if col < m {
                    (Side::Port, m - 1 - col)
                } else {
                    (Side::Starboard, col - m)
                }
            }
            s => (s, col),
        }
    }

    /// Geo position of the seafloor point `ground_range` metres across-track from ping `ping`.
    pub fn ground_point(&self, ping: usize, side: Side, ground_range: f64) -> [f64; 2] {
        let pose = &self.nav[ping];
        let d = pose.across(side);
        [pose.e + ground_range * d[0], pose.n + ground_range * d[1]]
    }

    /// Geo bounding box `[min_e, min_n, max_e, max_n]` of the imaged swath.
    pub fn footprint_bounds(&self, altitude: f64) -> [f64; 4] {
        let max_ground = slant_to_ground(self.max_slant_range(), altitude).unwrap_or(0.0);
        let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for p in [0, self.pings() - 1] {
            for &side in self.sides() {
                for g in [0.0, max_ground] {
                    let [e, n] = self.ground_point(p, side, g);
                    b[0] = b[0].min(e);
                    b[1] = b[1].min(n);
                    b[2] = b[2].max(e);
                    b[3] = b[3].max(n);
                }
            }
        }
        b
    }

    /// Ensonified seafloor area in m² (nadir excluded).
    pub fn ensonified_area(&self, altitude: f64) -> f64 {
        let max_ground = slant_to_ground(self.max_slant_range(), altitude).unwrap_or(0.0);
        self.pings() as f64 * self.ping_resolution * max_ground * self.sides().len() as f64
    }
}

/// Horizontal range for a slant range at the given sensor altitude.
pub fn slant_to_ground<T: Scalar>(slant_range: T, altitude: T) -> Result<T, SonarError> {
    if !(altitude > T::zero()) {
        return Err(SonarError::InvalidAltitude(altitude.as_f64()));
    }
    if slant_range < altitude {
        return Err(SonarError::InsideNadir { slant: slant_range.as_f64(), altitude: altitude.as_f64() });
    }
    Ok((slant_range * slant_range - altitude * altitude).sqrt())
}

/// Inverse of [`slant_to_ground`].
pub fn ground_to_slant<T: Scalar>(ground_range: T, altitude: T) -> T {
    (ground_range * ground_range + altitude * altitude).sqrt()
}

/// First-bottom-return detector settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstReturn {
    pub threshold: f64,
    /// Consecutive bins that must exceed the threshold.
    pub run: usize,
}

impl Default for FirstReturn {
    fn default() -> Self {
        Self { threshold: 0.1, run: 3 }
    }
}

/// Sensor altitude from metadata, or the median first-return slant over all pings.
pub fn estimate_altitude<T: Scalar>(image: &SidescanImage<T>, cfg: FirstReturn) -> Result<f64, SonarError> {
    if let Some(a) = image.altitude {
        return Ok(a);
    }
    let thr = T::lit(cfg.threshold);
    let run = cfg.run.max(1);
    let nb = image.swath_bins();
    let data = &image.intensities;
    let mut firsts = Vec::new();
    for p in 0..image.pings() {
        for &side in image.sides() {
            let mut streak = 0;
            for k in 0..nb {
                if data[[p, image.column(side, k)]] > thr {
                    streak += 1;
                    if streak == run {
                        firsts.push((k + 1 - run) as f64 * image.bin_resolution);
                        break;
                    }
                } else {
                    streak = 0;
                }
            }
        }
    }
    if firsts.is_empty() {
        return Err(SonarError::NoFirstReturn);
    }
    firsts.sort_by(f64::total_cmp);
    let m = firsts.len();
    let median = if m % 2 == 1 { firsts[m / 2] } else { 0.5 * (firsts[m / 2 - 1] + firsts[m / 2]) };
    if median > 0.0 {
        Ok(median)
    } else {
        Err(SonarError::NoFirstReturn)
    }
}
