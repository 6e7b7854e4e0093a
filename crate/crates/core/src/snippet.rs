//! Square seafloor snippets cut from side-scan images.

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::image::{estimate_altitude, FirstReturn, SidescanImage, SonarError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnippetSpec {
    /// Edge length of the square snippet in metres.
    pub side_m: f64,
    pub stride_m: f64,
    pub exclude_nadir: bool,
}

impl Default for SnippetSpec {
    fn default() -> Self {
        Self { side_m: 3.0, stride_m: 3.0, exclude_nadir: true }
    }
}

impl SnippetSpec {
    /// Window size in (pings, bins), rounded to the nearest pixel and at least one.
    pub fn window<T: Scalar>(&self, image: &SidescanImage<T>) -> (usize, usize) {
        (to_pixels(self.side_m, image.ping_resolution()), to_pixels(self.side_m, image.bin_resolution()))
    }

    fn validate(&self) -> Result<(), SonarError> {
        if !(self.side_m > 0.0) || !(self.stride_m > 0.0) {
            return Err(SonarError::InvalidSnippetSpec(format!(
                "side_m and stride_m must be positive (got {}, {})",
                self.side_m, self.stride_m
            )));
        }
        Ok(())
    }
}

fn to_pixels(metres: f64, resolution: f64) -> usize {
    ((metres / resolution).round() as usize).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnippetMode {
    Grid,
    Random { n: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snippet<T> {
    pub pixels: Array2<T>,
    /// Top-left (ping, column) of the window in the source image.
    pub origin: (usize, usize),
    pub geo_center: [f64; 2],
    pub source: String,
}

/// Cuts snippets from `image`. Windows clipped by the image edge are never produced.
pub fn extract_snippets<T: Scalar>(
    image: &SidescanImage<T>,
    spec: &SnippetSpec,
    mode: SnippetMode,
) -> Result<Vec<Snippet<T>>, SonarError> {
    let origins = snippet_origins(image, spec, mode)?;
    let altitude = estimate_altitude(image, FirstReturn::default()).unwrap_or(0.0);
    let (wp, wb) = spec.window(image);
    Ok(origins
        .into_iter()
        .map(|(p, c)| {
            let pixels = image.intensities().slice(s![p..p + wp, c..c + wb]).to_owned();
            let (side, k) = image.slant_bin_of_column(c + wb / 2);
            let slant = (k as f64 + 0.5) * image.bin_resolution();
            let ground = (slant * slant - altitude * altitude).max(0.0).sqrt();
            Snippet {
                pixels,
                origin: (p, c),
                geo_center: image.ground_point(p + wp / 2, side, ground),
                source: image.id.clone(),
            }
        })
        .collect())
}

/// Window origins that `extract_snippets` would cut, without copying pixels.
pub fn snippet_origins<T: Scalar>(
    image: &SidescanImage<T>,
    spec: &SnippetSpec,
    mode: SnippetMode,
) -> Result<Vec<(usize, usize)>, SonarError> {
    spec.validate()?;
    let (wp, wb) = spec.window(image);
    let too_small = SonarError::ImageTooSmall { pings: wp, bins: wb };
    if wp > image.pings() || wb > image.bins() {
        return Err(too_small);
    }
    let nadir_altitude = if spec.exclude_nadir {
        Some(estimate_altitude(image, FirstReturn::default())?)
    } else {
        None
    };
    let column_ok = |c: usize| -> bool {
        match nadir_altitude {
            None => true,
            Some(a) => (c..c + wb).all(|col| {
                let (_, k) = image.slant_bin_of_column(col);
                k as f64 * image.bin_resolution() >= a
            }),
        }
    };
    let max_p = image.pings() - wp;
    let max_c = image.bins() - wb;

    let origins: Vec<(usize, usize)> = match mode {
        SnippetMode::Grid => {
            let sp = to_pixels(spec.stride_m, image.ping_resolution());
            let sb = to_pixels(spec.stride_m, image.bin_resolution());
            let cols: Vec<usize> = (0..=max_c).step_by(sb).filter(|&c| column_ok(c)).collect();
            (0..=max_p).step_by(sp).flat_map(|p| cols.iter().map(move |&c| (p, c))).collect()
        }
        SnippetMode::Random { n, seed } => {
            let cols: Vec<usize> = (0..=max_c).filter(|&c| column_ok(c)).collect();
            if cols.is_empty() {
                return Err(too_small);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n)
                .map(|_| {
                    let p = rng.random_range(0..=max_p);
                    let c = cols[rng.random_range(0..cols.len())];
                    (p, c)
                })
                .collect()
        }
    };
    if origins.is_empty() {
        return Err(too_small);
    }
    Ok(origins)
}
