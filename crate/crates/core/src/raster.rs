//! Raster and metadata files.
//!
//! Intensity rasters are binary PGM (P5) at 16-bit depth with `[0, 1]`
//! mapped linearly onto `[0, 65535]`. Each image raster has a JSON sidecar
//! `<raster>.meta.json` carrying resolutions, altitude, side and navigation.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GeoGrid, GridError};
use crate::image::{NavPose, Side, SidescanImage, SonarError};
use crate::scalar::Scalar;

pub const PGM_MAXVAL: u16 = 65535;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed PGM header: {0}")]
    Header(String),
    #[error("PGM data truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Image(#[from] SonarError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("png encoding: {0}")]
    Png(#[from] image::ImageError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RasterError + '_ {
    move |source| RasterError::Io { path: path.to_path_buf(), source }
}

/// Sidecar metadata describing how an intensity raster maps onto the seafloor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterMeta {
    pub bin_resolution: f64,
    pub ping_resolution: f64,
    pub altitude: Option<f64>,
    pub side: Side,
    pub nav: Vec<NavPose>,
}

impl RasterMeta {
    pub fn of<T: Scalar>(image: &SidescanImage<T>) -> Self {
        Self {
            bin_resolution: image.bin_resolution(),
            ping_resolution: image.ping_resolution(),
            altitude: image.altitude(),
            side: image.side(),
            nav: image.nav().to_vec(),
        }
    }
}

pub fn sidecar_path(raster: &Path) -> PathBuf {
    let mut s = raster.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Parsed PGM: raw samples plus the header's maxval.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub samples: Array2<u16>,
    pub maxval: u16,
}

impl Pgm {
    /// Samples rescaled to `[0, 1]`.
    pub fn normalized<T: Scalar>(&self) -> Array2<T> {
        let m = f64::from(self.maxval);
        self.samples.mapv(|v| T::lit(f64::from(v) / m))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Pgm, RasterError> {
    let mut pos = 0usize;
    let next_token = |pos: &mut usize| -> Result<String, RasterError> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
            *pos += 1;
        }
        if start == *pos {
            return Err(RasterError::Header("unexpected end of header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = next_token(&mut pos)?;
    if magic != "P5" {
        return Err(RasterError::Header(format!("expected P5 magic, found {magic:?}")));
    }
    let num = |what: &str, pos: &mut usize| -> Result<usize, RasterError> {
        let t = next_token(pos)?;
        t.parse::<usize>().map_err(|_| RasterError::Header(format!("bad {what}: {t:?}")))
    };
    let width = num("width", &mut pos)?;
    let height = num("height", &mut pos)?;
    let maxval = num("maxval", &mut pos)?;
    if width == 0 || height == 0 {
        return Err(RasterError::Header("zero dimension".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(RasterError::Header(format!("maxval {maxval} outside 1..=65535")));
    }
    // exactly one whitespace byte separates the header from the data
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(RasterError::Header("missing whitespace after maxval".into()));
    }
    pos += 1;
    let wide = maxval > 255;
    let bps = if wide { 2 } else { 1 };
    let expected = width * height * bps;
    let data = &bytes[pos..];
    if data.len() < expected {
        return Err(RasterError::Truncated { expected, found: data.len() });
    }
    let samples = Array2::from_shape_fn((height, width), |(r, c)| {
        let k = (r * width + c) * bps;
        if wide {
            u16::from_be_bytes([data[k], data[k + 1]])
        } else {
            u16::from(data[k])
        }
    });
    let maxval = maxval as u16;
    if samples.iter().any(|&v| v > maxval) {
        return Err(RasterError::Header("sample exceeds maxval".into()));
    }
    Ok(Pgm { samples, maxval })
}

pub fn encode_pgm(samples: &Array2<u16>, maxval: u16) -> Vec<u8> {
    let (h, w) = samples.dim();
    let mut out = format!("P5\n{w} {h}\n{maxval}\n").into_bytes();
    if maxval > 255 {
        out.reserve(w * h * 2);
        for &v in samples.iter() {
            out.extend_from_slice(&v.to_be_bytes());
        }
    } else {
        out.extend(samples.iter().map(|&v| v as u8));
    }
    out
}

/// Quantises `[0, 1]` values to 16 bits.
pub fn quantize<T: Scalar>(matrix: &Array2<T>) -> Array2<u16> {
    matrix.mapv(|v| (v.as_f64().clamp(0.0, 1.0) * f64::from(PGM_MAXVAL)).round() as u16)
}

pub fn read_pgm(path: &Path) -> Result<Pgm, RasterError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_pgm(&bytes)
}

pub fn write_pgm(path: &Path, samples: &Array2<u16>, maxval: u16) -> Result<(), RasterError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_pgm(samples, maxval)).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Writes a `[0, 1]` matrix as a 16-bit PGM.
pub fn write_matrix<T: Scalar>(path: &Path, matrix: &Array2<T>) -> Result<(), RasterError> {
    write_pgm(path, &quantize(matrix), PGM_MAXVAL)
}

pub fn write_json<S: Serialize + ?Sized>(path: &Path, value: &S) -> Result<(), RasterError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| RasterError::Json { path: path.into(), source })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D, RasterError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| RasterError::Json { path: path.into(), source })
}

/// Writes the raster and its sidecar.
pub fn write_raster<T: Scalar>(path: &Path, matrix: &Array2<T>, meta: &RasterMeta) -> Result<(), RasterError> {
    if meta.nav.len() != matrix.nrows() {
        return Err(RasterError::DimensionMismatch(format!(
            "nav has {} poses for {} pings",
            meta.nav.len(),
            matrix.nrows()
        )));
    }
    write_matrix(path, matrix)?;
    write_json(&sidecar_path(path), meta)
}

/// Reads a raster and its sidecar, checking that the two agree.
pub fn read_raster<T: Scalar>(path: &Path) -> Result<(Array2<T>, RasterMeta), RasterError> {
    let pgm = read_pgm(path)?;
    let meta: RasterMeta = read_json(&sidecar_path(path))?;
    if meta.nav.len() != pgm.samples.nrows() {
        return Err(RasterError::DimensionMismatch(format!(
            "sidecar nav has {} poses but raster has {} pings",
            meta.nav.len(),
            pgm.samples.nrows()
        )));
    }
    Ok((pgm.normalized(), meta))
}

pub fn write_image<T: Scalar>(path: &Path, image: &SidescanImage<T>) -> Result<(), RasterError> {
    write_raster(path, image.intensities(), &RasterMeta::of(image))
}

pub fn read_image<T: Scalar>(path: &Path) -> Result<SidescanImage<T>, RasterError> {
    let (matrix, meta) = read_raster::<T>(path)?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(SidescanImage::new(id, matrix, meta.bin_resolution, meta.ping_resolution, meta.altitude, meta.nav, meta.side)?)
}

/// 8-bit label raster (class ids, 255 reserved for masked pixels).
pub fn write_labels(path: &Path, labels: &Array2<u8>) -> Result<(), RasterError> {
    write_pgm(path, &labels.mapv(u16::from), 255)
}

pub fn read_labels(path: &Path) -> Result<Array2<u8>, RasterError> {
    let pgm = read_pgm(path)?;
    if pgm.maxval > 255 {
        return Err(RasterError::Header("label rasters must be 8-bit".into()));
    }
    Ok(pgm.samples.mapv(|v| v as u8))
}

pub fn write_grid<V: Serialize>(path: &Path, grid: &GeoGrid<V>) -> Result<(), RasterError> {
    write_json(path, grid)
}

pub fn read_grid<V: DeserializeOwned>(path: &Path) -> Result<GeoGrid<V>, RasterError> {
    let grid: GeoGrid<V> = read_json(path)?;
    let (geometry, values) = (grid.geometry, grid.values().len());
    if values != geometry.len() {
        return Err(GridError::ValueCount { got: values, width: geometry.width, height: geometry.height }.into());
    }
    if !(geometry.cell_size > 0.0) {
        return Err(GridError::InvalidCellSize(geometry.cell_size).into());
    }
    Ok(grid)
}

/// Scalar grid rendered as a 16-bit PGM, north up, no-data as zero.
pub fn write_grid_pgm(path: &Path, grid: &GeoGrid<f64>, lo: f64, hi: f64) -> Result<(), RasterError> {
    let (w, h) = (grid.width(), grid.height());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let samples = Array2::from_shape_fn((h, w), |(r, c)| {
        let j = h - 1 - r;
        grid.get(c, j).map_or(0, |&v| (((v - lo) / span).clamp(0.0, 1.0) * f64::from(PGM_MAXVAL)).round() as u16)
    });
    write_pgm(path, &samples, PGM_MAXVAL)
}

/// Snippet thumbnail as 8-bit grayscale PNG.
pub fn write_png<T: Scalar>(path: &Path, pixels: &Array2<T>) -> Result<(), RasterError> {
    let (h, w) = pixels.dim();
    let buf: Vec<u8> = pixels.iter().map(|v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let img = image::GrayImage::from_raw(w as u32, h as u32, buf)
        .ok_or_else(|| RasterError::DimensionMismatch("png buffer size".into()))?;
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}
