//! Gabor FingerCode: texture statistics from a bank of frequency-domain
//! Gabor filters (Manjunath-Ma design).
//!
//! The image is resized to 128x128 (bilinear), its mean is removed and the
//! spectrum is multiplied by each filter. For every filter the mean and the
//! standard deviation of the response magnitude are recorded, so the vector
//! has `2 * scales * orientations` entries laid out as
//! `[mean(s,o), std(s,o)]` with the orientation index varying fastest.

use std::collections::HashMap;
use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlannerScalar};
use thiserror::Error;

use crate::imaging::GrayImage;

pub const DEFAULT_SCALES: usize = 16;
pub const DEFAULT_ORIENTATIONS: usize = 16;
/// Side of the square working raster.
pub const WORK_SIZE: usize = 128;
/// Lowest and highest centre frequencies, cycles per pixel.
pub const FREQ_LOW: f64 = 0.05;
pub const FREQ_HIGH: f64 = 0.4;
pub const MIN_SIDE: usize = 32;

// Filter taps below this weight are dropped from the sparse bank.
const TAP_FLOOR: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FingerCodeError {
    #[error("image {width}x{height} is smaller than {MIN_SIDE}x{MIN_SIDE}")]
    ImageTooSmall { width: usize, height: usize },
    #[error("filter bank needs at least one scale and one orientation")]
    EmptyBank,
    #[error("malformed FingerCode CSV: {0}")]
    Parse(String),
}

/// Real-valued biometric feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerCode {
    pub features: Vec<f64>,
    pub source_id: Option<String>,
}

impl FingerCode {
    pub fn new(features: Vec<f64>) -> Self {
        Self {
            features,
            source_id: None,
        }
    }

    pub fn with_source(mut self, id: impl Into<String>) -> Self {
        self.source_id = Some(id.into());
        self
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Comma-separated features; `f64` display is the shortest exact form.
    pub fn to_csv_row(&self) -> String {
        self.features.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
    }

    pub fn from_csv_row(row: &str) -> Result<Self, FingerCodeError> {
        let features = row
            .trim()
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| FingerCodeError::Parse(format!("bad value {s:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(features))
    }
}

impl fmt::Display for FingerCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_csv_row())
    }
}

impl FromStr for FingerCode {
    type Err = FingerCodeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_csv_row(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaborParams {
    pub centre: f64,
    pub theta: f64,
    pub sigma_u: f64,
    pub sigma_v: f64,
}

impl GaborParams {
    /// Frequency response at `(fu, fv)` in cycles per pixel.
    pub fn response(&self, fu: f64, fv: f64) -> f64 {
        let (s, c) = self.theta.sin_cos();
        let u = fu * c + fv * s;
        let v = -fu * s + fv * c;
        let du = u - self.centre;
        (-0.5 * (du * du / (self.sigma_u * self.sigma_u) + v * v / (self.sigma_v * self.sigma_v))).exp()
    }
}

/// Manjunath-Ma parameters for every `(scale, orientation)`, scale-major.
pub fn gabor_params(scales: usize, orientations: usize) -> Vec<GaborParams> {
    let ratio = if scales > 1 {
        (FREQ_HIGH / FREQ_LOW).powf(1.0 / (scales - 1) as f64)
    } else {
        2.0
    };
    let two_ln2 = 2.0 * LN_2;
    let mut out = Vec::with_capacity(scales * orientations);
    for s in 0..scales {
        let centre = if scales > 1 {
            FREQ_LOW * ratio.powi(s as i32)
        } else {
            FREQ_HIGH
        };
        let sigma_u = (ratio - 1.0) * centre / ((ratio + 1.0) * two_ln2.sqrt());
        let su2 = sigma_u * sigma_u;
        let sigma_v = (PI / (2 * orientations) as f64).tan() * (centre - two_ln2 * su2 / centre)
            / (two_ln2 - two_ln2 * two_ln2 * su2 / (centre * centre)).sqrt();
        for o in 0..orientations {
            out.push(GaborParams {
                centre,
                theta: o as f64 * PI / orientations as f64,
                sigma_u,
                sigma_v,
            });
        }
    }
    out
}

fn frequency(k: usize, n: usize) -> f64 {
    if k < n / 2 {
        k as f64 / n as f64
    } else {
        k as f64 / n as f64 - 1.0
    }
}

/// Sampled filter taps on the `WORK_SIZE^2` DFT grid.
struct SparseFilter {
    taps: Vec<(usize, f64)>,
    /// Spectrum rows holding at least one tap.
    rows: Vec<usize>,
}

/// Immutable, shareable Gabor filter bank plus FFT plans.
pub struct FilterBank {
    scales: usize,
    orientations: usize,
    filters: Vec<SparseFilter>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for FilterBank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FilterBank")
            .field("scales", &self.scales)
            .field("orientations", &self.orientations)
            .finish_non_exhaustive()
    }
}

impl FilterBank {
    pub fn new(scales: usize, orientations: usize) -> Result<Self, FingerCodeError> {
        if scales == 0 || orientations == 0 {
            return Err(FingerCodeError::EmptyBank);
        }
        let n = WORK_SIZE;
        let filters = gabor_params(scales, orientations)
            .iter()
            .map(|p| {
                let mut taps = Vec::new();
                for ky in 0..n {
                    for kx in 0..n {
                        let w = p.response(frequency(kx, n), frequency(ky, n));
                        if w > TAP_FLOOR {
                            taps.push((ky * n + kx, w));
                        }
                    }
                }
                let mut rows: Vec<usize> = taps.iter().map(|&(i, _)| i / n).collect();
                rows.dedup();
                SparseFilter { taps, rows }
            })
            .collect();
        // the scalar planner keeps the arithmetic order independent of CPU features
        let mut planner = FftPlannerScalar::new();
        Ok(Self {
            scales,
            orientations,
            filters,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    /// Shared bank for the given shape, built on first use.
    pub fn shared(scales: usize, orientations: usize) -> Result<Arc<Self>, FingerCodeError> {
        type Banks = Mutex<HashMap<(usize, usize), Arc<FilterBank>>>;
        static CACHE: OnceLock<Banks> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(bank) = cache.lock().unwrap().get(&(scales, orientations)) {
            return Ok(bank.clone());
        }
        let bank = Arc::new(Self::new(scales, orientations)?);
        Ok(cache
            .lock()
            .unwrap()
            .entry((scales, orientations))
            .or_insert(bank)
            .clone())
    }

    pub fn feature_len(&self) -> usize {
        2 * self.scales * self.orientations
    }

    pub fn extract(&self, img: &GrayImage) -> Result<FingerCode, FingerCodeError> {
        if img.width() < MIN_SIDE || img.height() < MIN_SIDE {
            return Err(FingerCodeError::ImageTooSmall {
                width: img.width(),
                height: img.height(),
            });
        }
        let n = WORK_SIZE;
        let mut raster = resize_bilinear(img, n, n);
        let mean = raster.iter().sum::<f64>() / raster.len() as f64;
        raster.iter_mut().for_each(|v| *v -= mean);

        let mut spectrum: Vec<Complex<f64>> = raster.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft2(&mut spectrum, n, self.forward.as_ref());

        let norm = (n * n) as f64;
        let mut features = Vec::with_capacity(self.feature_len());
        let mut work = vec![Complex::new(0.0, 0.0); n * n];
        for filter in &self.filters {
            work.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for &(i, w) in &filter.taps {
                work[i] = spectrum[i] * w;
            }
            // rows without taps stay zero through the first pass
            for &r in &filter.rows {
                self.inverse.process(&mut work[r * n..(r + 1) * n]);
            }
            transpose(&mut work, n);
            self.inverse.process(&mut work);
            transpose(&mut work, n);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for c in &work {
                let m = c.norm() / norm;
                sum += m;
                sum_sq += m * m;
            }
            let mean = sum / norm;
            let var = (sum_sq / norm - mean * mean).max(0.0);
            features.push(mean);
            features.push(var.sqrt());
        }
        Ok(FingerCode::new(features))
    }
}

/// Extracts the `2 * scales * orientations` Gabor feature vector.
pub fn extract_fingercode(img: &GrayImage, scales: usize, orientations: usize) -> Result<FingerCode, FingerCodeError> {
    FilterBank::shared(scales, orientations)?.extract(img)
}

fn fft2(data: &mut [Complex<f64>], n: usize, fft: &dyn Fft<f64>) {
    fft.process(data);
    transpose(data, n);
    fft.process(data);
    transpose(data, n);
}

fn transpose(data: &mut [Complex<f64>], n: usize) {
    for y in 0..n {
        for x in y + 1..n {
            data.swap(y * n + x, x * n + y);
        }
    }
}

/// Bilinear resampling with pixel-centre alignment, kept in floating point.
pub fn resize_bilinear(img: &GrayImage, out_w: usize, out_h: usize) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let axis = |o: usize, out: usize, size: usize| {
        let s = ((o as f64 + 0.5) * size as f64 / out as f64 - 0.5).clamp(0.0, (size - 1) as f64);
        let i0 = s.floor() as usize;
        (i0, (i0 + 1).min(size - 1), s - i0 as f64)
    };
    let xs: Vec<_> = (0..out_w).map(|o| axis(o, out_w, w)).collect();
    let mut out = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        let (y0, y1, fy) = axis(oy, out_h, h);
        for &(x0, x1, fx) in &xs {
            let top = img.get(x0, y0) as f64 * (1.0 - fx) + img.get(x1, y0) as f64 * fx;
            let bottom = img.get(x0, y1) as f64 * (1.0 - fx) + img.get(x1, y1) as f64 * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}
