//! Deterministic image alterations used to probe watermark robustness.
//!
//! Textual form (CLI and config files): `kind:key=value[,seed=N]`, e.g.
//! `jpeg:q=80`, `crop:f=0.75`, `gaussian_noise:sigma=8,seed=3`. The level key
//! may be omitted (`contrast:1.2`).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::imaging::GrayImage;

#[derive(Debug, Error, PartialEq)]
pub enum AttackError {
    #[error("level {level} outside {range} for {kind}")]
    InvalidLevel {
        kind: AttackKind,
        level: f64,
        range: &'static str,
    },
    #[error("cannot parse attack {0:?}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttackKind {
    Contrast,
    Luminance,
    Crop,
    Tamper,
    GaussianNoise,
    SaltPepper,
    Jpeg,
}

impl AttackKind {
    pub const ALL: [AttackKind; 7] = [
        AttackKind::Contrast,
        AttackKind::Luminance,
        AttackKind::Crop,
        AttackKind::Tamper,
        AttackKind::GaussianNoise,
        AttackKind::SaltPepper,
        AttackKind::Jpeg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Contrast => "contrast",
            AttackKind::Luminance => "luminance",
            AttackKind::Crop => "crop",
            AttackKind::Tamper => "tamper",
            AttackKind::GaussianNoise => "gaussian_noise",
            AttackKind::SaltPepper => "salt_pepper",
            AttackKind::Jpeg => "jpeg",
        }
    }

    /// Name of the level parameter in the textual form.
    pub fn level_key(self) -> &'static str {
        match self {
            AttackKind::Contrast => "a",
            AttackKind::Luminance => "b",
            AttackKind::Crop | AttackKind::Tamper => "f",
            AttackKind::GaussianNoise => "sigma",
            AttackKind::SaltPepper => "d",
            AttackKind::Jpeg => "q",
        }
    }

    fn range(self) -> (f64, f64, &'static str) {
        match self {
            AttackKind::Contrast => (0.25, 2.0, "[0.25, 2]"),
            AttackKind::Luminance => (-64.0, 64.0, "[-64, 64]"),
            AttackKind::Crop => (f64::MIN_POSITIVE, 1.0, "(0, 1]"),
            AttackKind::Tamper => (0.0, 1.0, "[0, 1]"),
            AttackKind::GaussianNoise => (0.0, 32.0, "[0, 32]"),
            AttackKind::SaltPepper => (0.0, 0.1, "[0, 0.1]"),
            AttackKind::Jpeg => (10.0, 100.0, "[10, 100]"),
        }
    }

    fn uses_rng(self) -> bool {
        matches!(
            self,
            AttackKind::Tamper | AttackKind::GaussianNoise | AttackKind::SaltPepper
        )
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| AttackError::Parse(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub level: f64,
    /// Only read by tamper, gaussian_noise and salt_pepper.
    pub rng_seed: u64,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, level: f64) -> Result<Self, AttackError> {
        Self::seeded(kind, level, 0)
    }

    pub fn seeded(kind: AttackKind, level: f64, rng_seed: u64) -> Result<Self, AttackError> {
        let spec = Self { kind, level, rng_seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        let (lo, hi, range) = self.kind.range();
        if !(self.level.is_finite() && self.level >= lo && self.level <= hi) {
            return Err(AttackError::InvalidLevel {
                kind: self.kind,
                level: self.level,
                range,
            });
        }
        Ok(())
    }
}

impl fmt::Display for AttackSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}={}", self.kind, self.kind.level_key(), self.level)?;
        if self.kind.uses_rng() {
            write!(f, ",seed={}", self.rng_seed)?;
        }
        Ok(())
    }
}

impl FromStr for AttackSpec {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AttackError::Parse(s.to_string());
        let (kind, params) = s.trim().split_once(':').ok_or_else(bad)?;
        let kind: AttackKind = kind.trim().parse()?;
        let (mut level, mut seed) = (None, 0u64);
        for part in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.split_once('=') {
                Some(("seed", v)) => seed = v.trim().parse().map_err(|_| bad())?,
                Some((k, v)) if k.trim() == kind.level_key() => {
                    level = Some(v.trim().parse::<f64>().map_err(|_| bad())?)
                }
                None if level.is_none() => level = Some(part.parse::<f64>().map_err(|_| bad())?),
                _ => return Err(bad()),
            }
        }
        Self::seeded(kind, level.ok_or_else(bad)?, seed)
    }
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Applies an attack; the output has the input's dimensions.
pub fn apply_attack(img: &GrayImage, spec: &AttackSpec) -> Result<GrayImage, AttackError> {
    spec.validate()?;
    let (w, h) = (img.width(), img.height());
    let level = spec.level;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let map = |f: &dyn Fn(u8) -> u8| {
        GrayImage::new(w, h, img.data().iter().map(|&v| f(v)).collect()).expect("same dimensions")
    };
    Ok(match spec.kind {
        AttackKind::Contrast => map(&|v| clamp_u8(128.0 + level * (v as f64 - 128.0))),
        AttackKind::Luminance => map(&|v| clamp_u8(v as f64 + level)),
        AttackKind::Crop => {
            let side = level.sqrt();
            let (kw, kh) = (
                ((w as f64) * side).round() as usize,
                ((h as f64) * side).round() as usize,
            );
            let (x0, y0) = ((w - kw) / 2, (h - kh) / 2);
            GrayImage::from_fn(w, h, |x, y| {
                if x >= x0 && x < x0 + kw && y >= y0 && y < y0 + kh {
                    img.get(x, y)
                } else {
                    0
                }
            })
        }
        AttackKind::Tamper => {
            let side = level.sqrt();
            let (rw, rh) = (
                ((w as f64) * side).round() as usize,
                ((h as f64) * side).round() as usize,
            );
            let x0 = rng.random_range(0..=w - rw);
            let y0 = rng.random_range(0..=h - rh);
            GrayImage::from_fn(w, h, |x, y| {
                if x >= x0 && x < x0 + rw && y >= y0 && y < y0 + rh {
                    128
                } else {
                    img.get(x, y)
                }
            })
        }
        AttackKind::GaussianNoise => {
            if level == 0.0 {
                return Ok(img.clone());
            }
            let normal = Normal::new(0.0, level).expect("sigma validated");
            // one draw per pixel in raster order
            let data = img
                .data()
                .iter()
                .map(|&v| clamp_u8(v as f64 + normal.sample(&mut rng)))
                .collect();
            GrayImage::new(w, h, data).expect("same dimensions")
        }
        AttackKind::SaltPepper => {
            let data = img
                .data()
                .iter()
                .map(|&v| {
                    let hit = rng.random::<f64>() < level;
                    let white = rng.random::<bool>();
                    if hit {
                        if white {
                            255
                        } else {
                            0
                        }
                    } else {
                        v
                    }
                })
                .collect();
            GrayImage::new(w, h, data).expect("same dimensions")
        }
        AttackKind::Jpeg => jpeg_roundtrip(img, level.round() as u32),
    })
}

/// Standard JPEG luminance quantisation table (ITU-T T.81, Annex K), row-major.
pub const LUMA_QUANT: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Table scaled by quality with the IJG rule; q = 100 gives all ones.
pub fn quant_table(quality: u32) -> [u16; 64] {
    let q = quality.clamp(1, 100);
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    LUMA_QUANT.map(|v| ((v as u32 * scale + 50) / 100).clamp(1, 255) as u16)
}

fn dct_basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; 8]; 8];
        for (u, row) in b.iter_mut().enumerate() {
            let c = if u == 0 {
                (1.0f64 / 8.0).sqrt()
            } else {
                (2.0f64 / 8.0).sqrt()
            };
            for (x, v) in row.iter_mut().enumerate() {
                *v = c * (((2 * x + 1) * u) as f64 * PI / 16.0).cos();
            }
        }
        b
    })
}

/// Orthonormal 8x8 DCT-II (`inverse = false`) or its inverse.
fn dct8x8(block: &[f64; 64], inverse: bool) -> [f64; 64] {
    let b = dct_basis();
    let mut tmp = [0.0; 64];
    let mut out = [0.0; 64];
    // rows
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8)
                .map(|x| {
                    if inverse {
                        b[x][u] * block[y * 8 + x]
                    } else {
                        b[u][x] * block[y * 8 + x]
                    }
                })
                .sum();
        }
    }
    // columns
    for x in 0..8 {
        for v in 0..8 {
            out[v * 8 + x] = (0..8)
                .map(|y| {
                    if inverse {
                        b[y][v] * tmp[y * 8 + x]
                    } else {
                        b[v][y] * tmp[y * 8 + x]
                    }
                })
                .sum();
        }
    }
    out
}

/// Grayscale JPEG simulation: level shift, 8x8 DCT, quantise/dequantise,
/// inverse DCT, round and clamp. Partial edge blocks are padded by edge
/// replication.
pub fn jpeg_roundtrip(img: &GrayImage, quality: u32) -> GrayImage {
    let table = quant_table(quality);
    let (w, h) = (img.width(), img.height());
    let mut out = img.clone();
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            let mut block = [0.0; 64];
            for y in 0..8 {
                for x in 0..8 {
                    let v = img.get((bx + x).min(w - 1), (by + y).min(h - 1));
                    block[y * 8 + x] = v as f64 - 128.0;
                }
            }
            let mut coef = dct8x8(&block, false);
            for (c, &q) in coef.iter_mut().zip(&table) {
                *c = (*c / q as f64).round() * q as f64;
            }
            let rec = dct8x8(&coef, true);
            for y in 0..8.min(h - by) {
                for x in 0..8.min(w - bx) {
                    out.set(bx + x, by + y, clamp_u8(rec[y * 8 + x] + 128.0));
                }
            }
        }
    }
    out
}
