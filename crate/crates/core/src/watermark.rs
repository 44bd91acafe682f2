//! Blind LBP-modulated watermarking of a 64x64 bit mark.
//!
//! The carrier is split into a 64x64 grid of tiles (the last tile of each
//! axis absorbs the remainder). Each tile stores one bit at its centre pixel,
//! the *anchor*: the bit is 1 iff the anchor is at least the mean of the
//! surrounding `(2r+1)^2 - 1` window, which lies inside the tile. Embedding
//! pushes the anchor at least `delta` past that mean, where
//! `delta = strength * (1 + u)` and `u` is the tile's mean LBP
//! non-uniformity (circular 0/1 transitions / 8) measured on the original
//! carrier. Only anchors change, so extraction needs neither the original
//! nor a key, and any `v -> a*v + b` (a > 0) without clamping leaves every
//! bit intact.
//!
//! Mark rows are grouped in bands of eight (one payload copy each); band `j`
//! is rotated by `8j` tile columns so that losing a border column of tiles
//! damages at most one copy of any payload bit.

use std::fmt;

use thiserror::Error;

use crate::biohash::BioCode;
use crate::bits::{self, HexError};
use crate::imaging::{lbp_code_unchecked, lbp_transitions, local_sum, partition, GrayImage};

pub const MARK_SIDE: usize = 64;
pub const MARK_BITS: usize = MARK_SIDE * MARK_SIDE;
pub const HALF_PAYLOAD_BITS: usize = 256;
pub const PAYLOAD_BITS: usize = 2 * HALF_PAYLOAD_BITS;
pub const REPETITIONS: usize = MARK_BITS / PAYLOAD_BITS;
pub const DEFAULT_STRENGTH: f64 = 8.0;
/// Smallest carrier side (4-pixel tiles).
pub const MIN_SIDE: usize = 4 * MARK_SIDE;
const BAND_ROWS: usize = PAYLOAD_BITS / MARK_SIDE;
const BAND_SHIFT: usize = MARK_SIDE / REPETITIONS;

#[derive(Debug, Error)]
pub enum WatermarkError {
    #[error("image {width}x{height} is smaller than {MIN_SIDE}x{MIN_SIDE}")]
    ImageTooSmall { width: usize, height: usize },
    #[error("{tile_w}x{tile_h} tiles cannot hold a radius-{radius} window")]
    Capacity {
        tile_w: usize,
        tile_h: usize,
        radius: usize,
    },
    #[error("embedding strength must be finite and positive, got {0}")]
    InvalidStrength(f64),
    #[error("payload halves must be {HALF_PAYLOAD_BITS} bits, got {owner} and {customer}")]
    PayloadLength { owner: usize, customer: usize },
    #[error("malformed mark: {0}")]
    Format(String),
    #[error(transparent)]
    Hex(#[from] HexError),
}

/// 64x64 bit matrix, row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Mark {
    bits: Vec<bool>,
}

impl fmt::Debug for Mark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ones = self.bits.iter().filter(|&&b| b).count();
        write!(f, "Mark({ones}/{MARK_BITS} set)")
    }
}

impl Mark {
    pub fn from_bits(bits: Vec<bool>) -> Result<Self, WatermarkError> {
        if bits.len() != MARK_BITS {
            return Err(WatermarkError::Format(format!(
                "{} bits, expected {MARK_BITS}",
                bits.len()
            )));
        }
        Ok(Self { bits })
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * MARK_SIDE + col]
    }

    pub fn to_hex(&self) -> String {
        bits::to_hex(&self.bits).expect("mark is 4096 bits")
    }

    pub fn from_hex(s: &str) -> Result<Self, WatermarkError> {
        Self::from_bits(bits::from_hex(s, Some(MARK_BITS))?)
    }

    /// Binary PBM (P4); a set bit is black.
    pub fn to_pbm(&self) -> Vec<u8> {
        let mut out = format!("P4\n{MARK_SIDE} {MARK_SIDE}\n").into_bytes();
        out.extend(bits::to_bytes(&self.bits));
        out
    }

    /// Reads a 64x64 PBM in either plain (P1) or raw (P4) form.
    pub fn from_pbm(bytes: &[u8]) -> Result<Self, WatermarkError> {
        let bad = |m: &str| WatermarkError::Format(m.to_string());
        let raw = match bytes.get(..2) {
            Some(b"P4") => true,
            Some(b"P1") => false,
            _ => return Err(bad("expected a P1 or P4 bitmap")),
        };
        let mut pos = 2;
        let next_token = |pos: &mut usize| -> Option<&[u8]> {
            loop {
                match bytes.get(*pos)? {
                    b if b.is_ascii_whitespace() => *pos += 1,
                    b'#' => {
                        while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                            *pos += 1;
                        }
                    }
                    _ => break,
                }
            }
            let start = *pos;
            while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
                *pos += 1;
            }
            Some(&bytes[start..*pos])
        };
        let dim = |pos: &mut usize| {
            next_token(pos)
                .and_then(|t| std::str::from_utf8(t).ok())
                .and_then(|s| s.parse::<usize>().ok())
        };
        let (w, h) = (dim(&mut pos), dim(&mut pos));
        if (w, h) != (Some(MARK_SIDE), Some(MARK_SIDE)) {
            return Err(bad("mark bitmap must be 64x64"));
        }
        let bits = if raw {
            let payload = bytes.get(pos + 1..).ok_or_else(|| bad("truncated P4 payload"))?;
            if payload.len() != MARK_BITS / 8 {
                return Err(bad("P4 payload must be 512 bytes"));
            }
            bits::from_bytes(payload)
        } else {
            let bits: Vec<bool> = bytes[pos..]
                .iter()
                .filter(|b| !b.is_ascii_whitespace())
                .map(|&b| match b {
                    b'0' => Ok(false),
                    b'1' => Ok(true),
                    _ => Err(bad("P1 pixels must be 0 or 1")),
                })
                .collect::<Result<_, _>>()?;
            bits
        };
        Self::from_bits(bits)
    }
}

/// Owner and customer BioCodes carried by a mark.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Payload {
    pub owner: BioCode,
    pub customer: BioCode,
}

impl Payload {
    pub fn new(owner: BioCode, customer: BioCode) -> Result<Self, WatermarkError> {
        if owner.len() != HALF_PAYLOAD_BITS || customer.len() != HALF_PAYLOAD_BITS {
            return Err(WatermarkError::PayloadLength {
                owner: owner.len(),
                customer: customer.len(),
            });
        }
        Ok(Self { owner, customer })
    }

    pub fn to_bits(&self) -> Vec<bool> {
        let mut v = self.owner.bits().to_vec();
        v.extend_from_slice(self.customer.bits());
        v
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        assert_eq!(bits.len(), PAYLOAD_BITS);
        Self {
            owner: BioCode::from_bits(bits[..HALF_PAYLOAD_BITS].to_vec()),
            customer: BioCode::from_bits(bits[HALF_PAYLOAD_BITS..].to_vec()),
        }
    }
}

/// Majority-decoded payload with per-bit confidence `|ones - zeros| / 8`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedPayload {
    pub payload: Payload,
    pub confidence: Vec<f64>,
}

/// Fills the mark row-major with eight copies of the 512-bit payload.
pub fn build_mark(payload: &Payload) -> Mark {
    repeat_bits(&payload.to_bits())
}

pub(crate) fn repeat_bits(payload: &[bool]) -> Mark {
    debug_assert_eq!(payload.len(), PAYLOAD_BITS);
    Mark {
        bits: payload.iter().copied().cycle().take(MARK_BITS).collect(),
    }
}

/// Majority vote over the eight copies of every payload bit; 4-4 ties give 0.
pub fn decode_bits(mark: &Mark) -> (Vec<bool>, Vec<f64>) {
    (0..PAYLOAD_BITS)
        .map(|j| {
            let ones = (0..REPETITIONS).filter(|r| mark.bits[r * PAYLOAD_BITS + j]).count();
            let zeros = REPETITIONS - ones;
            (ones > zeros, ones.abs_diff(zeros) as f64 / REPETITIONS as f64)
        })
        .unzip()
}

pub fn decode_mark(mark: &Mark) -> DecodedPayload {
    let (bits, confidence) = decode_bits(mark);
    DecodedPayload {
        payload: Payload::from_bits(&bits),
        confidence,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedConfig {
    pub strength: f64,
    /// Window radius; `None` picks 2 when tiles allow it, else 1.
    pub radius: Option<usize>,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            strength: DEFAULT_STRENGTH,
            radius: None,
        }
    }
}

/// Tile geometry shared by embedding and extraction.
#[derive(Debug, Clone)]
pub struct TileLayout {
    xs: Vec<(usize, usize)>,
    ys: Vec<(usize, usize)>,
    radius: usize,
}

impl TileLayout {
    pub fn new(width: usize, height: usize, radius: Option<usize>) -> Result<Self, WatermarkError> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(WatermarkError::ImageTooSmall { width, height });
        }
        let (tile_w, tile_h) = (width / MARK_SIDE, height / MARK_SIDE);
        let fits = (tile_w.min(tile_h) - 1) / 2;
        let radius = match radius {
            None => fits.min(2),
            Some(r) if r >= 1 && r <= fits => r,
            Some(r) => {
                return Err(WatermarkError::Capacity {
                    tile_w,
                    tile_h,
                    radius: r,
                })
            }
        };
        Ok(Self {
            xs: partition(width, MARK_SIDE),
            ys: partition(height, MARK_SIDE),
            radius,
        })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Tile (row, col) holding mark bit (row, col).
    pub fn tile_of(row: usize, col: usize) -> (usize, usize) {
        (row, (col + BAND_SHIFT * (row / BAND_ROWS)) % MARK_SIDE)
    }

    pub fn tile_bounds(&self, tile_row: usize, tile_col: usize) -> (usize, usize, usize, usize) {
        let (x0, x1) = self.xs[tile_col];
        let (y0, y1) = self.ys[tile_row];
        (x0, y0, x1, y1)
    }

    pub fn anchor(&self, tile_row: usize, tile_col: usize) -> (usize, usize) {
        let (x0, y0, x1, y1) = self.tile_bounds(tile_row, tile_col);
        (x0 + (x1 - x0) / 2, y0 + (y1 - y0) / 2)
    }

    /// Anchor pixel of every mark bit, row-major over the mark.
    pub fn anchors(&self) -> Vec<(usize, usize)> {
        (0..MARK_SIDE)
            .flat_map(|r| (0..MARK_SIDE).map(move |c| (r, c)))
            .map(|(r, c)| {
                let (tr, tc) = Self::tile_of(r, c);
                self.anchor(tr, tc)
            })
            .collect()
    }
}

/// Mean LBP non-uniformity of a tile, in `[0, 1]`.
pub fn tile_nonuniformity(img: &GrayImage, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
    let (mut total, mut count) = (0u32, 0u32);
    for y in y0.max(1)..y1.min(img.height() - 1) {
        for x in x0.max(1)..x1.min(img.width() - 1) {
            total += lbp_transitions(lbp_code_unchecked(img, x, y));
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        total as f64 / (8 * count) as f64
    }
}

pub fn embed(img: &GrayImage, mark: &Mark, strength: f64) -> Result<GrayImage, WatermarkError> {
    embed_with(img, mark, &EmbedConfig { strength, radius: None })
}

pub fn embed_with(img: &GrayImage, mark: &Mark, cfg: &EmbedConfig) -> Result<GrayImage, WatermarkError> {
    if !cfg.strength.is_finite() || cfg.strength <= 0.0 {
        return Err(WatermarkError::InvalidStrength(cfg.strength));
    }
    let layout = TileLayout::new(img.width(), img.height(), cfg.radius)?;
    let mut out = img.clone();
    for r in 0..MARK_SIDE {
        for c in 0..MARK_SIDE {
            let (tr, tc) = TileLayout::tile_of(r, c);
            let (x0, y0, x1, y1) = layout.tile_bounds(tr, tc);
            let (ax, ay) = layout.anchor(tr, tc);
            let u = tile_nonuniformity(img, x0, y0, x1, y1);
            let delta = cfg.strength * (1.0 + u);
            // windows stay inside their tile, so neighbours are original pixels
            let (sum, n) = local_sum(img, ax, ay, layout.radius).expect("window inside tile");
            let mean = sum as f64 / n as f64;
            let anchor = img.get(ax, ay) as f64;
            let value = if mark.get(r, c) {
                let target = mean + delta;
                if anchor >= target {
                    anchor
                } else {
                    target.ceil().min(255.0)
                }
            } else {
                let target = mean - delta;
                if anchor <= target {
                    anchor
                } else {
                    target.floor().max(0.0)
                }
            };
            out.set(ax, ay, value as u8);
        }
    }
    Ok(out)
}

/// Reads one bit per tile: `anchor >= local mean`.
pub fn extract(img: &GrayImage) -> Result<Mark, WatermarkError> {
    extract_with(img, None)
}

pub fn extract_with(img: &GrayImage, radius: Option<usize>) -> Result<Mark, WatermarkError> {
    let layout = TileLayout::new(img.width(), img.height(), radius)?;
    let bits = layout
        .anchors()
        .into_iter()
        .map(|(x, y)| {
            let (sum, n) = local_sum(img, x, y, layout.radius).expect("window inside tile");
            img.get(x, y) as u64 * n >= sum
        })
        .collect();
    Ok(Mark { bits })
}
