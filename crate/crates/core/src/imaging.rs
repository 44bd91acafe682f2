//! Grayscale rasters, PGM/PNG I/O, block statistics and LBP primitives.

use std::fs;
use std::io::{BufWriter, Cursor};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image file: {0}")]
    CorruptFile(String),
    #[error("invalid {rows}x{cols} grid for a {width}x{height} image")]
    InvalidGrid {
        rows: usize,
        cols: usize,
        width: usize,
        height: usize,
    },
    #[error("pixel window at ({x}, {y}) radius {radius} leaves the image")]
    OutOfBounds { x: usize, y: usize, radius: usize },
    #[error("invalid dimensions {width}x{height} for {len} pixels")]
    Dimensions { width: usize, height: usize, len: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// 8-bit single-channel image, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(ImagingError::Dimensions {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as u64).sum::<u64>() as f64 / self.data.len() as f64
    }

    /// Sum of intensities over `[x0, x1) x [y0, y1)`.
    pub fn region_sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> u64 {
        (y0..y1)
            .map(|y| {
                self.data[y * self.width + x0..y * self.width + x1]
                    .iter()
                    .map(|&v| v as u64)
                    .sum::<u64>()
            })
            .sum()
    }
}

// ---------------------------------------------------------------------------
// File I/O
// ---------------------------------------------------------------------------

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Loads a binary PGM (P5, maxval 255) or an 8-bit grayscale PNG.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage, ImagingError> {
    let bytes = fs::read(path)?;
    decode_image(&bytes)
}

pub fn decode_image(bytes: &[u8]) -> Result<GrayImage, ImagingError> {
    if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(PNG_MAGIC) {
        decode_png(bytes)
    } else {
        Err(ImagingError::UnsupportedFormat(
            "expected binary PGM (P5) or PNG".into(),
        ))
    }
}

/// Writes PNG when the extension is `.png`, binary PGM otherwise.
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), ImagingError> {
    let path = path.as_ref();
    let is_png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let bytes = if is_png { encode_png(img)? } else { encode_pgm(img) };
    fs::write(path, bytes)?;
    Ok(())
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, ImagingError> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments between header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(ImagingError::CorruptFile("truncated PGM header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImagingError::CorruptFile("malformed PGM header".into()))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(ImagingError::UnsupportedFormat(format!("PGM maxval {maxval}")));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(ImagingError::CorruptFile("missing PGM header terminator".into()));
    }
    pos += 1;
    let payload = &bytes[pos..];
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| ImagingError::CorruptFile("PGM dimensions overflow".into()))?;
    if width == 0 || height == 0 || payload.len() != expected {
        return Err(ImagingError::CorruptFile(format!(
            "{width}x{height} PGM with {} payload bytes",
            payload.len()
        )));
    }
    GrayImage::new(width, height, payload.to_vec())
}

pub fn encode_png(img: &GrayImage) -> Result<Vec<u8>, ImagingError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(BufWriter::new(&mut out), img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| ImagingError::CorruptFile(e.to_string()))?;
        writer
            .write_image_data(&img.data)
            .map_err(|e| ImagingError::CorruptFile(e.to_string()))?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<GrayImage, ImagingError> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| ImagingError::CorruptFile(e.to_string()))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(ImagingError::UnsupportedFormat(format!(
            "PNG {:?} {:?}, expected 8-bit grayscale",
            info.color_type, info.bit_depth
        )));
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(width * height)];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| ImagingError::CorruptFile(e.to_string()))?;
    buf.truncate(frame.buffer_size());
    GrayImage::new(width, height, buf)
}

// ---------------------------------------------------------------------------
// Block statistics
// ---------------------------------------------------------------------------

/// Half-open pixel ranges `[start, end)` of `parts` cells covering `len`;
/// the last cell absorbs the remainder.
pub fn partition(len: usize, parts: usize) -> Vec<(usize, usize)> {
    let step = len / parts;
    (0..parts)
        .map(|i| {
            let end = if i + 1 == parts { len } else { (i + 1) * step };
            (i * step, end)
        })
        .collect()
}

pub(crate) fn check_grid(img: &GrayImage, rows: usize, cols: usize) -> Result<(), ImagingError> {
    if rows == 0 || cols == 0 || rows > img.height || cols > img.width {
        return Err(ImagingError::InvalidGrid {
            rows,
            cols,
            width: img.width,
            height: img.height,
        });
    }
    Ok(())
}

/// Per-block `(sum, pixel count)`, row-major over the grid.
pub fn block_sums(img: &GrayImage, rows: usize, cols: usize) -> Result<Vec<(u64, u64)>, ImagingError> {
    check_grid(img, rows, cols)?;
    let ys = partition(img.height, rows);
    let xs = partition(img.width, cols);
    let mut out = Vec::with_capacity(rows * cols);
    for &(y0, y1) in &ys {
        for &(x0, x1) in &xs {
            out.push((img.region_sum(x0, y0, x1, y1), ((y1 - y0) * (x1 - x0)) as u64));
        }
    }
    Ok(out)
}

/// Mean intensity of each block of a `rows x cols` grid.
pub fn block_means(img: &GrayImage, rows: usize, cols: usize) -> Result<Vec<Vec<f64>>, ImagingError> {
    let sums = block_sums(img, rows, cols)?;
    Ok(sums
        .chunks(cols)
        .map(|row| row.iter().map(|&(s, n)| s as f64 / n as f64).collect())
        .collect())
}

// ---------------------------------------------------------------------------
// Local binary patterns
// ---------------------------------------------------------------------------

/// Neighbour offsets, clockwise from the top-left; neighbour `i` drives bit `i`.
pub const LBP_NEIGHBOURS: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0)];

/// 8-neighbour LBP code; bit `i` is set iff neighbour `i` >= centre.
pub fn lbp_code(img: &GrayImage, x: usize, y: usize) -> Result<u8, ImagingError> {
    if x == 0 || y == 0 || x + 1 >= img.width || y + 1 >= img.height {
        return Err(ImagingError::OutOfBounds { x, y, radius: 1 });
    }
    Ok(lbp_code_unchecked(img, x, y))
}

#[inline]
pub(crate) fn lbp_code_unchecked(img: &GrayImage, x: usize, y: usize) -> u8 {
    let centre = img.get(x, y);
    LBP_NEIGHBOURS.iter().enumerate().fold(0u8, |code, (i, &(dx, dy))| {
        let v = img.get((x as isize + dx) as usize, (y as isize + dy) as usize);
        code | (((v >= centre) as u8) << i)
    })
}

/// Number of circular 0/1 transitions in an LBP code (0..=8, always even).
pub fn lbp_transitions(code: u8) -> u32 {
    (code ^ code.rotate_right(1)).count_ones()
}

fn check_window(img: &GrayImage, x: usize, y: usize, radius: usize) -> Result<(), ImagingError> {
    if x < radius || y < radius || x + radius >= img.width || y + radius >= img.height {
        return Err(ImagingError::OutOfBounds { x, y, radius });
    }
    Ok(())
}

/// Sum and count of the `(2r+1)^2` window around `(x, y)`, centre excluded.
pub fn local_sum(img: &GrayImage, x: usize, y: usize, radius: usize) -> Result<(u64, u64), ImagingError> {
    check_window(img, x, y, radius)?;
    let total = img.region_sum(x - radius, y - radius, x + radius + 1, y + radius + 1);
    let side = (2 * radius + 1) as u64;
    Ok((total - img.get(x, y) as u64, side * side - 1))
}

/// Mean of the `(2r+1)^2` window around `(x, y)`, centre excluded.
pub fn local_mean(img: &GrayImage, x: usize, y: usize, radius: usize) -> Result<f64, ImagingError> {
    if radius == 0 {
        return Err(ImagingError::OutOfBounds { x, y, radius });
    }
    let (sum, n) = local_sum(img, x, y, radius)?;
    Ok(sum as f64 / n as f64)
}

/// Peak signal-to-noise ratio in dB; infinite for identical images.
pub fn psnr(a: &GrayImage, b: &GrayImage) -> f64 {
    assert_eq!((a.width, a.height), (b.width, b.height), "PSNR needs equal dimensions");
    let sse: u64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&p, &q)| {
            let d = p as i64 - q as i64;
            (d * d) as u64
        })
        .sum();
    if sse == 0 {
        return f64::INFINITY;
    }
    let mse = sse as f64 / a.data.len() as f64;
    10.0 * (255.0f64 * 255.0 / mse).log10()
}
