//! Per-image identifier: one bit per block, set when the block mean is at
//! least the global mean.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bits::{self, HexError};
use crate::imaging::{block_sums, partition, GrayImage, ImagingError};

pub const DEFAULT_GRID: usize = 16;
pub const DEFAULT_ID_BITS: usize = DEFAULT_GRID * DEFAULT_GRID;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ImageId {
    bits: Vec<bool>,
}

impl ImageId {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        bits::to_bytes(&self.bits)
    }

    pub fn to_hex(&self) -> String {
        bits::to_hex(&self.bits).expect("identifier length must be a multiple of 4")
    }

    pub fn from_hex(s: &str) -> Result<Self, HexError> {
        bits::from_hex(s, None).map(Self::from_bits)
    }

    /// Number of differing bits; `None` on length mismatch.
    pub fn distance(&self, other: &ImageId) -> Option<usize> {
        (self.len() == other.len()).then(|| bits::hamming(&self.bits, &other.bits))
    }
}

impl fmt::Debug for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ImageId({})", bits::to_hex(&self.bits).unwrap_or_default())
    }
}

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for ImageId {
    type Err = HexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_hex(s)
    }
}

impl Serialize for ImageId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ImageId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Row-major block bits: `1` iff `E[block] >= E[image]`.
///
/// The comparison is done on integer sums (`sum_b * N >= sum * n_b`), so ties
/// and affine intensity changes are handled exactly.
pub fn image_identifier(img: &GrayImage, grid_rows: usize, grid_cols: usize) -> Result<ImageId, ImagingError> {
    let blocks = block_sums(img, grid_rows, grid_cols)?;
    let total: u128 = blocks.iter().map(|&(s, _)| s as u128).sum();
    let pixels = (img.width() * img.height()) as u128;
    Ok(ImageId::from_bits(
        blocks
            .iter()
            .map(|&(s, n)| s as u128 * pixels >= total * n as u128)
            .collect(),
    ))
}

/// [`image_identifier`] with the given pixels left out of every mean.
///
/// Pixels outside the image or listed twice are ignored.
pub fn masked_identifier(
    img: &GrayImage,
    grid_rows: usize,
    grid_cols: usize,
    excluded: &[(usize, usize)],
) -> Result<ImageId, ImagingError> {
    let mut blocks = block_sums(img, grid_rows, grid_cols)?;
    let lookup = |len: usize, parts: usize| {
        let mut v = vec![0usize; len];
        for (i, (a, b)) in partition(len, parts).into_iter().enumerate() {
            v[a..b].fill(i);
        }
        v
    };
    let (bx, by) = (lookup(img.width(), grid_cols), lookup(img.height(), grid_rows));
    let mut seen = std::collections::HashSet::new();
    for &(x, y) in excluded {
        if x < img.width() && y < img.height() && seen.insert((x, y)) {
            let b = &mut blocks[by[y] * grid_cols + bx[x]];
            b.0 -= img.get(x, y) as u64;
            b.1 -= 1;
        }
    }
    let total: u128 = blocks.iter().map(|&(s, _)| s as u128).sum();
    let pixels: u128 = blocks.iter().map(|&(_, n)| n as u128).sum();
    Ok(ImageId::from_bits(
        blocks
            .iter()
            .map(|&(s, n)| n > 0 && s as u128 * pixels >= total * n as u128)
            .collect(),
    ))
}

/// Identifier on the default 16x16 grid (256 bits).
pub fn default_identifier(img: &GrayImage) -> Result<ImageId, ImagingError> {
    image_identifier(img, DEFAULT_GRID, DEFAULT_GRID)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_image_is_all_ones() {
        let id = default_identifier(&GrayImage::filled(64, 48, 17)).unwrap();
        assert_eq!(id.len(), 256);
        assert!(id.bits().iter().all(|&b| b));
        assert_eq!(id.to_hex(), "f".repeat(64));
    }

    #[test]
    fn half_split() {
        let img = GrayImage::from_fn(8, 8, |_, y| if y < 4 { 255 } else { 0 });
        let id = image_identifier(&img, 2, 2).unwrap();
        assert_eq!(id.bits(), &[true, true, false, false]);
    }

    #[test]
    fn matches_float_oracle_on_random_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let img = GrayImage::from_fn(256, 256, |_, _| rng.random());
        let id = default_identifier(&img).unwrap();
        let mut global = 0u64;
        for &v in img.data() {
            global += v as u64;
        }
        let global = global as f64 / 65536.0;
        for r in 0..16 {
            for c in 0..16 {
                let mut s = 0u64;
                for y in 16 * r..16 * r + 16 {
                    for x in 16 * c..16 * c + 16 {
                        s += img.get(x, y) as u64;
                    }
                }
                assert_eq!(id.bits()[r * 16 + c], s as f64 / 256.0 >= global);
            }
        }
    }

    #[test]
    fn grid_errors() {
        let img = GrayImage::filled(8, 8, 0);
        assert!(image_identifier(&img, 9, 2).is_err());
        assert!(image_identifier(&img, 0, 2).is_err());
    }

    #[test]
    fn masked_ignores_excluded_pixels() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = GrayImage::from_fn(64, 64, |_, _| rng.random());
        let holes: Vec<_> = (0..64).map(|i| (i, (i * 7) % 64)).collect();
        assert_eq!(
            masked_identifier(&img, 8, 8, &[]).unwrap(),
            image_identifier(&img, 8, 8).unwrap()
        );
        let base = masked_identifier(&img, 8, 8, &holes).unwrap();
        let mut other = img.clone();
        for &(x, y) in &holes {
            other.set(x, y, if img.get(x, y) < 128 { 255 } else { 0 });
        }
        assert_eq!(masked_identifier(&other, 8, 8, &holes).unwrap(), base);
    }

    proptest! {
        #[test]
        fn affine_invariance(seed in any::<u64>(), a in 1u32..=3, b in 0u32..=40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = GrayImage::from_fn(40, 40, |_, _| rng.random_range(0..=70u8));
            let mapped = GrayImage::from_fn(40, 40, |x, y| (a * img.get(x, y) as u32 + b) as u8);
            prop_assert_eq!(
                image_identifier(&img, 8, 8).unwrap(),
                image_identifier(&mapped, 8, 8).unwrap()
            );
        }

        #[test]
        fn hex_roundtrip(bytes in proptest::array::uniform32(any::<u8>())) {
            let id = ImageId::from_bits(bits::from_bytes(&bytes));
            prop_assert_eq!(ImageId::from_hex(&id.to_hex()).unwrap(), id);
        }
    }
}
