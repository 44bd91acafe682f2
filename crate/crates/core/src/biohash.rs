//! BioHashing: seeded orthonormal random projection followed by sign
//! quantisation.
//!
//! # Pseudo-random stream
//!
//! The projection must be recomputable bit-for-bit from the seed on any
//! platform. The 256-bit seed is expanded as
//! `state = SHA-256("biomark/biohash/v1" || seed)` and fed to xoshiro256**
//! (state words little-endian). Each `u64` draw is mapped to
//! `((x >> 11) * 2^-53) * 2 - 1`, an exactly representable value in
//! `[-1, 1)`. Candidate vectors consume `n` consecutive draws; a rejected
//! candidate is simply replaced by the next `n` draws.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bits::{self, HexError};
use crate::fingercode::FingerCode;

pub const DEFAULT_CODE_BITS: usize = 256;
pub const PRNG_DOMAIN: &[u8] = b"biomark/biohash/v1";
/// Candidates whose residual norm falls below this are redrawn.
pub const RANK_TOLERANCE: f64 = 1e-10;
pub const MAX_REDRAWS: usize = 16;

#[derive(Debug, Error)]
pub enum BioHashError {
    #[error("cannot draw {m} orthonormal vectors of length {n}")]
    InvalidDims { n: usize, m: usize },
    #[error("vector {index} stayed rank deficient after {MAX_REDRAWS} redraws")]
    RankDeficiency { index: usize },
    #[error("code lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("threshold {0} is outside [0, 1]")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Hex(#[from] HexError),
}

/// 256-bit secret that determines a projection.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Seed(pub [u8; 32]);

impl Seed {
    pub fn from_hex(s: &str) -> Result<Self, HexError> {
        let bytes = hex::decode(s.trim()).map_err(|_| HexError::Invalid(s.to_string()))?;
        let arr: [u8; 32] = bytes.try_into().map_err(|b: Vec<u8>| HexError::Length {
            expected: 64,
            actual: b.len() * 2,
        })?;
        Ok(Self(arr))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // secrets stay out of logs
        f.write_str("Seed(..)")
    }
}

impl From<[u8; 32]> for Seed {
    fn from(b: [u8; 32]) -> Self {
        Self(b)
    }
}

/// Deterministic draw stream for a seed.
pub struct ProjectionStream {
    rng: Xoshiro256StarStar,
}

impl ProjectionStream {
    pub fn new(seed: &Seed) -> Self {
        let mut h = Sha256::new();
        h.update(PRNG_DOMAIN);
        h.update(seed.0);
        let state: [u8; 32] = h.finalize().into();
        Self {
            rng: Xoshiro256StarStar::from_seed(state),
        }
    }

    /// Next value, uniform in `[-1, 1)`.
    pub fn next_unit(&mut self) -> f64 {
        let x = self.rng.next_u64() >> 11;
        (x as f64) * (1.0 / (1u64 << 53) as f64) * 2.0 - 1.0
    }
}

/// `m` orthonormal vectors of length `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    n: usize,
    vectors: Vec<Vec<f64>>,
}

impl Projection {
    pub fn generate(seed: &Seed, n: usize, m: usize) -> Result<Self, BioHashError> {
        let mut stream = ProjectionStream::new(seed);
        let vectors = orthonormalize(n, m, || stream.next_unit())?;
        Ok(Self { n, vectors })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn project(&self, features: &[f64]) -> Result<Vec<f64>, BioHashError> {
        if features.len() != self.n {
            return Err(BioHashError::InvalidDims {
                n: features.len(),
                m: self.m(),
            });
        }
        Ok(self.vectors.iter().map(|v| dot(v, features)).collect())
    }

    /// Bit `i` is set iff `<F, V_i> >= threshold`.
    pub fn biohash(&self, fc: &FingerCode, threshold: f64) -> Result<BioCode, BioHashError> {
        let p = self.project(&fc.features)?;
        Ok(BioCode::from_bits(p.into_iter().map(|x| x >= threshold).collect()))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Modified Gram-Schmidt with one re-orthogonalisation pass, drawing
/// candidate coordinates from `draw`.
pub(crate) fn orthonormalize(n: usize, m: usize, mut draw: impl FnMut() -> f64) -> Result<Vec<Vec<f64>>, BioHashError> {
    if m == 0 || n == 0 || m > n {
        return Err(BioHashError::InvalidDims { n, m });
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    for index in 0..m {
        let mut accepted = None;
        for _ in 0..=MAX_REDRAWS {
            let mut v: Vec<f64> = (0..n).map(|_| draw()).collect();
            subtract_projections(&mut v, &basis);
            if dot(&v, &v).sqrt() < RANK_TOLERANCE {
                continue;
            }
            subtract_projections(&mut v, &basis);
            let norm = dot(&v, &v).sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            accepted = Some(v);
            break;
        }
        basis.push(accepted.ok_or(BioHashError::RankDeficiency { index })?);
    }
    Ok(basis)
}

fn subtract_projections(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
    }
}

/// Orthonormal projection for `(seed, n, m)`.
pub fn generate_projection(seed: &Seed, n: usize, m: usize) -> Result<Vec<Vec<f64>>, BioHashError> {
    Ok(Projection::generate(seed, n, m)?.vectors)
}

/// BioHashes a FingerCode into an `m`-bit BioCode.
pub fn biohash(fc: &FingerCode, seed: &Seed, m: usize, threshold: f64) -> Result<BioCode, BioHashError> {
    if m > fc.len() {
        return Err(BioHashError::InvalidDims { n: fc.len(), m });
    }
    Projection::generate(seed, fc.len(), m)?.biohash(fc, threshold)
}

/// Concurrent memo of projections keyed by `(seed, n, m)`.
#[derive(Default)]
pub struct ProjectionCache {
    inner: RwLock<HashMap<(Seed, usize, usize), Arc<Projection>>>,
}

impl ProjectionCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, seed: &Seed, n: usize, m: usize) -> Result<Arc<Projection>, BioHashError> {
        if let Some(p) = self.inner.read().unwrap().get(&(*seed, n, m)) {
            return Ok(p.clone());
        }
        let p = Arc::new(Projection::generate(seed, n, m)?);
        Ok(self.inner.write().unwrap().entry((*seed, n, m)).or_insert(p).clone())
    }

    pub fn biohash(&self, fc: &FingerCode, seed: &Seed, m: usize, threshold: f64) -> Result<BioCode, BioHashError> {
        if m > fc.len() {
            return Err(BioHashError::InvalidDims { n: fc.len(), m });
        }
        self.get(seed, fc.len(), m)?.biohash(fc, threshold)
    }

    pub fn len(&self) -> usize {
        self.inner.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Cancelable binary template.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BioCode {
    bits: Vec<bool>,
}

impl BioCode {
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

    pub fn complement(&self) -> Self {
        Self {
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.bits.windows(2).all(|w| w[0] == w[1])
    }

    pub fn to_hex(&self) -> String {
        bits::to_hex(&self.bits).expect("BioCode length must be a multiple of 4")
    }

    pub fn from_hex(s: &str) -> Result<Self, HexError> {
        bits::from_hex(s, None).map(Self::from_bits)
    }
}

impl fmt::Debug for BioCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match bits::to_hex(&self.bits) {
            Ok(h) => write!(f, "BioCode({h})"),
            Err(_) => write!(f, "BioCode({} bits)", self.bits.len()),
        }
    }
}

impl fmt::Display for BioCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for BioCode {
    type Err = HexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_hex(s)
    }
}

impl Serialize for BioCode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for BioCode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

pub fn hamming(a: &BioCode, b: &BioCode) -> Result<usize, BioHashError> {
    if a.len() != b.len() {
        return Err(BioHashError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(bits::hamming(&a.bits, &b.bits))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verification {
    pub accepted: bool,
    /// Normalised Hamming distance.
    pub distance: f64,
}

/// Accepts iff `hamming / m <= threshold`.
pub fn verify(a: &BioCode, b: &BioCode, threshold: f64) -> Result<Verification, BioHashError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(BioHashError::InvalidThreshold(threshold));
    }
    let d = hamming(a, b)?;
    let distance = if a.is_empty() { 0.0 } else { d as f64 / a.len() as f64 };
    Ok(Verification {
        accepted: distance <= threshold,
        distance,
    })
}
