//! Bit-string helpers shared by BioCodes, image identifiers and marks.
//!
//! Hex form is MSB-first: bit 0 is the high bit of the first nibble.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HexError {
    #[error("bit length {0} is not a multiple of 4")]
    Unaligned(usize),
    #[error("invalid hex string: {0}")]
    Invalid(String),
    #[error("expected {expected} hex chars, got {actual}")]
    Length { expected: usize, actual: usize },
}

pub fn to_hex(bits: &[bool]) -> Result<String, HexError> {
    if !bits.len().is_multiple_of(4) {
        return Err(HexError::Unaligned(bits.len()));
    }
    const DIGITS: &[u8; 16] = b"0123456789abcdef";
    Ok(bits
        .chunks(4)
        .map(|nib| {
            let v = nib.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
            DIGITS[v] as char
        })
        .collect())
}

pub fn from_hex(s: &str, expected_bits: Option<usize>) -> Result<Vec<bool>, HexError> {
    let s = s.trim();
    if let Some(n) = expected_bits {
        if s.len() * 4 != n {
            return Err(HexError::Length {
                expected: n / 4,
                actual: s.len(),
            });
        }
    }
    let mut bits = Vec::with_capacity(s.len() * 4);
    for c in s.chars() {
        let v = c.to_digit(16).ok_or_else(|| HexError::Invalid(s.to_string()))?;
        for shift in (0..4).rev() {
            bits.push((v >> shift) & 1 == 1);
        }
    }
    Ok(bits)
}

/// Packs bits MSB-first into bytes; the length must be a multiple of 8.
pub fn to_bytes(bits: &[bool]) -> Vec<u8> {
    debug_assert!(bits.len().is_multiple_of(8));
    bits.chunks(8)
        .map(|byte| byte.iter().fold(0u8, |acc, &b| (acc << 1) | b as u8))
        .collect()
}

pub fn from_bytes(bytes: &[u8]) -> Vec<bool> {
    bytes
        .iter()
        .flat_map(|&b| (0..8).rev().map(move |s| (b >> s) & 1 == 1))
        .collect()
}

pub fn hamming(a: &[bool], b: &[bool]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}
