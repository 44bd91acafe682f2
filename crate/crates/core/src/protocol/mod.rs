//! Ownership and right-of-use protocol.
//!
//! For the `k`-th sale of an image the provider derives the one-time value
//! `otp_k = H^k(master_seed)` (H = SHA-256). The owner BioCode is the
//! provider's FingerCode BioHashed with `otp_k`; the customer BioCode uses
//! `H(commitment || password)` with `commitment = H(otp_k XOR image_id)`.
//! Both codes are concatenated, repeated into a mark and embedded.

mod ledger;

use chrono::{DateTime, Utc};
use serde::Serialize;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub use ledger::{LedgerError, SaleLedger, SaleRecord};

use crate::biohash::{BioCode, BioHashError, ProjectionCache, Seed, DEFAULT_CODE_BITS};
use crate::fingercode::FingerCode;
use crate::identifier::{masked_identifier, ImageId, DEFAULT_GRID, DEFAULT_ID_BITS};
use crate::imaging::{GrayImage, ImagingError};
use crate::watermark::{
    self, build_mark, decode_mark, DecodedPayload, EmbedConfig, Payload, TileLayout, WatermarkError,
};

pub type Digest = [u8; 32];

pub const DEFAULT_THRESHOLD: f64 = 0.25;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("hash chain index must be at least 1")]
    InvalidK,
    #[error("image identifier must be {DEFAULT_ID_BITS} bits, got {0}")]
    LengthMismatch(usize),
    #[error("no readable mark in the image")]
    NoMarkReadable,
    #[error("threshold {0} is outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("cannot write ledger: {0}")]
    LedgerWrite(#[from] LedgerError),
    #[error(transparent)]
    Watermark(#[from] WatermarkError),
    #[error(transparent)]
    BioHash(#[from] BioHashError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

fn sha256(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// Identifier that binds a sale: the 16x16 block identifier computed
/// without the mark's anchor pixels.
///
/// Embedding only rewrites anchors, so a marked image has the same sale
/// identifier as its original and the customer code can be rebuilt from the
/// suspect alone.
pub fn sale_identifier(img: &GrayImage) -> Result<ImageId, ProtocolError> {
    let anchors = TileLayout::new(img.width(), img.height(), None)?.anchors();
    Ok(masked_identifier(img, DEFAULT_GRID, DEFAULT_GRID, &anchors)?)
}

/// `H^k(seed)`; `k` starts at 1.
pub fn otp(seed: &Seed, k: u32) -> Result<Digest, ProtocolError> {
    if k == 0 {
        return Err(ProtocolError::InvalidK);
    }
    let mut v = sha256(&[seed.as_bytes()]);
    for _ in 1..k {
        v = sha256(&[&v]);
    }
    Ok(v)
}

/// `H(otp XOR image_id)`.
pub fn commitment(otp_value: &Digest, id: &ImageId) -> Result<Seed, ProtocolError> {
    if id.len() != DEFAULT_ID_BITS {
        return Err(ProtocolError::LengthMismatch(id.len()));
    }
    let id_bytes = id.to_bytes();
    let mixed: Vec<u8> = otp_value.iter().zip(&id_bytes).map(|(a, b)| a ^ b).collect();
    Ok(Seed(sha256(&[&mixed])))
}

/// BioHashing seed of the customer: `H(commitment || password)`.
pub fn customer_seed(commitment: &Seed, password: &[u8]) -> Seed {
    Seed(sha256(&[commitment.as_bytes(), password]))
}

pub struct Provider<'a> {
    pub fingercode: &'a FingerCode,
    pub master_seed: &'a Seed,
}

pub struct Customer<'a> {
    pub fingercode: &'a FingerCode,
    pub password: &'a [u8],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    pub embed: EmbedConfig,
    /// BioHashing quantisation threshold `t`.
    pub quantization: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            embed: EmbedConfig::default(),
            quantization: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Issued {
    pub image: GrayImage,
    pub record: SaleRecord,
    /// `otp_k`, handed to whoever must later check the customer half.
    pub otp: Digest,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OwnershipVerdict {
    pub matched: bool,
    pub k: Option<u32>,
    pub distance: f64,
    pub image_id: String,
    /// False when the identifier missed the ledger and every record was scanned.
    pub identifier_hit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UsageVerdict {
    pub matched: bool,
    pub distance: f64,
}

/// Protocol operations sharing a projection cache.
#[derive(Default)]
pub struct Protocol {
    cfg: ProtocolConfig,
    cache: ProjectionCache,
}

impl Protocol {
    pub fn new(cfg: ProtocolConfig) -> Self {
        Self {
            cfg,
            cache: ProjectionCache::new(),
        }
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.cfg
    }

    fn code(&self, fc: &FingerCode, seed: &Seed) -> Result<BioCode, ProtocolError> {
        Ok(self.cache.biohash(fc, seed, DEFAULT_CODE_BITS, self.cfg.quantization)?)
    }

    pub fn owner_code(&self, owner_fc: &FingerCode, master_seed: &Seed, k: u32) -> Result<BioCode, ProtocolError> {
        self.code(owner_fc, &Seed(otp(master_seed, k)?))
    }

    pub fn customer_code(
        &self,
        customer_fc: &FingerCode,
        password: &[u8],
        otp_value: &Digest,
        id: &ImageId,
    ) -> Result<BioCode, ProtocolError> {
        self.code(customer_fc, &customer_seed(&commitment(otp_value, id)?, password))
    }

    /// Issues the next sale of `img` and appends it to the ledger.
    pub fn issue(
        &self,
        img: &GrayImage,
        provider: &Provider<'_>,
        customer: &Customer<'_>,
        ledger: &mut SaleLedger,
        issued_at: Option<DateTime<Utc>>,
    ) -> Result<Issued, ProtocolError> {
        let id = sale_identifier(img)?;
        let k = ledger.next_k(&id);
        let otp_value = otp(provider.master_seed, k)?;
        let owner = self.code(provider.fingercode, &Seed(otp_value))?;
        let cust = self.customer_code(customer.fingercode, customer.password, &otp_value, &id)?;
        let payload = Payload::new(owner, cust)?;
        let image = watermark::embed_with(img, &build_mark(&payload), &self.cfg.embed)?;
        debug_assert_eq!(sale_identifier(&image)?, id);
        let record = SaleRecord {
            image_id: id,
            k,
            owner_biocode: payload.owner,
            customer_biocode: payload.customer,
            issued_at: issued_at.unwrap_or_else(Utc::now),
        };
        ledger.append(record.clone())?;
        Ok(Issued {
            image,
            record,
            otp: otp_value,
        })
    }

    fn read_payload(&self, suspect: &GrayImage) -> Result<DecodedPayload, ProtocolError> {
        let mark = watermark::extract_with(suspect, self.cfg.embed.radius)?;
        Ok(decode_mark(&mark))
    }

    /// Matches the owner half against the owner codes of the image's sales,
    /// or of every sale when the identifier is not in the ledger.
    pub fn verify_ownership(
        &self,
        suspect: &GrayImage,
        owner_fc: &FingerCode,
        master_seed: &Seed,
        ledger: &SaleLedger,
        threshold: f64,
    ) -> Result<OwnershipVerdict, ProtocolError> {
        check_threshold(threshold)?;
        let id = sale_identifier(suspect)?;
        let decoded = self.read_payload(suspect)?.payload.owner;
        if decoded.is_constant() {
            return Err(ProtocolError::NoMarkReadable);
        }
        let hits = ledger.for_image(&id);
        let identifier_hit = !hits.is_empty();
        let mut ks: Vec<u32> = if identifier_hit {
            hits.iter().map(|r| r.k).collect()
        } else {
            ledger.records().iter().map(|r| r.k).collect()
        };
        ks.sort_unstable();
        ks.dedup();

        let mut best: Option<(u32, f64)> = None;
        for k in ks {
            let expected = self.owner_code(owner_fc, master_seed, k)?;
            let d = crate::biohash::verify(&expected, &decoded, threshold)?.distance;
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((k, d));
            }
        }
        let (k, distance) = match best {
            Some((k, d)) => (Some(k), d),
            None => (None, 1.0),
        };
        Ok(OwnershipVerdict {
            matched: distance <= threshold && k.is_some(),
            k,
            distance,
            image_id: id.to_hex(),
            identifier_hit,
        })
    }

    /// Recomputes the customer code from the suspect's identifier and
    /// compares it with the customer half of the mark.
    pub fn verify_usage(
        &self,
        suspect: &GrayImage,
        customer_fc: &FingerCode,
        password: &[u8],
        otp_value: &Digest,
        threshold: f64,
    ) -> Result<UsageVerdict, ProtocolError> {
        check_threshold(threshold)?;
        let id = sale_identifier(suspect)?;
        let decoded = self.read_payload(suspect)?.payload.customer;
        if decoded.is_constant() {
            return Err(ProtocolError::NoMarkReadable);
        }
        let expected = self.customer_code(customer_fc, password, otp_value, &id)?;
        let v = crate::biohash::verify(&expected, &decoded, threshold)?;
        Ok(UsageVerdict {
            matched: v.accepted,
            distance: v.distance,
        })
    }
}

fn check_threshold(t: f64) -> Result<(), ProtocolError> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(ProtocolError::InvalidThreshold(t))
    }
}

pub fn issue(
    img: &GrayImage,
    provider: &Provider<'_>,
    customer: &Customer<'_>,
    ledger: &mut SaleLedger,
    cfg: &ProtocolConfig,
) -> Result<Issued, ProtocolError> {
    Protocol::new(*cfg).issue(img, provider, customer, ledger, None)
}

pub fn verify_ownership(
    suspect: &GrayImage,
    owner_fc: &FingerCode,
    master_seed: &Seed,
    ledger: &SaleLedger,
    threshold: f64,
) -> Result<OwnershipVerdict, ProtocolError> {
    Protocol::default().verify_ownership(suspect, owner_fc, master_seed, ledger, threshold)
}

pub fn verify_usage(
    suspect: &GrayImage,
    customer_fc: &FingerCode,
    password: &[u8],
    otp_value: &Digest,
    threshold: f64,
) -> Result<UsageVerdict, ProtocolError> {
    Protocol::default().verify_usage(suspect, customer_fc, password, otp_value, threshold)
}
