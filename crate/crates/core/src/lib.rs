//! Biometric watermarking of grayscale images for proof of ownership and
//! right of use.
//!
//! Pipeline: [`fingercode`] turns a fingerprint into a real feature vector,
//! [`biohash`] binarises it under a seed, [`protocol`] derives per-sale owner
//! and customer codes bound to the image [`identifier`], and [`watermark`]
//! hides them in the image's local texture. [`attacks`] and [`eval`]
//! measure how much survives.

pub mod attacks;
pub mod biohash;
pub mod bits;
pub mod eval;
pub mod fingercode;
pub mod identifier;
pub mod imaging;
pub mod protocol;
pub mod synth;
pub mod watermark;

pub use attacks::{apply_attack, AttackKind, AttackSpec};
pub use biohash::{biohash, BioCode, Seed};
pub use fingercode::{extract_fingercode, FingerCode};
pub use identifier::{image_identifier, ImageId};
pub use imaging::GrayImage;
pub use protocol::{Protocol, SaleLedger, SaleRecord};
pub use watermark::{embed, extract, Mark, Payload};
