//! Declarative evaluation config (TOML).
//!
//! ```toml
//! seed = 7
//! strength = 8.0          # optional, embedding strength
//! stolen_token = false    # impostors use the genuine user's password
//! attacks = ["identity", "jpeg:q=80", "crop:f=0.75"]
//!
//! [synthetic]             # or [corpus], not both
//! users = 20
//! samples = 8
//! carriers = 20
//! carrier_size = 512
//! fingerprint_size = 256
//!
//! # [corpus]
//! # images = "fixtures/"            # carriers: *.pgm / *.png, sorted by name
//! # fingercodes = "fingercodes.csv" # header, then user,sample,f0,...
//! # provider = "u000"               # defaults to the first user in the file
//! ```
//!
//! Relative paths are resolved against the config file's directory.
//! `identity` in the grid is shorthand for `contrast:a=1`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::EvalError;
use crate::attacks::{AttackKind, AttackSpec};
use crate::watermark::DEFAULT_STRENGTH;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub seed: u64,
    pub strength: f64,
    pub stolen_token: bool,
    pub attacks: Vec<AttackSpec>,
    pub corpus: CorpusSource,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    Files {
        images: PathBuf,
        fingercodes: PathBuf,
        provider: Option<String>,
    },
    Synthetic(SyntheticCorpus),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticCorpus {
    pub users: usize,
    pub samples: usize,
    pub carriers: usize,
    #[serde(default = "default_carrier_size")]
    pub carrier_size: usize,
    #[serde(default = "default_fingerprint_size")]
    pub fingerprint_size: usize,
}

fn default_carrier_size() -> usize {
    512
}

fn default_fingerprint_size() -> usize {
    256
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: u64,
    strength: Option<f64>,
    #[serde(default)]
    stolen_token: bool,
    attacks: Option<Vec<String>>,
    corpus: Option<RawCorpus>,
    synthetic: Option<SyntheticCorpus>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCorpus {
    images: PathBuf,
    fingercodes: PathBuf,
    provider: Option<String>,
}

/// Grid used when the config lists no attacks.
pub fn default_attack_grid() -> Vec<AttackSpec> {
    use AttackKind::*;
    let levels: &[(AttackKind, &[f64])] = &[
        (Contrast, &[1.0, 0.5, 0.75, 1.25, 1.5]),
        (Luminance, &[-32.0, -16.0, 16.0, 32.0]),
        (Crop, &[0.9, 0.75, 0.5]),
        (Tamper, &[0.05, 0.1, 0.25]),
        (GaussianNoise, &[2.0, 5.0, 10.0]),
        (SaltPepper, &[0.01, 0.05]),
        (Jpeg, &[95.0, 90.0, 80.0, 70.0, 50.0]),
    ];
    levels
        .iter()
        .flat_map(|&(kind, ls)| {
            ls.iter()
                .map(move |&l| AttackSpec::new(kind, l).expect("valid default level"))
        })
        .collect()
}

pub fn parse_attack(s: &str) -> Result<AttackSpec, EvalError> {
    if s.trim() == "identity" {
        return Ok(AttackSpec::new(AttackKind::Contrast, 1.0).expect("identity is valid"));
    }
    s.parse().map_err(|e| EvalError::Config(format!("{e}")))
}

impl EvalConfig {
    pub fn synthetic(corpus: SyntheticCorpus, attacks: Vec<AttackSpec>, seed: u64) -> Self {
        Self {
            seed,
            strength: DEFAULT_STRENGTH,
            stolen_token: false,
            attacks,
            corpus: CorpusSource::Synthetic(corpus),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| EvalError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, EvalError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| EvalError::Config(e.to_string()))?;
        let attacks = match raw.attacks {
            Some(list) => list.iter().map(|s| parse_attack(s)).collect::<Result<Vec<_>, _>>()?,
            None => default_attack_grid(),
        };
        let corpus = match (raw.corpus, raw.synthetic) {
            (Some(c), None) => CorpusSource::Files {
                images: base_dir.join(c.images),
                fingercodes: base_dir.join(c.fingercodes),
                provider: c.provider,
            },
            (None, Some(s)) => CorpusSource::Synthetic(s),
            _ => {
                return Err(EvalError::Config(
                    "exactly one of [corpus] or [synthetic] is required".into(),
                ))
            }
        };
        let cfg = Self {
            seed: raw.seed,
            strength: raw.strength.unwrap_or(DEFAULT_STRENGTH),
            stolen_token: raw.stolen_token,
            attacks,
            corpus,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.attacks.is_empty() {
            return Err(EvalError::Config("attack grid is empty".into()));
        }
        if !(self.strength.is_finite() && self.strength > 0.0) {
            return Err(EvalError::Config(format!(
                "strength must be positive, got {}",
                self.strength
            )));
        }
        if let CorpusSource::Synthetic(s) = &self.corpus {
            if s.users < 2 || s.samples < 2 || s.carriers == 0 {
                return Err(EvalError::Config(
                    "synthetic corpus needs >= 2 users, >= 2 samples, >= 1 carrier".into(),
                ));
            }
        }
        Ok(())
    }
}
