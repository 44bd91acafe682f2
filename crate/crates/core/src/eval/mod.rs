//! Robustness evaluation: watermark each fixture for one customer, attack
//! it, read the mark back and score the customer half against genuine and
//! impostor probes.

mod config;
mod metrics;

use std::fmt::Write as _;
use std::path::Path;

use chrono::DateTime;
use rayon::prelude::*;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub use config::{default_attack_grid, parse_attack, CorpusSource, EvalConfig, SyntheticCorpus};
pub use metrics::{compute_eer, ebr, EerResult, ScoreSet};

use crate::attacks::{apply_attack, AttackError, AttackSpec};
use crate::biohash::{hamming, BioCode, BioHashError, ProjectionCache, Seed, DEFAULT_CODE_BITS};
use crate::fingercode::{FilterBank, FingerCode, FingerCodeError, DEFAULT_ORIENTATIONS, DEFAULT_SCALES};
use crate::identifier::DEFAULT_ID_BITS;
use crate::imaging::{load_image, GrayImage, ImagingError};
use crate::protocol::{
    commitment, customer_seed, sale_identifier, Customer, Issued, Protocol, ProtocolConfig, ProtocolError, Provider,
    SaleLedger,
};
use crate::synth;
use crate::watermark::{build_mark, decode_mark, extract_with, EmbedConfig, Mark, Payload, WatermarkError};

pub const CSV_HEADER: &str = "attack_kind,level,mean_EBR,std_EBR,EER,n_genuine,n_impostor,identifier_flip_rate";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("missing fixture: {0}")]
    MissingFixture(String),
    #[error("invalid evaluation config: {0}")]
    Config(String),
    #[error("EER needs non-empty genuine and impostor scores")]
    EmptyScores,
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    FingerCode(#[from] FingerCodeError),
    #[error(transparent)]
    BioHash(#[from] BioHashError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Watermark(#[from] WatermarkError),
    #[error(transparent)]
    Attack(#[from] AttackError),
}

/// Enrolment samples of one person; sample 0 is the reference.
#[derive(Debug, Clone)]
pub struct Person {
    pub label: String,
    pub samples: Vec<FingerCode>,
}

/// Carriers, the provider's reference FingerCode and the customers.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub carriers: Vec<GrayImage>,
    pub provider: FingerCode,
    pub customers: Vec<Person>,
}

impl Corpus {
    pub fn load(source: &CorpusSource, seed: u64) -> Result<Self, EvalError> {
        match source {
            CorpusSource::Synthetic(s) => Self::synthetic(s, seed),
            CorpusSource::Files {
                images,
                fingercodes,
                provider,
            } => Self::from_files(images, fingercodes, provider.as_deref()),
        }
    }

    /// Identity 0 is the provider, identities `1..=users` are customers.
    pub fn synthetic(s: &SyntheticCorpus, seed: u64) -> Result<Self, EvalError> {
        let bank = FilterBank::shared(DEFAULT_SCALES, DEFAULT_ORIENTATIONS)?;
        let carriers = (0..s.carriers)
            .into_par_iter()
            .map(|c| {
                synth::carrier(
                    s.carrier_size,
                    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(c as u64),
                )
            })
            .collect();
        let jobs: Vec<(u64, u64)> = std::iter::once((0, 0))
            .chain((1..=s.users as u64).flat_map(|u| (0..s.samples as u64).map(move |k| (u, k))))
            .collect();
        let codes = jobs
            .par_iter()
            .map(|&(u, k)| {
                let img = synth::fingerprint_sample(u, k, seed, s.fingerprint_size);
                Ok(bank.extract(&img)?.with_source(format!("u{u:03}/s{k}")))
            })
            .collect::<Result<Vec<FingerCode>, EvalError>>()?;
        let mut codes = codes.into_iter();
        let provider = codes.next().expect("provider code");
        let customers = (1..=s.users)
            .map(|u| Person {
                label: format!("u{u:03}"),
                samples: codes.by_ref().take(s.samples).collect(),
            })
            .collect();
        Ok(Self {
            carriers,
            provider,
            customers,
        })
    }

    /// Carriers are the `.pgm`/`.png` files of `images` sorted by name; the
    /// FingerCode CSV has a header line then `user,sample,f0,f1,...` rows.
    pub fn from_files(images: &Path, fingercodes: &Path, provider: Option<&str>) -> Result<Self, EvalError> {
        let entries =
            std::fs::read_dir(images).map_err(|e| EvalError::MissingFixture(format!("{}: {e}", images.display())))?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("png"))
            })
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(EvalError::MissingFixture(format!(
                "no carrier images in {}",
                images.display()
            )));
        }
        let carriers = paths.iter().map(load_image).collect::<Result<Vec<_>, _>>()?;

        let text = std::fs::read_to_string(fingercodes)
            .map_err(|e| EvalError::MissingFixture(format!("{}: {e}", fingercodes.display())))?;
        // user label -> (sample index, code), in order of first appearance
        let mut people: Vec<(String, Vec<(u64, FingerCode)>)> = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |m: &str| EvalError::Config(format!("{} line {}: {m}", fingercodes.display(), i + 1));
            let mut parts = line.splitn(3, ',');
            let (Some(user), Some(sample), Some(rest)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(bad("expected user,sample,features"));
            };
            let sample: u64 = sample
                .trim()
                .parse()
                .map_err(|_| bad("sample index is not an integer"))?;
            let user = user.trim().to_string();
            let fc = FingerCode::from_csv_row(rest)
                .map_err(|e| bad(&e.to_string()))?
                .with_source(format!("{user}/s{sample}"));
            match people.iter_mut().find(|(u, _)| *u == user) {
                Some((_, v)) => v.push((sample, fc)),
                None => people.push((user, vec![(sample, fc)])),
            }
        }
        let mut people: Vec<Person> = people
            .into_iter()
            .map(|(label, mut v)| {
                v.sort_by_key(|(s, _)| *s);
                Person {
                    label,
                    samples: v.into_iter().map(|(_, fc)| fc).collect(),
                }
            })
            .collect();
        let provider_idx = match provider {
            Some(p) => people
                .iter()
                .position(|x| x.label == p)
                .ok_or_else(|| EvalError::MissingFixture(format!("provider {p:?} not in {}", fingercodes.display())))?,
            None => 0,
        };
        if people.len() < 3 {
            return Err(EvalError::Config(
                "corpus needs a provider and at least two customers".into(),
            ));
        }
        let provider = people.remove(provider_idx).samples.swap_remove(0);
        if people.iter().any(|p| p.samples.len() < 2) {
            return Err(EvalError::Config("every customer needs at least two samples".into()));
        }
        Ok(Self {
            carriers,
            provider,
            customers: people,
        })
    }
}

/// One report line.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub attack: AttackSpec,
    pub mean_ebr: f64,
    pub std_ebr: f64,
    pub eer: f64,
    pub n_genuine: usize,
    pub n_impostor: usize,
    pub identifier_flip_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6},{},{},{:.6}",
                r.attack.kind,
                r.attack.level,
                r.mean_ebr,
                r.std_ebr,
                r.eer,
                r.n_genuine,
                r.n_impostor,
                r.identifier_flip_rate
            );
        }
        out
    }
}

/// Watermarked fixture with the probe codes its customer half is scored against.
struct Fixture {
    issued: Issued,
    mark: Mark,
    genuine: Vec<BioCode>,
    impostor: Vec<BioCode>,
}

fn sha256(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

pub fn master_seed(seed: u64) -> Seed {
    Seed(sha256(&[b"eval-master", &seed.to_le_bytes()]))
}

pub fn password(seed: u64, label: &str) -> Vec<u8> {
    format!("pw-{seed}-{label}").into_bytes()
}

/// Issues one sale per customer (carrier `i mod carriers`) on a fresh
/// in-memory ledger and precomputes the probe codes.
fn prepare(
    cfg: &EvalConfig,
    corpus: &Corpus,
    protocol: &Protocol,
    cache: &ProjectionCache,
) -> Result<Vec<Fixture>, EvalError> {
    let master = master_seed(cfg.seed);
    let provider = Provider {
        fingercode: &corpus.provider,
        master_seed: &master,
    };
    let n_users = corpus.customers.len();
    let passwords: Vec<Vec<u8>> = corpus.customers.iter().map(|p| password(cfg.seed, &p.label)).collect();
    let issued_at = DateTime::from_timestamp(0, 0).expect("epoch");

    let mut ledger = SaleLedger::in_memory();
    let mut issued = Vec::with_capacity(n_users);
    for (i, person) in corpus.customers.iter().enumerate() {
        let carrier = &corpus.carriers[i % corpus.carriers.len()];
        let customer = Customer {
            fingercode: &person.samples[0],
            password: &passwords[i],
        };
        issued.push(protocol.issue(carrier, &provider, &customer, &mut ledger, Some(issued_at))?);
    }

    issued
        .into_par_iter()
        .enumerate()
        .map(|(i, issued)| {
            let person = &corpus.customers[i];
            let commit = commitment(&issued.otp, &issued.record.image_id)?;
            let own_seed = customer_seed(&commit, &passwords[i]);
            let genuine = person.samples[1..]
                .iter()
                .map(|fc| cache.biohash(fc, &own_seed, DEFAULT_CODE_BITS, 0.0))
                .collect::<Result<Vec<_>, _>>()?;
            let n_impostor = (person.samples.len() - 1).min(n_users - 1);
            let impostor = (1..=n_impostor)
                .map(|j| {
                    let v = (i + j) % n_users;
                    let other = &corpus.customers[v];
                    let seed = if cfg.stolen_token {
                        own_seed
                    } else {
                        customer_seed(&commit, &passwords[v])
                    };
                    cache.biohash(&other.samples[j % other.samples.len()], &seed, DEFAULT_CODE_BITS, 0.0)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mark = build_mark(&Payload::new(
                issued.record.owner_biocode.clone(),
                issued.record.customer_biocode.clone(),
            )?);
            Ok(Fixture {
                issued,
                mark,
                genuine,
                impostor,
            })
        })
        .collect()
}

struct Cell {
    ebr: f64,
    flip: f64,
    genuine: Vec<f64>,
    impostor: Vec<f64>,
}

fn score(fixture: &Fixture, spec: &AttackSpec, index: usize, radius: Option<usize>) -> Result<Cell, EvalError> {
    let spec = AttackSpec {
        rng_seed: spec.rng_seed.wrapping_add(index as u64),
        ..*spec
    };
    let attacked = apply_attack(&fixture.issued.image, &spec)?;
    let extracted = extract_with(&attacked, radius)?;
    let decoded = decode_mark(&extracted).payload.customer;
    let dist = |probe: &BioCode| hamming(probe, &decoded).map(|d| d as f64 / DEFAULT_CODE_BITS as f64);
    let id = sale_identifier(&attacked)?;
    let flips = crate::bits::hamming(id.bits(), fixture.issued.record.image_id.bits());
    Ok(Cell {
        ebr: ebr(&fixture.mark, &extracted),
        flip: flips as f64 / DEFAULT_ID_BITS as f64,
        genuine: fixture.genuine.iter().map(dist).collect::<Result<_, _>>()?,
        impostor: fixture.impostor.iter().map(dist).collect::<Result<_, _>>()?,
    })
}

/// Runs the grid over an already loaded corpus.
pub fn evaluate_corpus(cfg: &EvalConfig, corpus: &Corpus) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    if corpus.customers.len() < 2 || corpus.carriers.is_empty() {
        return Err(EvalError::Config(
            "corpus needs at least two customers and one carrier".into(),
        ));
    }
    let embed = EmbedConfig {
        strength: cfg.strength,
        radius: None,
    };
    let protocol = Protocol::new(ProtocolConfig {
        embed,
        quantization: 0.0,
    });
    let cache = ProjectionCache::new();
    let fixtures = prepare(cfg, corpus, &protocol, &cache)?;

    let mut rows = Vec::with_capacity(cfg.attacks.len());
    for spec in &cfg.attacks {
        let cells = fixtures
            .par_iter()
            .enumerate()
            .map(|(i, f)| score(f, spec, i, embed.radius))
            .collect::<Result<Vec<_>, _>>()?;
        let n = cells.len() as f64;
        let mean = cells.iter().map(|c| c.ebr).sum::<f64>() / n;
        let var = cells.iter().map(|c| (c.ebr - mean).powi(2)).sum::<f64>() / n;
        let scores = ScoreSet {
            genuine: cells.iter().flat_map(|c| c.genuine.iter().copied()).collect(),
            impostor: cells.iter().flat_map(|c| c.impostor.iter().copied()).collect(),
        };
        rows.push(EvalRow {
            attack: *spec,
            mean_ebr: mean,
            std_ebr: var.sqrt(),
            eer: compute_eer(&scores)?.eer,
            n_genuine: scores.genuine.len(),
            n_impostor: scores.impostor.len(),
            identifier_flip_rate: cells.iter().map(|c| c.flip).sum::<f64>() / n,
        });
    }
    Ok(EvalReport { rows })
}

pub fn evaluate(cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    let corpus = Corpus::load(&cfg.corpus, cfg.seed)?;
    evaluate_corpus(cfg, &corpus)
}

/// Full pipeline; returns the CSV report.
pub fn run_evaluation(cfg: &EvalConfig) -> Result<String, EvalError> {
    Ok(evaluate(cfg)?.to_csv())
}
