use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use chrono::{DateTime, Utc};
use serde_json::json;

use biomark_core::attacks::{apply_attack, AttackSpec};
use biomark_core::biohash::biohash;
use biomark_core::eval::{run_evaluation, EvalConfig};
use biomark_core::fingercode::{extract_fingercode, FingerCode, DEFAULT_ORIENTATIONS, DEFAULT_SCALES};
use biomark_core::identifier::default_identifier;
use biomark_core::imaging::{decode_image, load_image, save_image, GrayImage};
use biomark_core::protocol::{
    sale_identifier, Customer, Digest, Protocol, ProtocolConfig, ProtocolError, Provider, SaleLedger,
};
use biomark_core::synth;
use biomark_core::watermark::{decode_mark, extract, EmbedConfig};

use crate::{secrets, Command, Global, Synth};

pub enum Outcome {
    Success,
    Negative,
}

fn emit(value: serde_json::Value) {
    println!("{value}");
}

fn image(path: &Path) -> Result<GrayImage> {
    load_image(path).with_context(|| format!("cannot load image {}", path.display()))
}

fn write_image(img: &GrayImage, path: &Path) -> Result<()> {
    save_image(img, path).with_context(|| format!("cannot write image {}", path.display()))
}

/// A FingerCode file: one CSV row, or a fingerprint image (PGM/PNG).
fn fingercode(path: &Path) -> Result<FingerCode> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    if let Ok(img) = decode_image(&bytes) {
        return extract_fingercode(&img, DEFAULT_SCALES, DEFAULT_ORIENTATIONS)
            .with_context(|| format!("cannot extract a FingerCode from {}", path.display()));
    }
    let text = String::from_utf8(bytes).map_err(|_| anyhow!("{} is neither an image nor CSV", path.display()))?;
    let mut rows = text.lines().filter(|l| !l.trim().is_empty());
    let row = rows.next().ok_or_else(|| anyhow!("{} is empty", path.display()))?;
    if rows.next().is_some() {
        bail!("{} must hold a single FingerCode row", path.display());
    }
    Ok(FingerCode::from_csv_row(row)
        .with_context(|| format!("bad FingerCode in {}", path.display()))?
        .with_source(path.display().to_string()))
}

fn ledger(global: &Global) -> Result<SaleLedger> {
    let path = global.ledger.as_ref().ok_or_else(|| anyhow!("--ledger is required"))?;
    SaleLedger::open(path).with_context(|| format!("cannot open ledger {}", path.display()))
}

fn protocol(global: &Global) -> Protocol {
    Protocol::new(ProtocolConfig {
        embed: EmbedConfig {
            strength: global.strength(),
            radius: None,
        },
        ..ProtocolConfig::default()
    })
}

fn check_threshold(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        bail!("--threshold must be in [0, 1], got {t}");
    }
    Ok(())
}

pub fn run(global: &Global, command: &Command) -> Result<Outcome> {
    match command {
        Command::Fingercode {
            image: path,
            scales,
            orientations,
        } => {
            let fc = extract_fingercode(&image(path)?, *scales, *orientations)?;
            println!("{}", fc.to_csv_row());
        }
        Command::Biohash {
            fingercode: path,
            bits,
            quantization,
        } => {
            let fc = fingercode(path)?;
            let seed = secrets::seed(global.seed_hex.as_deref())?;
            let code = biohash(&fc, &seed, *bits, *quantization)?;
            emit(json!({ "biocode": code.to_hex(), "bits": code.len() }));
        }
        Command::Id { image: path, sale } => {
            let img = image(path)?;
            let id = if *sale {
                sale_identifier(&img)?
            } else {
                default_identifier(&img)?
            };
            println!("{}", id.to_hex());
        }
        Command::Issue {
            image: path,
            provider,
            customer,
            password,
            out,
            issued_at,
        } => {
            let img = image(path)?;
            let provider_fc = fingercode(provider)?;
            let customer_fc = fingercode(customer)?;
            let issued_at = issued_at
                .as_deref()
                .map(|s| {
                    s.parse::<DateTime<Utc>>()
                        .with_context(|| format!("bad --issued-at {s:?}"))
                })
                .transpose()?;
            let master = secrets::seed(global.seed_hex.as_deref())?;
            let password = secrets::password(password.as_deref())?;
            let mut ledger = ledger(global)?;
            let issued = protocol(global).issue(
                &img,
                &Provider {
                    fingercode: &provider_fc,
                    master_seed: &master,
                },
                &Customer {
                    fingercode: &customer_fc,
                    password: &password,
                },
                &mut ledger,
                issued_at,
            )?;
            write_image(&issued.image, out)?;
            let r = &issued.record;
            emit(json!({
                "image_id": r.image_id.to_hex(),
                "k": r.k,
                "otp": hex::encode(issued.otp),
                "owner_biocode": r.owner_biocode.to_hex(),
                "customer_biocode": r.customer_biocode.to_hex(),
                "issued_at": r.issued_at.to_rfc3339(),
                "output": out.display().to_string(),
            }));
        }
        Command::Extract { image: path, pbm } => {
            let mark = extract(&image(path)?)?;
            if let Some(p) = pbm {
                fs::write(p, mark.to_pbm()).with_context(|| format!("cannot write {}", p.display()))?;
            }
            let decoded = decode_mark(&mark);
            let n = decoded.confidence.len() as f64;
            emit(json!({
                "mark": mark.to_hex(),
                "owner_biocode": decoded.payload.owner.to_hex(),
                "customer_biocode": decoded.payload.customer.to_hex(),
                "mean_confidence": decoded.confidence.iter().sum::<f64>() / n,
            }));
        }
        Command::VerifyOwner {
            suspect,
            fingercode: fc,
        } => {
            check_threshold(global.threshold)?;
            let img = image(suspect)?;
            let fc = fingercode(fc)?;
            let master = secrets::seed(global.seed_hex.as_deref())?;
            let ledger = ledger(global)?;
            match protocol(global).verify_ownership(&img, &fc, &master, &ledger, global.threshold) {
                Ok(v) => {
                    emit(serde_json::to_value(&v)?);
                    return Ok(if v.matched { Outcome::Success } else { Outcome::Negative });
                }
                Err(ProtocolError::NoMarkReadable) => {
                    emit(json!({ "matched": false, "k": null, "distance": 1.0, "reason": "no readable mark" }));
                    return Ok(Outcome::Negative);
                }
                Err(e) => return Err(e.into()),
            }
        }
        Command::VerifyUser {
            suspect,
            fingercode: fc,
            password,
            otp,
        } => {
            check_threshold(global.threshold)?;
            let img = image(suspect)?;
            let fc = fingercode(fc)?;
            let otp: Digest = hex::decode(otp.trim())
                .ok()
                .and_then(|b| b.try_into().ok())
                .ok_or_else(|| anyhow!("--otp must be 64 hex chars"))?;
            let password = secrets::password(password.as_deref())?;
            match protocol(global).verify_usage(&img, &fc, &password, &otp, global.threshold) {
                Ok(v) => {
                    emit(serde_json::to_value(v)?);
                    return Ok(if v.matched { Outcome::Success } else { Outcome::Negative });
                }
                Err(ProtocolError::NoMarkReadable) => {
                    emit(json!({ "matched": false, "distance": 1.0, "reason": "no readable mark" }));
                    return Ok(Outcome::Negative);
                }
                Err(e) => return Err(e.into()),
            }
        }
        Command::Attack {
            image: path,
            attacks,
            out,
        } => {
            let specs = attacks
                .iter()
                .map(|s| s.parse::<AttackSpec>().with_context(|| format!("bad --attack {s:?}")))
                .collect::<Result<Vec<_>>>()?;
            let mut img = image(path)?;
            for spec in &specs {
                img = apply_attack(&img, spec)?;
            }
            write_image(&img, out)?;
            emit(json!({
                "attacks": specs.iter().map(ToString::to_string).collect::<Vec<_>>(),
                "output": out.display().to_string(),
            }));
        }
        Command::Evaluate { config, out } => {
            let mut cfg = EvalConfig::load(config)?;
            if let Some(s) = global.strength {
                cfg.strength = s;
                cfg.validate()?;
            }
            let csv = run_evaluation(&cfg)?;
            if let Some(p) = out {
                fs::write(p, &csv).with_context(|| format!("cannot write {}", p.display()))?;
            }
            print!("{csv}");
        }
        Command::LedgerList { image: path } => {
            let ledger = ledger(global)?;
            let records: Vec<_> = match path {
                Some(p) => ledger.for_image(&sale_identifier(&image(p)?)?).into_iter().collect(),
                None => ledger.records().iter().collect(),
            };
            emit(json!({ "count": records.len(), "records": records }));
        }
        Command::Synth(Synth::Carrier { size, seed, out }) => {
            write_image(&synth::carrier(*size, *seed), out)?;
            emit(json!({ "output": out.display().to_string() }));
        }
        Command::Synth(Synth::Fingerprint {
            user,
            sample,
            seed,
            size,
            out,
        }) => {
            write_image(&synth::fingerprint_sample(*user, *sample, *seed, *size), out)?;
            emit(json!({ "output": out.display().to_string() }));
        }
    }
    Ok(Outcome::Success)
}
