//! Secret lookup: flag, then environment, then an interactive prompt.

use std::io::IsTerminal;

use anyhow::{bail, Context, Result};

use biomark_core::Seed;

pub const SEED_ENV: &str = "BIOMARK_SEED_HEX";
pub const PASSWORD_ENV: &str = "BIOMARK_PASSWORD";

fn lookup(flag: Option<&str>, env: &str, prompt: &str) -> Result<String> {
    if let Some(v) = flag {
        return Ok(v.to_string());
    }
    if let Ok(v) = std::env::var(env) {
        return Ok(v);
    }
    if std::io::stdin().is_terminal() {
        return rpassword::prompt_password(prompt).context("cannot read secret from terminal");
    }
    bail!("missing secret: pass the flag or set ${env}")
}

pub fn seed(flag: Option<&str>) -> Result<Seed> {
    let hex = lookup(flag, SEED_ENV, "seed (64 hex chars): ")?;
    Seed::from_hex(hex.trim()).map_err(|e| anyhow::anyhow!("bad seed: {e}"))
}

pub fn password(flag: Option<&str>) -> Result<Vec<u8>> {
    Ok(lookup(flag, PASSWORD_ENV, "password: ")?.into_bytes())
}
