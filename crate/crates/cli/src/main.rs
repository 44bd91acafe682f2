//! `biomark`: every pipeline stage as a subcommand.
//!
//! Exit codes: 0 success, 1 verification negative, 2 usage or input error.
//! Results go to stdout as JSON (one object per line) or CSV; diagnostics
//! go to stderr.

mod commands;
mod secrets;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use biomark_core::protocol::DEFAULT_THRESHOLD;
use biomark_core::watermark::DEFAULT_STRENGTH;

#[derive(Parser)]
#[command(
    name = "biomark",
    version,
    about = "Biometric image watermarking for ownership and right of use"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Global {
    /// Maximum normalised Hamming distance accepted by verification, in [0, 1]
    #[arg(long, global = true, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Embedding strength in grey levels
    #[arg(long, global = true)]
    pub strength: Option<f64>,
    /// 32-byte seed as 64 hex chars (master seed for issue/verify-owner).
    /// Falls back to $BIOMARK_SEED_HEX, then a prompt
    #[arg(long, global = true, value_name = "HEX")]
    pub seed_hex: Option<String>,
    /// Sale ledger (JSON lines)
    #[arg(long, global = true, value_name = "PATH")]
    pub ledger: Option<PathBuf>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Extract a FingerCode from a fingerprint image; prints one CSV row
    Fingercode {
        image: PathBuf,
        #[arg(long, default_value_t = 16)]
        scales: usize,
        #[arg(long, default_value_t = 16)]
        orientations: usize,
    },
    /// BioHash a FingerCode under --seed-hex; prints {"biocode": hex, "bits": m}
    Biohash {
        /// FingerCode CSV row, or a fingerprint image to extract one from
        #[arg(long, value_name = "PATH")]
        fingercode: PathBuf,
        /// Number of output bits
        #[arg(long, default_value_t = 256)]
        bits: usize,
        /// Quantisation threshold on the projections
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        quantization: f64,
    },
    /// Print the 256-bit image identifier as 64 hex chars
    Id {
        image: PathBuf,
        /// Print the sale identifier (anchor pixels excluded) instead
        #[arg(long)]
        sale: bool,
    },
    /// Issue the next sale of an image: embed owner and customer codes, append to the ledger
    Issue {
        image: PathBuf,
        /// Provider FingerCode (CSV row or fingerprint image)
        #[arg(long, value_name = "PATH")]
        provider: PathBuf,
        /// Customer FingerCode (CSV row or fingerprint image)
        #[arg(long, value_name = "PATH")]
        customer: PathBuf,
        /// Customer password; falls back to $BIOMARK_PASSWORD, then a prompt
        #[arg(long)]
        password: Option<String>,
        /// Where to write the marked image (.png for PNG, PGM otherwise)
        #[arg(long, short, value_name = "PATH")]
        out: PathBuf,
        /// Sale timestamp (RFC 3339); defaults to now
        #[arg(long, value_name = "TIME")]
        issued_at: Option<String>,
    },
    /// Extract the mark and its majority-decoded payload
    Extract {
        image: PathBuf,
        /// Also write the raw 64x64 mark as a PBM bitmap
        #[arg(long, value_name = "PATH")]
        pbm: Option<PathBuf>,
    },
    /// Check the owner half of a suspect image against the ledger
    VerifyOwner {
        suspect: PathBuf,
        /// Provider FingerCode (CSV row or fingerprint image)
        #[arg(long, value_name = "PATH")]
        fingercode: PathBuf,
    },
    /// Check the customer half of a suspect image
    VerifyUser {
        suspect: PathBuf,
        /// Customer FingerCode (CSV row or fingerprint image)
        #[arg(long, value_name = "PATH")]
        fingercode: PathBuf,
        /// Customer password; falls back to $BIOMARK_PASSWORD, then a prompt
        #[arg(long)]
        password: Option<String>,
        /// One-time value of the sale, 64 hex chars (printed by issue)
        #[arg(long, value_name = "HEX")]
        otp: String,
    },
    /// Apply one or more attacks in order, e.g. --attack jpeg:q=80 --attack crop:f=0.75
    Attack {
        image: PathBuf,
        #[arg(long = "attack", value_name = "SPEC", required = true)]
        attacks: Vec<String>,
        #[arg(long, short, value_name = "PATH")]
        out: PathBuf,
    },
    /// Run an evaluation config (TOML); prints the CSV report
    Evaluate {
        config: PathBuf,
        /// Also write the report here
        #[arg(long, short, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// List ledger records as JSON
    LedgerList {
        /// Only records whose sale identifier matches this image
        #[arg(long, value_name = "PATH")]
        image: Option<PathBuf>,
    },
    /// Write deterministic synthetic test data
    #[command(subcommand)]
    Synth(Synth),
}

#[derive(Subcommand)]
pub enum Synth {
    /// Textured carrier image
    Carrier {
        #[arg(long, default_value_t = 512)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short, value_name = "PATH")]
        out: PathBuf,
    },
    /// Fingerprint impression `sample` of finger `user`
    Fingerprint {
        #[arg(long)]
        user: u64,
        #[arg(long, default_value_t = 0)]
        sample: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long, short, value_name = "PATH")]
        out: PathBuf,
    },
}

impl Global {
    pub fn strength(&self) -> f64 {
        self.strength.unwrap_or(DEFAULT_STRENGTH)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli.global, &cli.command) {
        Ok(commands::Outcome::Success) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Negative) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
