//! Append-only sale ledger stored as JSON lines.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biohash::BioCode;
use crate::identifier::ImageId;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("ledger I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("ledger line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("sale counter for {image_id} must be {expected}, got {got}")]
    Sequence { image_id: String, expected: u32, got: u32 },
}

/// One issued sale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaleRecord {
    pub image_id: ImageId,
    pub k: u32,
    pub owner_biocode: BioCode,
    pub customer_biocode: BioCode,
    pub issued_at: DateTime<Utc>,
}

#[derive(Debug, Default)]
pub struct SaleLedger {
    path: Option<PathBuf>,
    records: Vec<SaleRecord>,
}

impl SaleLedger {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens a file-backed ledger; a missing file is an empty ledger.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LedgerError> {
        let path = path.as_ref().to_path_buf();
        let records = if path.exists() {
            read_records(&File::open(&path)?)?
        } else {
            Vec::new()
        };
        Ok(Self {
            path: Some(path),
            records,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn records(&self) -> &[SaleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records for an image, by ascending `k`.
    pub fn for_image(&self, id: &ImageId) -> Vec<&SaleRecord> {
        let mut out: Vec<_> = self.records.iter().filter(|r| &r.image_id == id).collect();
        out.sort_by_key(|r| r.k);
        out
    }

    pub fn next_k(&self, id: &ImageId) -> u32 {
        next_k(&self.records, id)
    }

    /// Appends a record whose `k` continues the image's sequence.
    ///
    /// File-backed ledgers take an exclusive lock, reload the file and only
    /// then append, so a second writer cannot reuse a counter.
    pub fn append(&mut self, record: SaleRecord) -> Result<(), LedgerError> {
        let Some(path) = &self.path else {
            check_sequence(&self.records, &record)?;
            self.records.push(record);
            return Ok(());
        };
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        file.lock()?;
        let result: Result<Vec<SaleRecord>, LedgerError> = (|| {
            let current = read_records(&file)?;
            check_sequence(&current, &record)?;
            let mut line = serde_json::to_string(&record).expect("records serialize");
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.sync_data()?;
            Ok(current)
        })();
        file.unlock()?;
        let mut current = result?;
        current.push(record);
        self.records = current;
        Ok(())
    }
}

fn next_k(records: &[SaleRecord], id: &ImageId) -> u32 {
    records
        .iter()
        .filter(|r| &r.image_id == id)
        .map(|r| r.k)
        .max()
        .unwrap_or(0)
        + 1
}

fn check_sequence(records: &[SaleRecord], record: &SaleRecord) -> Result<(), LedgerError> {
    let expected = next_k(records, &record.image_id);
    if record.k != expected {
        return Err(LedgerError::Sequence {
            image_id: record.image_id.to_hex(),
            expected,
            got: record.k,
        });
    }
    Ok(())
}

fn read_records(file: &File) -> Result<Vec<SaleRecord>, LedgerError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| LedgerError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}
