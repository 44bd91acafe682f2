//! Python module `biomark`: images, FingerCodes, BioHash, watermarking,
//! the sale protocol, attacks and evaluation.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use biomark_core::attacks::AttackSpec;
use biomark_core::biohash::{self as core_biohash, hamming};
use biomark_core::eval::{self, EvalConfig, ScoreSet};
use biomark_core::fingercode::{extract_fingercode, DEFAULT_ORIENTATIONS, DEFAULT_SCALES};
use biomark_core::identifier::default_identifier;
use biomark_core::imaging::{self, psnr as core_psnr};
use biomark_core::protocol::{self, Digest, ProtocolConfig};
use biomark_core::watermark::{self, EmbedConfig, DEFAULT_STRENGTH};
use biomark_core::{synth, Seed};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn seed_from(text: &str) -> PyResult<Seed> {
    Seed::from_hex(text).map_err(value_err)
}

fn digest_from(text: &str) -> PyResult<Digest> {
    hex::decode(text)
        .ok()
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| PyValueError::new_err("expected 64 hex chars"))
}

/// 8-bit grayscale image, row-major.
#[pyclass(module = "biomark", frozen, skip_from_py_object)]
#[derive(Clone)]
struct GrayImage(imaging::GrayImage);

#[pymethods]
impl GrayImage {
    #[new]
    fn new(width: usize, height: usize, data: &[u8]) -> PyResult<Self> {
        imaging::GrayImage::new(width, height, data.to_vec())
            .map(Self)
            .map_err(value_err)
    }

    /// Loads binary PGM or 8-bit grayscale PNG.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        imaging::load_image(path).map(Self).map_err(value_err)
    }

    /// PNG for `.png`, binary PGM otherwise.
    fn save(&self, path: PathBuf) -> PyResult<()> {
        imaging::save_image(&self.0, path).map_err(value_err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.0.data())
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("GrayImage({}x{})", self.0.width(), self.0.height())
    }
}

#[pyclass(module = "biomark", frozen, skip_from_py_object)]
#[derive(Clone)]
struct FingerCode(biomark_core::FingerCode);

#[pymethods]
impl FingerCode {
    #[new]
    fn new(features: Vec<f64>) -> Self {
        Self(biomark_core::FingerCode::new(features))
    }

    #[staticmethod]
    #[pyo3(signature = (image, scales = DEFAULT_SCALES, orientations = DEFAULT_ORIENTATIONS))]
    fn extract(image: &GrayImage, scales: usize, orientations: usize) -> PyResult<Self> {
        extract_fingercode(&image.0, scales, orientations)
            .map(Self)
            .map_err(value_err)
    }

    #[staticmethod]
    fn from_csv(row: &str) -> PyResult<Self> {
        biomark_core::FingerCode::from_csv_row(row).map(Self).map_err(value_err)
    }

    fn to_csv(&self) -> String {
        self.0.to_csv_row()
    }

    #[getter]
    fn features(&self) -> Vec<f64> {
        self.0.features.clone()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(module = "biomark", frozen, skip_from_py_object)]
#[derive(Clone)]
struct BioCode(biomark_core::BioCode);

#[pymethods]
impl BioCode {
    #[staticmethod]
    fn from_hex(text: &str) -> PyResult<Self> {
        biomark_core::BioCode::from_hex(text).map(Self).map_err(value_err)
    }

    fn hex(&self) -> String {
        self.0.to_hex()
    }

    #[getter]
    fn bits(&self) -> Vec<bool> {
        self.0.bits().to_vec()
    }

    /// Normalised Hamming distance.
    fn distance(&self, other: &Self) -> PyResult<f64> {
        let d = hamming(&self.0, &other.0).map_err(value_err)?;
        Ok(d as f64 / self.0.len() as f64)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("BioCode('{}')", self.0.to_hex())
    }
}

/// BioHash `fc` under a 64-hex-char seed.
#[pyfunction]
#[pyo3(signature = (fc, seed_hex, bits = 256, quantization = 0.0))]
fn biohash(fc: &FingerCode, seed_hex: &str, bits: usize, quantization: f64) -> PyResult<BioCode> {
    core_biohash::biohash(&fc.0, &seed_from(seed_hex)?, bits, quantization)
        .map(BioCode)
        .map_err(value_err)
}

/// 256-bit block identifier as hex.
#[pyfunction]
fn image_identifier(image: &GrayImage) -> PyResult<String> {
    Ok(default_identifier(&image.0).map_err(value_err)?.to_hex())
}

/// Identifier that ignores the mark's anchor pixels, so it survives embedding.
#[pyfunction]
fn sale_identifier(image: &GrayImage) -> PyResult<String> {
    Ok(protocol::sale_identifier(&image.0).map_err(value_err)?.to_hex())
}

/// Embeds a 4096-bit mark given as 1024 hex chars.
#[pyfunction]
#[pyo3(signature = (image, mark_hex, strength = DEFAULT_STRENGTH))]
fn embed(image: &GrayImage, mark_hex: &str, strength: f64) -> PyResult<GrayImage> {
    let mark = watermark::Mark::from_hex(mark_hex).map_err(value_err)?;
    watermark::embed(&image.0, &mark, strength)
        .map(GrayImage)
        .map_err(value_err)
}

/// Extracts the raw mark as 1024 hex chars.
#[pyfunction]
fn extract(image: &GrayImage) -> PyResult<String> {
    Ok(watermark::extract(&image.0).map_err(value_err)?.to_hex())
}

/// Applies an attack such as `"jpeg:q=80"` or `"crop:f=0.75"`.
#[pyfunction]
fn apply_attack(image: &GrayImage, spec: &str) -> PyResult<GrayImage> {
    let spec: AttackSpec = spec.parse().map_err(value_err)?;
    biomark_core::apply_attack(&image.0, &spec)
        .map(GrayImage)
        .map_err(value_err)
}

#[pyfunction]
fn psnr(a: &GrayImage, b: &GrayImage) -> f64 {
    core_psnr(&a.0, &b.0)
}

/// Returns `(eer, threshold)`.
#[pyfunction]
fn compute_eer(genuine: Vec<f64>, impostor: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = eval::compute_eer(&ScoreSet { genuine, impostor }).map_err(value_err)?;
    Ok((r.eer, r.threshold))
}

/// Runs a TOML evaluation config and returns the CSV report.
#[pyfunction]
fn evaluate(config_path: PathBuf) -> PyResult<String> {
    let cfg = EvalConfig::load(config_path).map_err(value_err)?;
    eval::run_evaluation(&cfg).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (size = 512, seed = 0))]
fn synth_carrier(size: usize, seed: u64) -> GrayImage {
    GrayImage(synth::carrier(size, seed))
}

#[pyfunction]
#[pyo3(signature = (user, sample = 0, seed = 0, size = 256))]
fn synth_fingerprint(user: u64, sample: u64, seed: u64, size: usize) -> GrayImage {
    GrayImage(synth::fingerprint_sample(user, sample, seed, size))
}

/// Sale ledger, in memory or backed by a JSON-lines file.
#[pyclass(module = "biomark")]
struct Ledger(protocol::SaleLedger);

#[pymethods]
impl Ledger {
    #[new]
    #[pyo3(signature = (path = None))]
    fn new(path: Option<PathBuf>) -> PyResult<Self> {
        match path {
            Some(p) => protocol::SaleLedger::open(p).map(Self).map_err(value_err),
            None => Ok(Self(protocol::SaleLedger::in_memory())),
        }
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// Records as `(image_id, k, owner_hex, customer_hex, issued_at)`.
    fn records(&self) -> Vec<(String, u32, String, String, String)> {
        self.0
            .records()
            .iter()
            .map(|r| {
                (
                    r.image_id.to_hex(),
                    r.k,
                    r.owner_biocode.to_hex(),
                    r.customer_biocode.to_hex(),
                    r.issued_at.to_rfc3339(),
                )
            })
            .collect()
    }
}

/// Sale protocol with a shared projection cache.
#[pyclass(module = "biomark", frozen)]
struct Protocol(protocol::Protocol);

#[pymethods]
impl Protocol {
    #[new]
    #[pyo3(signature = (strength = DEFAULT_STRENGTH))]
    fn new(strength: f64) -> Self {
        Self(protocol::Protocol::new(ProtocolConfig {
            embed: EmbedConfig { strength, radius: None },
            ..ProtocolConfig::default()
        }))
    }

    /// Returns `(marked_image, info)` where info holds image_id, k, otp and both codes.
    #[allow(clippy::too_many_arguments)]
    fn issue<'py>(
        &self,
        py: Python<'py>,
        image: &GrayImage,
        provider_fc: &FingerCode,
        master_seed_hex: &str,
        customer_fc: &FingerCode,
        password: &str,
        ledger: &mut Ledger,
    ) -> PyResult<(GrayImage, Bound<'py, PyDict>)> {
        let master = seed_from(master_seed_hex)?;
        let issued = self
            .0
            .issue(
                &image.0,
                &protocol::Provider {
                    fingercode: &provider_fc.0,
                    master_seed: &master,
                },
                &protocol::Customer {
                    fingercode: &customer_fc.0,
                    password: password.as_bytes(),
                },
                &mut ledger.0,
                None,
            )
            .map_err(value_err)?;
        let info = PyDict::new(py);
        info.set_item("image_id", issued.record.image_id.to_hex())?;
        info.set_item("k", issued.record.k)?;
        info.set_item("otp", hex::encode(issued.otp))?;
        info.set_item("owner_biocode", issued.record.owner_biocode.to_hex())?;
        info.set_item("customer_biocode", issued.record.customer_biocode.to_hex())?;
        Ok((GrayImage(issued.image), info))
    }

    /// Returns a dict with matched, k, distance, image_id and identifier_hit.
    #[pyo3(signature = (suspect, owner_fc, master_seed_hex, ledger, threshold = protocol::DEFAULT_THRESHOLD))]
    fn verify_ownership<'py>(
        &self,
        py: Python<'py>,
        suspect: &GrayImage,
        owner_fc: &FingerCode,
        master_seed_hex: &str,
        ledger: &Ledger,
        threshold: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let v = self
            .0
            .verify_ownership(
                &suspect.0,
                &owner_fc.0,
                &seed_from(master_seed_hex)?,
                &ledger.0,
                threshold,
            )
            .map_err(value_err)?;
        let out = PyDict::new(py);
        out.set_item("matched", v.matched)?;
        out.set_item("k", v.k)?;
        out.set_item("distance", v.distance)?;
        out.set_item("image_id", v.image_id)?;
        out.set_item("identifier_hit", v.identifier_hit)?;
        Ok(out)
    }

    /// Returns `(matched, distance)`.
    #[pyo3(signature = (suspect, customer_fc, password, otp_hex, threshold = protocol::DEFAULT_THRESHOLD))]
    fn verify_usage(
        &self,
        suspect: &GrayImage,
        customer_fc: &FingerCode,
        password: &str,
        otp_hex: &str,
        threshold: f64,
    ) -> PyResult<(bool, f64)> {
        let v = self
            .0
            .verify_usage(
                &suspect.0,
                &customer_fc.0,
                password.as_bytes(),
                &digest_from(otp_hex)?,
                threshold,
            )
            .map_err(value_err)?;
        Ok((v.matched, v.distance))
    }
}

#[pymodule]
fn biomark(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<GrayImage>()?;
    m.add_class::<FingerCode>()?;
    m.add_class::<BioCode>()?;
    m.add_class::<Ledger>()?;
    m.add_class::<Protocol>()?;
    m.add_function(wrap_pyfunction!(biohash, m)?)?;
    m.add_function(wrap_pyfunction!(image_identifier, m)?)?;
    m.add_function(wrap_pyfunction!(sale_identifier, m)?)?;
    m.add_function(wrap_pyfunction!(embed, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(apply_attack, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(compute_eer, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(synth_carrier, m)?)?;
    m.add_function(wrap_pyfunction!(synth_fingerprint, m)?)?;
    m.add("DEFAULT_STRENGTH", DEFAULT_STRENGTH)?;
    m.add("DEFAULT_THRESHOLD", protocol::DEFAULT_THRESHOLD)?;
    Ok(())
}
