//! On-disk formats: the NPSA stack container, raw phase dumps, PGM previews,
//! CSV tables, and the JSON run reports.
//!
//! The stack container is little-endian and carries a trailing CRC32 so
//! corruption is detected at load time:
//!
//! ```text
//! offset 0   magic "NPSA" (4 bytes)
//!        4   format version  u16
//!        6   frame count N   u16
//!        8   height          u32
//!        12  width           u32
//!        16  steps-present   u8
//!        17  [N x f64 steps, when present]
//!        ..  N frames of height*width f64, row-major
//!        end CRC32 of all preceding bytes, u32
//! ```
//!
//! All writes go through a temp-file-and-rename so partially written files
//! never carry a valid name.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::{Image, PhaseMap};
use crate::matrix::SquareMatrix;
use crate::spectral::FtfReport;
use crate::synth::{FringeStack, PhaseSteps, Provenance};

pub const STACK_MAGIC: &[u8; 4] = b"NPSA";
pub const STACK_VERSION: u16 = 1;

/// Current schema version of every JSON document this crate emits.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = temp_path(path);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Serializes a stack into the container layout (including the CRC).
pub fn stack_to_bytes(stack: &FringeStack) -> Result<Vec<u8>> {
    let n = stack.len();
    if n > u16::MAX as usize {
        return Err(Error::invalid("too many frames for the container"));
    }
    let (w, h) = (stack.width(), stack.height());
    if w > u32::MAX as usize || h > u32::MAX as usize {
        return Err(Error::invalid("frame dimensions exceed the container limits"));
    }
    let steps = stack.steps();
    let mut out = Vec::with_capacity(17 + n * (8 + w * h * 8) + 4);
    out.extend_from_slice(STACK_MAGIC);
    out.extend_from_slice(&STACK_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u16).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.push(u8::from(steps.is_some()));
    if let Some(steps) = steps {
        for &t in steps.values() {
            out.extend_from_slice(&t.to_le_bytes());
        }
    }
    for frame in stack.frames() {
        for &v in frame.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Parses the container layout, verifying sizes and the checksum.
pub fn stack_from_bytes(bytes: &[u8]) -> Result<FringeStack> {
    if bytes.len() < 21 {
        return Err(Error::format("file too short for a stack header"));
    }
    if &bytes[0..4] != STACK_MAGIC {
        return Err(Error::format("bad magic, not a stack file"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != STACK_VERSION {
        return Err(Error::format(format!("unsupported stack version {version}")));
    }
    let n = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let has_steps = match bytes[16] {
        0 => false,
        1 => true,
        other => return Err(Error::format(format!("bad steps-present flag {other}"))),
    };

    let steps_len = if has_steps { n * 8 } else { 0 };
    let expected = 17 + steps_len + n * w * h * 8 + 4;
    if bytes.len() != expected {
        return Err(Error::format(format!(
            "declared sizes require {expected} bytes, file has {}",
            bytes.len()
        )));
    }

    let payload = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(Error::format(format!(
            "checksum mismatch: stored {stored:08x}, computed {computed:08x}"
        )));
    }

    let mut offset = 17;
    let steps = if has_steps {
        let mut theta = Vec::with_capacity(n);
        for _ in 0..n {
            theta.push(f64::from_le_bytes(bytes[offset..offset + 8].try_into().unwrap()));
            offset += 8;
        }
        Some(PhaseSteps::new(theta).map_err(|e| Error::format(format!("stored steps invalid: {e}")))?)
    } else {
        None
    };

    let mut frames = Vec::with_capacity(n);
    for _ in 0..n {
        let mut data = Vec::with_capacity(w * h);
        for _ in 0..w * h {
            data.push(f64::from_le_bytes(bytes[offset..offset + 8].try_into().unwrap()));
            offset += 8;
        }
        frames.push(Image::from_vec(w, h, data)?);
    }
    FringeStack::new(frames, steps, Provenance::default())
}

pub fn write_stack(path: &Path, stack: &FringeStack) -> Result<()> {
    atomic_write(path, &stack_to_bytes(stack)?)
}

pub fn read_stack(path: &Path) -> Result<FringeStack> {
    stack_from_bytes(&fs::read(path)?)
}

/// Raw row-major little-endian f64 dump, dimensions carried by the report.
pub fn write_f64_image(path: &Path, image: &Image) -> Result<()> {
    let mut out = Vec::with_capacity(image.len() * 8);
    for &v in image.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(path, &out)
}

pub fn read_f64_image(path: &Path, width: usize, height: usize) -> Result<Image> {
    let bytes = fs::read(path)?;
    if bytes.len() != width * height * 8 {
        return Err(Error::format(format!(
            "expected {} bytes for {width}x{height} f64 image, found {}",
            width * height * 8,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Image::from_vec(width, height, data)
}

/// 8-bit binary PGM preview of a wrapped phase map.
///
/// (-pi, pi] maps linearly onto 0..=255; invalid pixels render as 0.
pub fn write_phase_pgm(path: &Path, map: &PhaseMap) -> Result<()> {
    use std::f64::consts::PI;
    let (w, h) = (map.width(), map.height());
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for (i, &v) in map.values().as_slice().iter().enumerate() {
        let byte = if map.valid()[i] {
            (((v + PI) / (2.0 * PI)) * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        };
        out.push(byte);
    }
    atomic_write(path, &out)
}

/// Lissajous scatter as `re,im` rows.
pub fn write_lissajous_csv(path: &Path, points: &[(f64, f64)]) -> Result<()> {
    let mut out = String::from("re,im\n");
    for (re, im) in points {
        out.push_str(&format!("{re},{im}\n"));
    }
    atomic_write(path, out.as_bytes())
}

/// Sampled FTF as `omega,re,im,abs` rows.
pub fn write_spectrum_csv(path: &Path, report: &FtfReport) -> Result<()> {
    let mut out = String::from("omega,re,im,abs\n");
    for (w, z) in report.omega.iter().zip(&report.values) {
        out.push_str(&format!("{w},{},{},{}\n", z.re, z.im, z.norm()));
    }
    atomic_write(path, out.as_bytes())
}

/// Covariance matrix as bare comma-separated rows.
pub fn write_covariance_csv(path: &Path, c: &SquareMatrix) -> Result<()> {
    let mut out = String::new();
    for r in 0..c.n() {
        let row: Vec<String> = c.row(r).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// Eigenpairs: one row per pair, `lambda,v0,...,v{N-1}`.
pub fn write_eigen_csv(path: &Path, eigenvalues: &[f64], eigenvectors: &SquareMatrix) -> Result<()> {
    let n = eigenvalues.len();
    let mut out = String::from("lambda");
    for i in 0..n {
        out.push_str(&format!(",v{i}"));
    }
    out.push('\n');
    for j in 0..n {
        out.push_str(&eigenvalues[j].to_string());
        for i in 0..n {
            out.push_str(&format!(",{}", eigenvectors.get(i, j)));
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// SHA-256 of a file, hex-encoded.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Identity of the analyzed input.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
}

/// Phase-error statistics against a named reference.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PhaseErrorReport {
    pub reference: String,
    pub rms: f64,
    pub max_abs: f64,
    pub piston: f64,
    pub conjugated: bool,
}

/// Figures of merit for one coefficient set.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FilterReport {
    pub detuning_ratio: f64,
    pub g_snr: f64,
    pub r_h: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub phase_error: Option<PhaseErrorReport>,
}

/// Oracle (least-squares) row of a comparison report.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OracleReport {
    pub condition: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub phase_error: Option<PhaseErrorReport>,
}

/// Top-level run summary written by the demod/compare commands.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub schema_version: u32,
    pub mode: String,
    pub input: InputDigest,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub steps: Option<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub plain: Option<FilterReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub corrected: Option<FilterReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub oracle: Option<OracleReport>,
}

/// Scalar spectral summary written by the analyze command.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FtfScalars {
    pub schema_version: u32,
    pub mode: String,
    pub n_steps: usize,
    pub h_minus1: [f64; 2],
    pub h_zero: [f64; 2],
    pub h_plus1: [f64; 2],
    pub detuning_ratio: f64,
    pub g_snr: f64,
    pub r_h: f64,
    pub k_max: u32,
    pub r_h_tail_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rho: Option<f64>,
}

impl FtfScalars {
    pub fn from_report(report: &FtfReport, mode: &str, n_steps: usize, rho: Option<f64>) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            mode: mode.to_string(),
            n_steps,
            h_minus1: [report.h_minus1.re, report.h_minus1.im],
            h_zero: [report.h_zero.re, report.h_zero.im],
            h_plus1: [report.h_plus1.re, report.h_plus1.im],
            detuning_ratio: report.detuning_ratio,
            g_snr: report.g_snr,
            r_h: report.r_h,
            k_max: report.k_max,
            r_h_tail_bound: report.r_h_tail_bound,
            rho,
        }
    }
}

/// JSON export of a PCA basis: covariance entries plus eigenpairs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PcaExport {
    pub schema_version: u32,
    pub n: usize,
    /// Row-major N x N covariance.
    pub covariance: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// `eigenvectors[j]` is the eigenvector paired with `eigenvalues[j]`.
    pub eigenvectors: Vec<Vec<f64>>,
}

impl PcaExport {
    pub fn new(covariance: &SquareMatrix, eigenvalues: &[f64], eigenvectors: &SquareMatrix) -> Self {
        let n = covariance.n();
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            n,
            covariance: (0..n).map(|r| covariance.row(r).to_vec()).collect(),
            eigenvalues: eigenvalues.to_vec(),
            eigenvectors: (0..n).map(|j| eigenvectors.column(j)).collect(),
        }
    }
}

/// Sidecar metadata written next to synthesized stacks; carries provenance
/// and points at the ground-truth phase dump, neither of which belongs in
/// the binary container.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StackMeta {
    pub schema_version: u32,
    pub scene: String,
    pub width: usize,
    pub height: usize,
    pub steps: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub noise_seed: Option<u64>,
    pub noise_eta: f64,
    pub harmonics: Vec<(u32, f64)>,
    pub quantize_bits: Option<u8>,
    /// Relative path of the raw f64 ground-truth phase image.
    pub truth_path: String,
    pub stack_sha256: String,
    pub truth_sha256: String,
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what} contains a non-finite value")));
    }
    Ok(())
}

impl RunReport {
    /// Every numeric field must be finite before the report may be written.
    pub fn validate(&self) -> Result<()> {
        check_finite(&self.eigenvalues, "eigenvalues")?;
        if let Some(steps) = &self.steps {
            check_finite(steps, "steps")?;
        }
        if let Some(rho) = self.rho {
            check_finite(&[rho], "rho")?;
        }
        for (name, row) in [("plain", &self.plain), ("corrected", &self.corrected)] {
            if let Some(r) = row {
                check_finite(&[r.detuning_ratio, r.g_snr, r.r_h], name)?;
                if let Some(pe) = &r.phase_error {
                    check_finite(&[pe.rms, pe.max_abs, pe.piston], name)?;
                }
            }
        }
        if let Some(o) = &self.oracle {
            check_finite(&[o.condition], "oracle")?;
            if let Some(pe) = &o.phase_error {
                check_finite(&[pe.rms, pe.max_abs, pe.piston], "oracle")?;
            }
        }
        Ok(())
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::format(format!("serialize: {e}")))?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(format!("parse {}: {e}", path.display())))
}

/// Flat `key,value` CSV rendering of any JSON-serializable report.
pub fn write_report_csv<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_value(value).map_err(|e| Error::format(format!("serialize: {e}")))?;
    let mut rows = Vec::new();
    flatten_json("", &json, &mut rows);
    let mut out = String::from("key,value\n");
    for (k, v) in rows {
        out.push_str(&format!("{k},{v}\n"));
    }
    atomic_write(path, out.as_bytes())
}

fn flatten_json(prefix: &str, value: &serde_json::Value, out: &mut Vec<(String, String)>) {
    match value {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_json(&key, v, out);
            }
        }
        serde_json::Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten_json(&format!("{prefix}[{i}]"), v, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}
