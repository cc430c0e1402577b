//! CSV tables, the alpha file format and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use allowance_core::PriceFunctional;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Floats are written with 17 significant digits so that they read back
/// bit for bit.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => fmt_f64(*v),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// Comma-separated, header first, LF line endings.
pub fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<Cell>>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for row in rows {
        w.write_record(row.iter().map(Cell::render)).expect("writing to memory");
    }
    w.into_inner().expect("writing to memory")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Collects files written into one output directory for the manifest.
pub struct ArtifactWriter {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(ArtifactWriter { dir: dir.to_path_buf(), artifacts: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.artifacts.push(Artifact { name: name.to_string(), bytes: bytes.len(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    /// Writes `manifest.json` and returns the recorded artifacts.
    pub fn finish(self, info: &RunInfo) -> std::io::Result<Vec<Artifact>> {
        let manifest = Manifest { info, artifacts: &self.artifacts };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        fs::write(self.dir.join("manifest.json"), text)?;
        Ok(self.artifacts)
    }
}

/// Inputs recorded next to the artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct RunInfo {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// The configuration as parsed, re-serialized.
    pub config: String,
    pub seed: u64,
    pub workers: usize,
    pub wall_clock_seconds: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    #[serde(flatten)]
    info: &'a RunInfo,
    artifacts: &'a [Artifact],
}

/// `t, g, alpha` rows for each functional tabulated on `states`, scaled by
/// `scale`.
pub fn alpha_rows(alphas: &[PriceFunctional], states: &[f64], scale: f64) -> Vec<Vec<Cell>> {
    let mut rows = Vec::with_capacity(alphas.len() * states.len());
    for (t, f) in alphas.iter().enumerate() {
        for &g in states {
            rows.push(vec![t.into(), g.into(), (scale * f.evaluate(g)).into()]);
        }
    }
    rows
}

#[derive(Debug, thiserror::Error)]
pub enum AlphaFileError {
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Content { line: u64, message: String },
    #[error("{0}")]
    Shape(String),
}

/// Reads an alpha CSV (`t, g, alpha`, prices in output units) back into
/// functionals normalized by `scale`. The last date is always the digital
/// terminal price.
pub fn read_alphas(path: &Path, scale: f64) -> Result<Vec<PriceFunctional>, AlphaFileError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "g", "alpha"] {
        return Err(AlphaFileError::Shape(format!("expected header t,g,alpha, got {}", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut curves: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| AlphaFileError::Content { line, message };
        let t: usize = record[0].trim().parse().map_err(|_| bad(format!("bad date {:?}", &record[0])))?;
        let g: f64 = record[1].trim().parse().map_err(|_| bad(format!("bad state {:?}", &record[1])))?;
        let a: f64 = record[2].trim().parse().map_err(|_| bad(format!("bad price {:?}", &record[2])))?;
        let entry = curves.entry(t).or_default();
        entry.0.push(g);
        entry.1.push(a / scale);
    }
    let horizon = curves.keys().next_back().copied().ok_or_else(|| AlphaFileError::Shape("no rows".into()))?;
    if horizon == 0 || curves.len() != horizon + 1 {
        return Err(AlphaFileError::Shape(format!("dates must run 0..={horizon} without gaps")));
    }
    let mut out = Vec::with_capacity(horizon + 1);
    for (t, (g, a)) in curves {
        if t == horizon {
            out.push(PriceFunctional::digital(1.0));
        } else {
            out.push(PriceFunctional::from_values(g, a, 1.0).map_err(|e| AlphaFileError::Shape(format!("t = {t}: {e}")))?);
        }
    }
    Ok(out)
}
