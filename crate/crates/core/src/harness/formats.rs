//! On-disk formats. Column names and JSON field names are frozen in
//! `FORMATS.md`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::HarnessError;
use crate::solver::{TauHit, TrajectoryRecord};

pub const RECORD_COLUMNS: [&str; 5] = ["t", "sup_norm", "l1_mass", "min_value", "bessel_norm"];

/// One row per recorded time; `bessel_norm` is empty when not monitored.
pub fn record_to_csv(record: &TrajectoryRecord) -> String {
    let mut out = RECORD_COLUMNS.join(",");
    out.push('\n');
    for i in 0..record.times.len() {
        let bessel = record
            .bessel_norm
            .as_ref()
            .map(|b| b[i].to_string())
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            record.times[i], record.sup_norm[i], record.l1_mass[i], record.min_value[i], bessel
        ));
    }
    out
}

/// Monitor series read back from a record CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSeries {
    pub times: Vec<f64>,
    pub sup_norm: Vec<f64>,
    pub l1_mass: Vec<f64>,
    pub min_value: Vec<f64>,
    pub bessel_norm: Option<Vec<f64>>,
}

pub fn record_from_csv(text: &str) -> Result<RecordSeries, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty record file")?;
    if header != RECORD_COLUMNS.join(",") {
        return Err(format!("unexpected header {header:?}"));
    }
    let mut s = RecordSeries {
        times: Vec::new(),
        sup_norm: Vec::new(),
        l1_mass: Vec::new(),
        min_value: Vec::new(),
        bessel_norm: None,
    };
    let mut bessel = Vec::new();
    for (i, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != RECORD_COLUMNS.len() {
            return Err(format!("row {} has {} columns", i + 2, cols.len()));
        }
        let num = |c: &str| c.parse::<f64>().map_err(|e| format!("row {}: {e}", i + 2));
        s.times.push(num(cols[0])?);
        s.sup_norm.push(num(cols[1])?);
        s.l1_mass.push(num(cols[2])?);
        s.min_value.push(num(cols[3])?);
        if !cols[4].is_empty() {
            bessel.push(num(cols[4])?);
        }
    }
    if !bessel.is_empty() {
        if bessel.len() != s.times.len() {
            return Err("bessel_norm column is partially empty".into());
        }
        s.bessel_norm = Some(bessel);
    }
    Ok(s)
}

/// Per-path JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub path: usize,
    pub seed: u64,
    pub stream: u64,
    pub fingerprint: String,
    pub steps_planned: usize,
    pub steps_taken: usize,
    pub final_time: f64,
    pub blow_up: bool,
    pub failure: Option<String>,
    pub tau_hits: Vec<TauHit>,
    pub max_violation: f64,
    pub config: ExperimentConfig,
}

/// Sidecar of a probe file: `points.len()` series of `samples` values each,
/// stored series after series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSidecar {
    pub points: Vec<usize>,
    pub spacing: f64,
    pub start_time: f64,
    pub samples: usize,
    pub seed: u64,
    pub stream: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

/// Writes files under a root and remembers their hashes.
pub struct ArtifactWriter {
    root: PathBuf,
    artifacts: Vec<Artifact>,
}

impl ArtifactWriter {
    pub fn new(root: &Path) -> Result<Self, HarnessError> {
        std::fs::create_dir_all(root).map_err(|e| HarnessError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, relative: &str, bytes: &[u8]) -> Result<(), HarnessError> {
        let path = self.root.join(relative);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| HarnessError::io(&path, e))?;
        self.artifacts.push(Artifact {
            path: relative.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn finish(self) -> Vec<Artifact> {
        self.artifacts
    }
}

/// Files under `root` (relative, sorted), excluding `exclude`; entries
/// ending in `/` exclude a whole directory.
pub fn list_files(root: &Path, exclude: &[&str]) -> Result<Vec<String>, HarnessError> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<String>) -> std::io::Result<()> {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(&path, root, out)?;
            } else {
                let rel = path.strip_prefix(root).expect("under root");
                out.push(rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, root, &mut out).map_err(|e| HarnessError::io(root, e))?;
    out.retain(|p| {
        !exclude
            .iter()
            .any(|e| if e.ends_with('/') { p.starts_with(e) } else { p == e })
    });
    out.sort();
    Ok(out)
}

/// Problems with `artifacts` against the files under `root`: missing or
/// altered files, and files on disk that are not listed.
pub fn verify_artifacts(root: &Path, artifacts: &[Artifact], exclude: &[&str]) -> Result<Vec<String>, HarnessError> {
    let mut problems = Vec::new();
    for a in artifacts {
        let path = root.join(&a.path);
        match std::fs::read(&path) {
            Ok(bytes) if sha256_hex(&bytes) == a.sha256 => {}
            Ok(_) => problems.push(format!("{}: hash mismatch", a.path)),
            Err(e) => problems.push(format!("{}: {e}", a.path)),
        }
    }
    for f in list_files(root, exclude)? {
        if !artifacts.iter().any(|a| a.path == f) {
            problems.push(format!("{f}: not listed"));
        }
    }
    Ok(problems)
}
