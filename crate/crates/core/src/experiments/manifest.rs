//! Output files of a run and their exact regeneration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::study::Cell;
use super::{run_scenario, PolicyKind, ReplicateFailure, ScenarioResult};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the manifest directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub software_version: String,
    /// Study name, or `run` for a single scenario.
    pub label: String,
    pub axes: Vec<String>,
    pub cells: Vec<Cell>,
    pub files: Vec<OutputFile>,
    pub failures: Vec<ReplicateFailure>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

const SUMMARY_COLUMNS: [&str; 11] = [
    "policy",
    "baseline",
    "replicates",
    "rel_recovery_pp",
    "rel_grade_pp",
    "rel_reward_p20",
    "rel_reward_p50",
    "rel_reward_p80",
    "vs_mpc_p20",
    "vs_mpc_p50",
    "vs_mpc_p80",
];

fn summary_rows(cell: &Cell, res: &ScenarioResult, w: &mut csv::Writer<Vec<u8>>) -> Result<()> {
    if res.episodes.is_empty() {
        return Ok(());
    }
    let s = res.summary()?;
    let has_mpc = res.config.policies.contains(&PolicyKind::Mpc);
    for (kind, p) in res.config.policies.iter().zip(&s.policies) {
        let mut row = cell.labels.clone();
        row.extend([
            p.policy.clone(),
            s.baseline.clone(),
            s.replicates.to_string(),
            p.relative_recovery.to_string(),
            p.relative_grade.to_string(),
            p.relative_reward.p20.to_string(),
            p.relative_reward.p50.to_string(),
            p.relative_reward.p80.to_string(),
        ]);
        if has_mpc {
            let vs = super::Percentiles::of(&res.relative(*kind, PolicyKind::Mpc)?)?;
            row.extend([vs.p20.to_string(), vs.p50.to_string(), vs.p80.to_string()]);
        } else {
            row.extend([String::new(), String::new(), String::new()]);
        }
        w.write_record(&row)?;
    }
    Ok(())
}

fn write_file(dir: &Path, rel: &str, bytes: &[u8], files: &mut Vec<OutputFile>) -> Result<()> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(&path, bytes)?;
    files.push(OutputFile { path: rel.into(), sha256: sha256_hex(bytes) });
    Ok(())
}

/// Run `cells` in order, writing one episode CSV per cell, a summary table
/// `<label>.csv` and the manifest into `out_dir`.
pub fn execute(label: &str, axes: Vec<String>, cells: Vec<Cell>, out_dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(out_dir)?;
    let mut summary = csv::Writer::from_writer(Vec::new());
    let mut header = axes.clone();
    header.extend(SUMMARY_COLUMNS.iter().map(|s| s.to_string()));
    summary.write_record(&header)?;
    let mut files = Vec::new();
    let mut failures = Vec::new();
    for cell in &cells {
        let res = run_scenario(&cell.config)?;
        write_file(out_dir, &format!("episodes/{}.csv", cell.name), res.episodes_csv()?.as_bytes(), &mut files)?;
        summary_rows(cell, &res, &mut summary)?;
        failures.extend(res.failures);
    }
    let bytes = summary.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_file(out_dir, &format!("{label}.csv"), &bytes, &mut files)?;
    let manifest = Manifest {
        software_version: env!("CARGO_PKG_VERSION").into(),
        label: label.into(),
        axes,
        cells,
        files,
        failures,
    };
    fs::write(out_dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub out_dir: PathBuf,
    pub matched: Vec<String>,
    pub mismatched: Vec<String>,
    pub replayed: Manifest,
}

impl ReplayReport {
    pub fn ok(&self) -> bool {
        self.mismatched.is_empty() && self.replayed.ok()
    }
}

/// Re-run every cell of the manifest at `path` into `out_dir` and compare
/// each output with the recorded digest.
pub fn replay(path: &Path, out_dir: &Path) -> Result<ReplayReport> {
    let original = Manifest::load(path)?;
    let replayed = execute(&original.label, original.axes.clone(), original.cells.clone(), out_dir)?;
    let mut matched = Vec::new();
    let mut mismatched = Vec::new();
    for f in &original.files {
        match replayed.files.iter().find(|g| g.path == f.path) {
            Some(g) if g.sha256 == f.sha256 => matched.push(f.path.clone()),
            _ => mismatched.push(f.path.clone()),
        }
    }
    Ok(ReplayReport { out_dir: out_dir.to_path_buf(), matched, mismatched, replayed })
}
