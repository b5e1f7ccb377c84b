//! Hyperparameter sweep over (σ, qₙ): one trajectory file per grid point and
//! a manifest with SHA-256 checksums.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embedding::SubPromptSet;
use crate::interpolation::{trajectory, BlendMode, TrajectoryError};
use crate::io::{encode_trajectory, write_atomic, IoError};
use crate::schedule::build_schedule;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// σ values used for candidate generation by default.
pub const DEFAULT_SIGMA_GRID: [f64; 2] = [3.0, 5.0];
/// qₙ values used for candidate generation by default.
pub const DEFAULT_QN_GRID: [f64; 4] = [4.0, 12.0, 20.0, 28.0];

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("{0} grid is empty")]
    EmptyGrid(&'static str),
    #[error("could not build worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Schedule,
    Blend,
    Io,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub sigma: f64,
    pub q_n: f64,
    /// File name relative to the output directory.
    pub path: String,
    pub sha256: Option<String>,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failure: Option<FailureKind>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub version: u32,
    pub embeddings_sha256: Option<String>,
    pub total_steps: usize,
    pub mode: BlendMode,
    pub points: Vec<SweepPoint>,
}

impl SweepManifest {
    pub fn failures(&self) -> impl Iterator<Item = &SweepPoint> {
        self.points.iter().filter(|p| !p.ok)
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub sigma_grid: Vec<f64>,
    pub qn_grid: Vec<f64>,
    pub total_steps: usize,
    pub mode: BlendMode,
    pub out_dir: PathBuf,
    pub jobs: usize,
    /// Checksum of the input embeddings file, recorded in the manifest.
    pub embeddings_sha256: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub manifest: SweepManifest,
    pub manifest_path: PathBuf,
    pub warnings: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Drop repeated values, keeping first occurrences in order. Returns the
/// unique values and the duplicates that were removed.
pub fn dedup_grid(values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut unique: Vec<f64> = Vec::with_capacity(values.len());
    let mut dropped = Vec::new();
    for &v in values {
        if unique.contains(&v) {
            dropped.push(v);
        } else {
            unique.push(v);
        }
    }
    (unique, dropped)
}

pub fn point_file_name(sigma: f64, q_n: f64) -> String {
    format!("traj_sigma{sigma}_qn{q_n}.scpe")
}

fn run_point(
    prompts: &SubPromptSet,
    sigma: f64,
    q_n: f64,
    cfg: &SweepConfig,
) -> SweepPoint {
    let path = point_file_name(sigma, q_n);
    let failed = |failure, error: String| SweepPoint {
        sigma,
        q_n,
        path: path.clone(),
        sha256: None,
        ok: false,
        failure: Some(failure),
        error: Some(error),
    };
    let schedule = match build_schedule(prompts, q_n, sigma, cfg.total_steps) {
        Ok(s) => s,
        Err(e) => return failed(FailureKind::Schedule, e.to_string()),
    };
    let traj = match trajectory(prompts, &schedule, cfg.mode) {
        Ok(t) => t,
        Err(e @ TrajectoryError::InvalidSchedule(_)) => {
            return failed(FailureKind::Schedule, e.to_string())
        }
        Err(e) => return failed(FailureKind::Blend, e.to_string()),
    };
    let written = encode_trajectory(&traj)
        .and_then(|bytes| write_atomic(&cfg.out_dir.join(&path), &bytes).map(|_| bytes));
    match written {
        Ok(bytes) => SweepPoint {
            sigma,
            q_n,
            sha256: Some(sha256_hex(&bytes)),
            path,
            ok: true,
            failure: None,
            error: None,
        },
        Err(e) => failed(FailureKind::Io, e.to_string()),
    }
}

/// Write one trajectory per (σ, qₙ) pair plus `manifest.json` into
/// `cfg.out_dir`. Failed points are recorded in the manifest rather than
/// aborting the sweep.
pub fn run_sweep(prompts: &SubPromptSet, cfg: &SweepConfig) -> Result<SweepOutcome, SweepError> {
    if cfg.sigma_grid.is_empty() {
        return Err(SweepError::EmptyGrid("sigma"));
    }
    if cfg.qn_grid.is_empty() {
        return Err(SweepError::EmptyGrid("q_n"));
    }
    let mut warnings = Vec::new();
    let (sigmas, dropped) = dedup_grid(&cfg.sigma_grid);
    if !dropped.is_empty() {
        warnings.push(format!("ignoring duplicate sigma values {dropped:?}"));
    }
    let (periods, dropped) = dedup_grid(&cfg.qn_grid);
    if !dropped.is_empty() {
        warnings.push(format!("ignoring duplicate q_n values {dropped:?}"));
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    fs::create_dir_all(&cfg.out_dir).map_err(IoError::from)?;
    let grid: Vec<(f64, f64)> = sigmas
        .iter()
        .flat_map(|&s| periods.iter().map(move |&q| (s, q)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;
    let points: Vec<SweepPoint> = pool.install(|| {
        grid.par_iter()
            .map(|&(sigma, q_n)| run_point(prompts, sigma, q_n, cfg))
            .collect()
    });

    let manifest = SweepManifest {
        version: MANIFEST_VERSION,
        embeddings_sha256: cfg.embeddings_sha256.clone(),
        total_steps: cfg.total_steps,
        mode: cfg.mode,
        points,
    };
    let manifest_path = cfg.out_dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    text.push(b'\n');
    write_atomic(&manifest_path, &text)?;
    Ok(SweepOutcome {
        manifest,
        manifest_path,
        warnings,
    })
}

/// Recompute the checksum of every successful point listed in a manifest.
/// Returns the file names whose contents no longer match.
pub fn verify_manifest(manifest: &SweepManifest, dir: &Path) -> Result<Vec<String>, IoError> {
    let mut mismatched = Vec::new();
    for point in manifest.points.iter().filter(|p| p.ok) {
        let bytes = fs::read(dir.join(&point.path))?;
        if point.sha256.as_deref() != Some(sha256_hex(&bytes).as_str()) {
            mismatched.push(point.path.clone());
        }
    }
    Ok(mismatched)
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sigma_grid: DEFAULT_SIGMA_GRID.to_vec(),
            qn_grid: DEFAULT_QN_GRID.to_vec(),
            total_steps: 50,
            mode: BlendMode::default(),
            out_dir: PathBuf::from("sweep"),
            jobs: 1,
            embeddings_sha256: None,
        }
    }
}
