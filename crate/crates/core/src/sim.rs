//! A conditional diffusion model with a closed-form score, for running
//! conditioning trajectories end to end without a learned network.
//!
//! The data distribution for conditioning c is N(W·c, s²·I). Under a
//! variance-preserving forward process with cumulative signal coefficient ᾱ,
//! the noised marginal is N(√ᾱ·W·c, (1 − ᾱ + ᾱ·s²)·I), so its score is known
//! exactly. Sampling uses the deterministic DDIM update.
//!
//! Index conventions: `abar[level]` is ordered from clean (level 0) to noisy
//! (level T − 1). Denoising step t of a run uses level T − 1 − t and the
//! conditioning `traj.steps[t]`, matching the trajectory's step order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{Embedding, SubPromptSet};
use crate::interpolation::{trajectory, BlendMode, ConditioningTrajectory, TrajectoryError};
use crate::schedule::{build_schedule, ScheduleError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

/// Offset used by the cosine noise schedule.
const COSINE_OFFSET: f64 = 0.008;

/// Cosine ᾱ schedule with `steps` levels, strictly decreasing and inside (0, 1).
pub fn cosine_abar(steps: usize) -> Vec<f64> {
    let f = |u: f64| {
        let angle = (u + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * std::f64::consts::FRAC_PI_2;
        angle.cos().powi(2)
    };
    let f0 = f(0.0);
    (0..steps)
        .map(|level| f((level + 1) as f64 / (steps + 1) as f64) / f0)
        .collect()
}

/// Maps a flattened embedding to the model's k-dimensional conditioning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// The first k components.
    FirstK,
    /// An explicit k × L matrix.
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyDiffusionModel {
    w: Vec<Vec<f64>>,
    s2: f64,
    abar: Vec<f64>,
    projection: Projection,
}

/// On-disk model description; `abar` may be omitted in favour of a cosine
/// schedule over `steps` levels.
#[derive(Debug, Clone, Deserialize)]
struct ModelDocument {
    w: Vec<Vec<f64>>,
    s2: f64,
    #[serde(default)]
    abar: Option<Vec<f64>>,
    #[serde(default)]
    steps: Option<usize>,
    #[serde(default = "default_projection")]
    projection: Projection,
}

fn default_projection() -> Projection {
    Projection::FirstK
}

impl<'de> Deserialize<'de> for ToyDiffusionModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = ModelDocument::deserialize(d)?;
        let abar = match (doc.abar, doc.steps) {
            (Some(abar), _) => abar,
            (None, Some(steps)) => cosine_abar(steps),
            (None, None) => return Err(serde::de::Error::custom("model needs `abar` or `steps`")),
        };
        ToyDiffusionModel::new(doc.w, doc.s2, abar, doc.projection).map_err(serde::de::Error::custom)
    }
}

impl ToyDiffusionModel {
    pub fn new(
        w: Vec<Vec<f64>>,
        s2: f64,
        abar: Vec<f64>,
        projection: Projection,
    ) -> Result<Self, SimError> {
        let bad = |msg: String| Err(SimError::InvalidModel(msg));
        let k = w.first().map_or(0, Vec::len);
        if w.is_empty() || k == 0 || w.iter().any(|row| row.len() != k) {
            return bad("W must be a nonempty rectangular matrix".into());
        }
        if w.iter().flatten().any(|v| !v.is_finite()) {
            return bad("W has non-finite entries".into());
        }
        if !(s2.is_finite() && s2 > 0.0) {
            return bad(format!("s2 must be positive, got {s2}"));
        }
        if abar.is_empty() {
            return bad("abar is empty".into());
        }
        if abar.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return bad("abar values must lie in (0, 1]".into());
        }
        if abar.windows(2).any(|p| p[1] >= p[0]) {
            return bad("abar must be strictly decreasing".into());
        }
        if let Projection::Matrix(rows) = &projection {
            let len = rows.first().map_or(0, Vec::len);
            if rows.len() != k || len == 0 || rows.iter().any(|r| r.len() != len) {
                return bad(format!("projection must be a {k} x L matrix"));
            }
        }
        Ok(Self {
            w,
            s2,
            abar,
            projection,
        })
    }

    /// Cosine schedule over `steps` levels with first-k projection.
    pub fn cosine(w: Vec<Vec<f64>>, s2: f64, steps: usize) -> Result<Self, SimError> {
        Self::new(w, s2, cosine_abar(steps), Projection::FirstK)
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::InvalidModel(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    /// Output dimension m.
    pub fn m(&self) -> usize {
        self.w.len()
    }

    /// Conditioning dimension k.
    pub fn k(&self) -> usize {
        self.w[0].len()
    }

    pub fn s2(&self) -> f64 {
        self.s2
    }

    pub fn abar(&self) -> &[f64] {
        &self.abar
    }

    pub fn total_steps(&self) -> usize {
        self.abar.len()
    }

    pub fn w(&self) -> &[Vec<f64>] {
        &self.w
    }

    /// Target mean W·c.
    pub fn mean(&self, c: &[f64]) -> Vec<f64> {
        self.w
            .iter()
            .map(|row| row.iter().zip(c).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Conditioning vector for an embedding.
    pub fn project(&self, e: &Embedding) -> Result<Vec<f64>, SimError> {
        let data = e.data();
        match &self.projection {
            Projection::FirstK => {
                if data.len() < self.k() {
                    return Err(SimError::DimensionMismatch(format!(
                        "embedding has {} values but the model needs k = {}",
                        data.len(),
                        self.k()
                    )));
                }
                Ok(data[..self.k()].to_vec())
            }
            Projection::Matrix(rows) => {
                if rows[0].len() != data.len() {
                    return Err(SimError::DimensionMismatch(format!(
                        "projection expects {} values, embedding has {}",
                        rows[0].len(),
                        data.len()
                    )));
                }
                Ok(rows
                    .iter()
                    .map(|row| row.iter().zip(data).map(|(a, b)| a * b).sum())
                    .collect())
            }
        }
    }

    /// Exact score ∇ₓ log p(x | c) at noise level `level`.
    pub fn conditional_score(&self, x: &[f64], level: usize, c: &[f64]) -> Vec<f64> {
        let abar = self.abar[level];
        let variance = 1.0 - abar + abar * self.s2;
        let scale = abar.sqrt();
        x.iter()
            .zip(self.mean(c))
            .map(|(xi, mi)| -(xi - scale * mi) / variance)
            .collect()
    }

    /// Standard-normal starting point for `seed`.
    pub fn initial_state(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.m()).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    /// Deterministic DDIM run with one conditioning vector per step.
    pub fn sample(&self, conditioning: &[Vec<f64>], seed: u64) -> Result<SamplerRun, SimError> {
        let steps = self.total_steps();
        if conditioning.len() != steps {
            return Err(SimError::DimensionMismatch(format!(
                "{} conditioning steps for a {steps}-step model",
                conditioning.len()
            )));
        }
        if let Some(c) = conditioning.iter().find(|c| c.len() != self.k()) {
            return Err(SimError::DimensionMismatch(format!(
                "conditioning has {} components, model needs k = {}",
                c.len(),
                self.k()
            )));
        }
        let x_init = self.initial_state(seed);
        let mut states = Vec::with_capacity(steps + 1);
        states.push(x_init.clone());
        let mut x = x_init.clone();
        for (t, c) in conditioning.iter().enumerate() {
            let level = steps - 1 - t;
            let abar = self.abar[level];
            let abar_prev = if level == 0 { 1.0 } else { self.abar[level - 1] };
            let noise_scale = (1.0 - abar).sqrt();
            let score = self.conditional_score(&x, level, c);
            x = x
                .iter()
                .zip(&score)
                .map(|(xi, si)| {
                    let eps = -noise_scale * si;
                    let x0 = (xi - noise_scale * eps) / abar.sqrt();
                    abar_prev.sqrt() * x0 + (1.0 - abar_prev).sqrt() * eps
                })
                .collect();
            states.push(x.clone());
        }
        Ok(SamplerRun {
            seed,
            x_init,
            final_state: x,
            states,
        })
    }

    /// Run with the conditioning taken from a trajectory.
    pub fn sample_trajectory(
        &self,
        traj: &ConditioningTrajectory,
        seed: u64,
    ) -> Result<SamplerRun, SimError> {
        let conditioning = traj
            .steps
            .iter()
            .map(|e| self.project(e))
            .collect::<Result<Vec<_>, _>>()?;
        self.sample(&conditioning, seed)
    }

    /// Run with the same conditioning embedding at every step.
    pub fn sample_static(&self, e: &Embedding, seed: u64) -> Result<SamplerRun, SimError> {
        let c = self.project(e)?;
        self.sample(&vec![c; self.total_steps()], seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplerRun {
    pub seed: u64,
    pub x_init: Vec<f64>,
    /// x before the first step followed by x after every step (T + 1 entries).
    pub states: Vec<Vec<f64>>,
    pub final_state: Vec<f64>,
}

impl SamplerRun {
    /// Largest componentwise difference over all recorded states.
    pub fn max_abs_diff(&self, other: &SamplerRun) -> f64 {
        self.states
            .iter()
            .zip(&other.states)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEntry {
    pub q_n: f64,
    pub mean_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub sigma: f64,
    pub mode: BlendMode,
    pub seeds: Vec<u64>,
    /// Mean distance of static runs conditioned on pₙ throughout.
    pub static_mean_distance: f64,
    pub entries: Vec<ProbeEntry>,
    /// Whether mean distance never decreases as q_n grows.
    pub monotone: bool,
}

/// For each q_n, the mean distance over `seeds` between the final sample
/// and the fine target W·proj(pₙ).
pub fn coarse_to_fine_probe(
    model: &ToyDiffusionModel,
    prompts: &SubPromptSet,
    sigma: f64,
    q_n_grid: &[f64],
    seeds: &[u64],
    mode: BlendMode,
) -> Result<ProbeReport, SimError> {
    let target = model.mean(&model.project(prompts.finest())?);
    let mean_distance = |runs: Vec<SamplerRun>| {
        runs.iter()
            .map(|r| euclidean(&r.final_state, &target))
            .sum::<f64>()
            / runs.len().max(1) as f64
    };
    let static_runs = seeds
        .par_iter()
        .map(|&seed| model.sample_static(prompts.finest(), seed))
        .collect::<Result<Vec<_>, _>>()?;
    let static_mean_distance = mean_distance(static_runs);

    let mut grid = q_n_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut entries = Vec::with_capacity(grid.len());
    for q_n in grid {
        let schedule = build_schedule(prompts, q_n, sigma, model.total_steps())?;
        let traj = trajectory(prompts, &schedule, mode)?;
        let runs = seeds
            .par_iter()
            .map(|&seed| model.sample_trajectory(&traj, seed))
            .collect::<Result<Vec<_>, _>>()?;
        entries.push(ProbeEntry {
            q_n,
            mean_distance: mean_distance(runs),
        });
    }
    let monotone = entries
        .windows(2)
        .all(|p| p[1].mean_distance >= p[0].mean_distance);
    Ok(ProbeReport {
        sigma,
        mode,
        seeds: seeds.to_vec(),
        static_mean_distance,
        entries,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(steps: usize) -> ToyDiffusionModel {
        ToyDiffusionModel::cosine(
            vec![vec![1.0, 0.5, 0.0, -0.3], vec![0.2, -1.0, 0.7, 0.1]],
            0.25,
            steps,
        )
        .unwrap()
    }

    #[test]
    fn cosine_schedule_is_valid() {
        let abar = cosine_abar(50);
        assert_eq!(abar.len(), 50);
        assert!(abar[0] < 1.0 && abar[0] > 0.99);
        assert!(abar[49] > 0.0 && abar[49] < 0.01);
        assert!(abar.windows(2).all(|p| p[1] < p[0]));
    }

    #[test]
    fn score_vanishes_at_the_mean() {
        let m = model(50);
        let c = [0.3, -0.2, 1.0, 0.5];
        for level in [0, 17, 49] {
            let x: Vec<f64> = m.mean(&c).iter().map(|v| v * m.abar()[level].sqrt()).collect();
            assert!(m.conditional_score(&x, level, &c).iter().all(|s| s.abs() < 1e-15));
        }
    }

    #[test]
    fn unit_variance_limit() {
        let m = ToyDiffusionModel::new(vec![vec![2.0]], 1.0, vec![1.0, 0.5], Projection::FirstK).unwrap();
        let score = m.conditional_score(&[3.0], 0, &[1.0]);
        assert_eq!(score, vec![-(3.0 - 2.0)]);
    }

    #[test]
    fn model_validation() {
        let w = vec![vec![1.0, 0.0]];
        assert!(ToyDiffusionModel::new(w.clone(), 0.0, vec![0.9], Projection::FirstK).is_err());
        assert!(ToyDiffusionModel::new(w.clone(), 1.0, vec![0.5, 0.9], Projection::FirstK).is_err());
        assert!(ToyDiffusionModel::new(w.clone(), 1.0, vec![1.5], Projection::FirstK).is_err());
        assert!(ToyDiffusionModel::new(vec![vec![1.0], vec![]], 1.0, vec![0.5], Projection::FirstK).is_err());
        assert!(ToyDiffusionModel::new(w.clone(), 1.0, vec![0.5], Projection::Matrix(vec![vec![1.0]])).is_err());
        assert!(ToyDiffusionModel::new(w, 1.0, vec![0.5], Projection::Matrix(vec![vec![1.0]; 2])).is_ok());
    }

    #[test]
    fn model_json_round_trip_and_cosine_default() {
        let m = model(20);
        assert_eq!(ToyDiffusionModel::from_json(&m.to_json()).unwrap(), m);
        let short = r#"{"w": [[1.0, 0.5, 0.0, -0.3], [0.2, -1.0, 0.7, 0.1]], "s2": 0.25, "steps": 20}"#;
        assert_eq!(ToyDiffusionModel::from_json(short).unwrap(), m);
        assert!(ToyDiffusionModel::from_json(r#"{"w": [[1.0]], "s2": 1.0}"#).is_err());
    }

    #[test]
    fn projections() {
        let m = model(10);
        let e = Embedding::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.project(&e).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        let short = Embedding::from_vec(vec![1.0, 2.0]).unwrap();
        assert!(matches!(m.project(&short), Err(SimError::DimensionMismatch(_))));
        let proj = vec![vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 0.0]];
        let m = ToyDiffusionModel::new(m.w().to_vec(), 0.25, cosine_abar(10), Projection::Matrix(proj)).unwrap();
        assert_eq!(m.project(&short).unwrap(), vec![3.0, 2.0, 1.0, 2.0]);
    }

    #[test]
    fn runs_are_deterministic() {
        let m = model(50);
        let c = vec![vec![0.5, 0.1, -0.2, 0.9]; 50];
        let a = m.sample(&c, 7).unwrap();
        let b = m.sample(&c, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.states.len(), 51);
        assert_eq!(a.states[0], a.x_init);
        assert_eq!(a.states[50], a.final_state);
        assert_ne!(m.sample(&c, 8).unwrap().x_init, a.x_init);
    }

    #[test]
    fn sample_rejects_mismatched_conditioning() {
        let m = model(50);
        assert!(matches!(
            m.sample(&vec![vec![0.0; 4]; 49], 0),
            Err(SimError::DimensionMismatch(_))
        ));
        assert!(matches!(
            m.sample(&vec![vec![0.0; 3]; 50], 0),
            Err(SimError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn final_state_concentrates_on_the_target() {
        // with tiny data variance every run lands next to W·c
        let m = ToyDiffusionModel::cosine(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 1e-6, 200).unwrap();
        let c = vec![vec![2.0, -1.0]; 200];
        for seed in 0..5 {
            let run = m.sample(&c, seed).unwrap();
            assert!(euclidean(&run.final_state, &[2.0, -1.0]) < 0.05);
        }
    }
}
