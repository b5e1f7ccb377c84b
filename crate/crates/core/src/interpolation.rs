//! Gaussian timestep weights and the per-step conditioning trajectory.
//!
//! At step t ≤ qₙ each sub-prompt gets weight exp(−(t − qᵢ)² / 2σ²); the
//! weights are normalized to sum to one and used to blend the unit-norm
//! sub-prompt embeddings, which are then rescaled by ‖pₙ‖. After qₙ the
//! finest embedding is used unchanged.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{Embedding, SubPromptSet};
use crate::schedule::{validate, InterpolationSchedule, Violation};

/// Threshold below which a blended direction is treated as cancelled out.
pub const MIN_BLEND_NORM: f64 = 1e-30;

/// How the weighted sum of unit sub-prompt embeddings is brought back to
/// the scale of pₙ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlendMode {
    /// ‖pₙ‖ · Σ α′ᵢ p̂ᵢ as written. The result can be shorter than pₙ.
    Literal,
    /// ‖pₙ‖ · v / ‖v‖ with v = Σ α′ᵢ p̂ᵢ, so the result always has norm ‖pₙ‖.
    #[default]
    Renormalized,
}

impl fmt::Display for BlendMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlendMode::Literal => f.write_str("literal"),
            BlendMode::Renormalized => f.write_str("renormalized"),
        }
    }
}

impl FromStr for BlendMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "literal" => Ok(BlendMode::Literal),
            "renormalized" => Ok(BlendMode::Renormalized),
            other => Err(format!(
                "unknown blend mode '{other}' (expected 'literal' or 'renormalized')"
            )),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlendError {
    #[error("sub-prompt {index} has zero norm but weight {weight}")]
    ZeroNormPrompt { index: usize, weight: f64 },
    #[error("blended direction cancelled out (norm {0:e})")]
    Cancelled(f64),
    #[error("weight vector has {weights} entries for {prompts} sub-prompts")]
    CountMismatch { weights: usize, prompts: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("invalid schedule: {}", format_violations(.0))]
    InvalidSchedule(Vec<Violation>),
    #[error("schedule has {anchors} anchors for {prompts} sub-prompts")]
    AnchorCountMismatch { anchors: usize, prompts: usize },
    #[error("blend failed at step {t}: {source}")]
    Blend {
        t: usize,
        #[source]
        source: BlendError,
    },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub t: usize,
    /// exp(−(t − qᵢ)² / 2σ²); may underflow to zero far from an anchor.
    pub raw: Vec<f64>,
    /// Weights normalized to unit sum.
    pub normalized: Vec<f64>,
}

impl WeightVector {
    pub fn len(&self) -> usize {
        self.normalized.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normalized.is_empty()
    }

    /// Index of the largest normalized weight (first one on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, w) in self.normalized.iter().enumerate() {
            if *w > self.normalized[best] {
                best = i;
            }
        }
        best
    }
}

/// Gaussian weights of every anchor at step `t`.
///
/// Normalization works on the exponents relative to the largest one, so the
/// normalized weights stay well defined even when every raw weight underflows.
pub fn gaussian_weights(s: &InterpolationSchedule, t: usize) -> WeightVector {
    let t_real = t as f64;
    let exponents: Vec<f64> = s
        .anchors
        .iter()
        .map(|q| {
            let z = (t_real - q) / s.sigma;
            -0.5 * z * z
        })
        .collect();
    let raw = exponents.iter().map(|e| e.exp()).collect();
    let peak = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = exponents.iter().map(|e| (e - peak).exp()).collect();
    let total: f64 = shifted.iter().sum();
    let normalized = shifted.iter().map(|w| w / total).collect();
    WeightVector { t, raw, normalized }
}

/// Blend the sub-prompts with normalized weights `w`.
///
/// When all weight sits on pₙ the result is a bitwise copy of pₙ.
pub fn blend(
    prompts: &SubPromptSet,
    w: &WeightVector,
    mode: BlendMode,
) -> Result<Embedding, BlendError> {
    let n = prompts.len();
    if w.len() != n {
        return Err(BlendError::CountMismatch {
            weights: w.len(),
            prompts: n,
        });
    }
    let finest = prompts.finest();
    if w.normalized[..n - 1].iter().all(|&a| a == 0.0) {
        return Ok(finest.clone());
    }

    let mut direction = vec![0.0; finest.len()];
    for (index, (item, &weight)) in prompts.items().iter().zip(&w.normalized).enumerate() {
        if weight == 0.0 {
            continue;
        }
        let norm = item.norm();
        if norm == 0.0 {
            return Err(BlendError::ZeroNormPrompt { index, weight });
        }
        let scale = weight / norm;
        for (acc, v) in direction.iter_mut().zip(item.data()) {
            *acc += scale * v;
        }
    }

    let target = finest.norm();
    let factor = match mode {
        BlendMode::Literal => target,
        BlendMode::Renormalized => {
            let len = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
            if len < MIN_BLEND_NORM {
                return Err(BlendError::Cancelled(len));
            }
            target / len
        }
    };
    direction.iter_mut().for_each(|v| *v *= factor);
    Ok(Embedding::new(finest.shape().to_vec(), direction).expect("blend keeps shape and finiteness"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub sigma: f64,
    pub anchors: Vec<f64>,
    pub q_n: f64,
    pub mode: BlendMode,
    pub labels: Vec<Option<String>>,
}

/// One conditioning embedding per sampling step, t = 0…T−1.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningTrajectory {
    pub steps: Vec<Embedding>,
    pub meta: TrajectoryMeta,
}

impl ConditioningTrajectory {
    pub fn total_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn shape(&self) -> &[usize] {
        self.steps[0].shape()
    }

    /// Steps strictly after the interpolation period.
    pub fn first_cutover_step(&self) -> usize {
        first_step_after(self.meta.q_n)
    }
}

/// First integer step strictly greater than `q_n`.
pub fn first_step_after(q_n: f64) -> usize {
    q_n.floor() as usize + 1
}

/// Build the conditioning trajectory for every step of the schedule.
pub fn trajectory(
    prompts: &SubPromptSet,
    s: &InterpolationSchedule,
    mode: BlendMode,
) -> Result<ConditioningTrajectory, TrajectoryError> {
    validate(s).map_err(TrajectoryError::InvalidSchedule)?;
    if s.len() != prompts.len() {
        return Err(TrajectoryError::AnchorCountMismatch {
            anchors: s.len(),
            prompts: prompts.len(),
        });
    }
    let steps = (0..s.total_steps)
        .map(|t| {
            if s.interpolates_at(t) {
                blend(prompts, &gaussian_weights(s, t), mode)
                    .map_err(|source| TrajectoryError::Blend { t, source })
            } else {
                Ok(prompts.finest().clone())
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ConditioningTrajectory {
        steps,
        meta: TrajectoryMeta {
            sigma: s.sigma,
            anchors: s.anchors.clone(),
            q_n: s.period(),
            mode,
            labels: prompts.labels(),
        },
    })
}
