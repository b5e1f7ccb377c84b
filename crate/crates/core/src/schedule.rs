//! Anchor placement for the interpolation schedule.
//!
//! Sub-prompt i is anchored at step qᵢ, where it carries its largest weight.
//! The first anchor sits at step 0 and the last at the interpolation period
//! qₙ. Anchors in between are spaced in proportion to the embedding distance
//! between consecutive sub-prompts, so dᵢ / (qᵢ − qᵢ₋₁) is the same for every
//! i. Anchors are kept real-valued; rounding them would break that ratio.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::SubPromptSet;

pub const SCHEDULE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpacingPolicy {
    DistanceProportional,
    Uniform,
}

impl fmt::Display for SpacingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpacingPolicy::DistanceProportional => f.write_str("distance_proportional"),
            SpacingPolicy::Uniform => f.write_str("uniform"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("period out of range: q_n = {period} exceeds total_steps - 1 = {max}")]
    PeriodOutOfRange { period: f64, max: usize },
    #[error("sub-prompt set is empty")]
    EmptySet,
    #[error("interpolation period must be finite and nonnegative, got {0}")]
    InvalidPeriod(f64),
    #[error("sigma must be finite and positive, got {0}")]
    InvalidSigma(f64),
    #[error("total_steps must be positive")]
    ZeroSteps,
}

/// One broken schedule invariant, as reported by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoAnchors,
    NonFiniteAnchor { index: usize },
    FirstAnchorNonZero(f64),
    NonMonotone { index: usize },
    PeriodOutOfRange { period: f64, total_steps: usize },
    NonPositiveSigma(f64),
    ZeroSteps,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoAnchors => write!(f, "schedule has no anchors"),
            Violation::NonFiniteAnchor { index } => write!(f, "anchor {index} is not finite"),
            Violation::FirstAnchorNonZero(q) => write!(f, "first anchor must be 0, got {q}"),
            Violation::NonMonotone { index } => {
                write!(f, "anchors decrease at index {index}")
            }
            Violation::PeriodOutOfRange {
                period,
                total_steps,
            } => write!(
                f,
                "period out of range: q_n = {period} with total_steps = {total_steps}"
            ),
            Violation::NonPositiveSigma(s) => write!(f, "sigma must be positive, got {s}"),
            Violation::ZeroSteps => write!(f, "total_steps must be positive"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationSchedule {
    pub anchors: Vec<f64>,
    pub sigma: f64,
    pub total_steps: usize,
    pub policy: SpacingPolicy,
}

#[derive(Serialize, Deserialize)]
struct ScheduleDocument {
    version: u32,
    anchors: Vec<f64>,
    sigma: f64,
    total_steps: usize,
    policy: SpacingPolicy,
}

impl InterpolationSchedule {
    /// Evenly spaced anchors over `[0, q_n]`.
    pub fn uniform(
        n: usize,
        q_n: f64,
        sigma: f64,
        total_steps: usize,
    ) -> Result<Self, ScheduleError> {
        check_inputs(n, q_n, sigma, total_steps)?;
        Ok(Self {
            anchors: uniform_anchors(n, q_n),
            sigma,
            total_steps,
            policy: SpacingPolicy::Uniform,
        })
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// The interpolation period qₙ (the last anchor).
    pub fn period(&self) -> f64 {
        self.anchors.last().copied().unwrap_or(0.0)
    }

    /// Whether step `t` still falls inside the interpolation period.
    pub fn interpolates_at(&self, t: usize) -> bool {
        (t as f64) <= self.period()
    }

    pub fn to_json(&self) -> String {
        let doc = ScheduleDocument {
            version: SCHEDULE_FORMAT_VERSION,
            anchors: self.anchors.clone(),
            sigma: self.sigma,
            total_steps: self.total_steps,
            policy: self.policy,
        };
        serde_json::to_string_pretty(&doc).expect("schedule serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let doc: ScheduleDocument = serde_json::from_str(text)?;
        if doc.version != SCHEDULE_FORMAT_VERSION {
            return Err(serde::de::Error::custom(format!(
                "unsupported schedule version {}",
                doc.version
            )));
        }
        Ok(Self {
            anchors: doc.anchors,
            sigma: doc.sigma,
            total_steps: doc.total_steps,
            policy: doc.policy,
        })
    }
}

fn check_inputs(n: usize, q_n: f64, sigma: f64, total_steps: usize) -> Result<(), ScheduleError> {
    if n == 0 {
        return Err(ScheduleError::EmptySet);
    }
    if total_steps == 0 {
        return Err(ScheduleError::ZeroSteps);
    }
    if !q_n.is_finite() || q_n < 0.0 {
        return Err(ScheduleError::InvalidPeriod(q_n));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(ScheduleError::InvalidSigma(sigma));
    }
    if q_n > (total_steps - 1) as f64 {
        return Err(ScheduleError::PeriodOutOfRange {
            period: q_n,
            max: total_steps - 1,
        });
    }
    Ok(())
}

fn uniform_anchors(n: usize, q_n: f64) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    let mut anchors: Vec<f64> = (0..n)
        .map(|i| q_n * i as f64 / (n - 1) as f64)
        .collect();
    anchors[n - 1] = q_n;
    anchors
}

/// Place anchors so that consecutive embedding distances are proportional
/// to the step gaps between their anchors.
///
/// A single sub-prompt is anchored at 0. When all sub-prompts coincide the
/// ratio is undefined and the anchors fall back to uniform spacing.
pub fn build_schedule(
    prompts: &SubPromptSet,
    q_n: f64,
    sigma: f64,
    total_steps: usize,
) -> Result<InterpolationSchedule, ScheduleError> {
    let n = prompts.len();
    check_inputs(n, q_n, sigma, total_steps)?;
    if n == 1 {
        return Ok(InterpolationSchedule {
            anchors: vec![0.0],
            sigma,
            total_steps,
            policy: SpacingPolicy::DistanceProportional,
        });
    }

    let distances = prompts.consecutive_distances();
    let mut cumulative = Vec::with_capacity(n);
    cumulative.push(0.0);
    let mut running = 0.0;
    for d in &distances {
        running += d;
        cumulative.push(running);
    }
    let total = running;
    if total == 0.0 {
        return InterpolationSchedule::uniform(n, q_n, sigma, total_steps);
    }

    // q_n * (c / D) keeps every anchor <= q_n after rounding
    let mut anchors: Vec<f64> = cumulative.iter().map(|c| q_n * (c / total)).collect();
    anchors[0] = 0.0;
    anchors[n - 1] = q_n;
    Ok(InterpolationSchedule {
        anchors,
        sigma,
        total_steps,
        policy: SpacingPolicy::DistanceProportional,
    })
}

/// Every broken invariant of `s`, or `Ok(())`.
pub fn validate(s: &InterpolationSchedule) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    if s.anchors.is_empty() {
        violations.push(Violation::NoAnchors);
    }
    for (index, q) in s.anchors.iter().enumerate() {
        if !q.is_finite() {
            violations.push(Violation::NonFiniteAnchor { index });
        }
    }
    if let Some(&first) = s.anchors.first() {
        if first != 0.0 {
            violations.push(Violation::FirstAnchorNonZero(first));
        }
    }
    for (i, w) in s.anchors.windows(2).enumerate() {
        if w[1] < w[0] {
            violations.push(Violation::NonMonotone { index: i + 1 });
        }
    }
    if s.total_steps == 0 {
        violations.push(Violation::ZeroSteps);
    } else if let Some(&last) = s.anchors.last() {
        if last > (s.total_steps - 1) as f64 {
            violations.push(Violation::PeriodOutOfRange {
                period: last,
                total_steps: s.total_steps,
            });
        }
    }
    if !(s.sigma > 0.0 && s.sigma.is_finite()) {
        violations.push(Violation::NonPositiveSigma(s.sigma));
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}
