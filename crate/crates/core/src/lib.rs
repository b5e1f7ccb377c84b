//! Coarse-to-fine conditioning schedules for diffusion samplers.
//!
//! A prompt is broken into sub-prompts of increasing detail, each encoded to
//! an embedding. [`schedule`] assigns every sub-prompt an anchor step,
//! [`interpolation`] blends the embeddings with Gaussian weights around those
//! anchors into one conditioning embedding per sampling step, and [`io`]
//! stores sets and trajectories in a fixed little-endian container. The
//! [`subprompt`] module drives an OpenAI-compatible chat endpoint to produce
//! the sub-prompt texts; [`sim`] is an analytic linear-Gaussian diffusion
//! model for checking trajectories end to end.

pub mod embedding;
pub mod interpolation;
pub mod io;
pub mod schedule;
pub mod sim;
pub mod subprompt;
pub mod sweep;

pub use embedding::{Embedding, EmbeddingError, SubPromptSet};
pub use interpolation::{
    blend, gaussian_weights, trajectory, BlendError, BlendMode, ConditioningTrajectory,
    TrajectoryError, TrajectoryMeta, WeightVector,
};
pub use schedule::{build_schedule, validate, InterpolationSchedule, ScheduleError, SpacingPolicy, Violation};
