//! Implementations of the subcommands, operating on resolved settings.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use scope_core::interpolation::first_step_after;
use scope_core::io::{
    read_json_subprompt_set, read_subprompt_set, read_trajectory, write_atomic,
    write_json_subprompt_set, write_subprompt_set, write_trajectory,
};
use scope_core::sim::{coarse_to_fine_probe, SamplerRun, ToyDiffusionModel};
use scope_core::subprompt::{build_subprompt_texts, LlmClient, LlmClientConfig};
use scope_core::sweep::{run_sweep, sha256_hex, SweepConfig};
use scope_core::{build_schedule, gaussian_weights, trajectory, BlendMode, SubPromptSet};
use serde::Serialize;

use crate::error::{CliError, CliResult, ExitKind};

/// Maximum absolute difference for a run to count as identical to static
/// conditioning.
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-12;

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Read a sub-prompt set from SCPE, or from the JSON mirror when the file
/// name ends in `.json`.
pub fn read_set(path: &Path) -> CliResult<SubPromptSet> {
    let set = if is_json(path) {
        read_json_subprompt_set(path)
    } else {
        read_subprompt_set(path)
    };
    set.map_err(|e| CliError::from(e).context(format!("reading {}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_vec_pretty(value).expect("report serializes");
    text.push(b'\n');
    write_atomic(path, &text).map_err(|e| CliError::from(e).context(format!("writing {}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    write_atomic(path, text.as_bytes()).map_err(|e| CliError::from(e).context(format!("writing {}", path.display())))
}

fn worker_pool(jobs: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::new(ExitKind::Failure, format!("could not start workers: {e}")))
}

fn load_model(path: &Path) -> CliResult<ToyDiffusionModel> {
    let text = fs::read_to_string(path).map_err(|e| CliError::from(e).context(format!("reading {}", path.display())))?;
    Ok(ToyDiffusionModel::from_json(&text)?)
}

/// Settings for `gen-subprompts`, the API key excepted.
pub struct LlmSettings {
    pub base_url: Option<String>,
    pub model_name: Option<String>,
    pub timeout_secs: Option<u64>,
    pub max_retries: Option<u64>,
    pub retry_backoff_ms: Option<u64>,
    pub temperature: Option<f64>,
}

pub fn gen_subprompts(prompt: &str, out: &Path, llm: LlmSettings) -> CliResult<()> {
    if prompt.trim().is_empty() {
        return Err(CliError::precondition("--prompt must not be empty"));
    }
    let mut config = LlmClientConfig::from_env()?;
    if let Some(url) = llm.base_url {
        config.base_url = url;
    }
    if let Some(name) = llm.model_name {
        config.model_name = name;
    }
    if let Some(secs) = llm.timeout_secs {
        config.timeout = Duration::from_secs(secs);
    }
    if let Some(n) = llm.max_retries {
        config.max_retries = n as u32;
    }
    if let Some(ms) = llm.retry_backoff_ms {
        config.retry_backoff = Duration::from_millis(ms);
    }
    if let Some(t) = llm.temperature {
        config.temperature = t;
    }
    let client = LlmClient::new(config)?;
    let texts = build_subprompt_texts(prompt, &client)?;
    write_json(out, &texts)?;
    println!("wrote {} sub-prompts to {}", texts.levels.len() + 1, out.display());
    Ok(())
}

pub struct TrajectorySettings {
    pub embeddings: PathBuf,
    pub out: PathBuf,
    pub q_n: f64,
    pub sigma: f64,
    pub steps: usize,
    pub mode: BlendMode,
    pub verbose: bool,
}

fn join_numbers(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

/// Normalized weights per step as CSV, one row per step. Rows after the
/// interpolation period put all weight on the finest sub-prompt.
fn weights_csv(schedule: &scope_core::InterpolationSchedule) -> String {
    let n = schedule.len();
    let mut csv = String::from("t");
    for i in 1..=n {
        write!(csv, ",w{i}").unwrap();
    }
    csv.push('\n');
    let cutover = first_step_after(schedule.period());
    for t in 0..schedule.total_steps {
        let weights = if t < cutover {
            gaussian_weights(schedule, t).normalized
        } else {
            let mut w = vec![0.0; n];
            w[n - 1] = 1.0;
            w
        };
        write!(csv, "{t}").unwrap();
        for w in weights {
            write!(csv, ",{w}").unwrap();
        }
        csv.push('\n');
    }
    csv
}

pub fn trajectory_cmd(s: TrajectorySettings) -> CliResult<()> {
    let prompts = read_set(&s.embeddings)?;
    let schedule = build_schedule(&prompts, s.q_n, s.sigma, s.steps)?;
    let traj = trajectory(&prompts, &schedule, s.mode)?;
    write_trajectory(&traj, &s.out)
        .map_err(|e| CliError::from(e).context(format!("writing {}", s.out.display())))?;
    println!("anchors: {}", join_numbers(&schedule.anchors));
    if s.verbose {
        print!("{}", weights_csv(&schedule));
    }
    Ok(())
}

pub struct SweepSettings {
    pub embeddings: PathBuf,
    pub out_dir: PathBuf,
    pub sigma_grid: Vec<f64>,
    pub qn_grid: Vec<f64>,
    pub steps: usize,
    pub mode: BlendMode,
    pub jobs: usize,
}

pub fn sweep_cmd(s: SweepSettings) -> CliResult<()> {
    let bytes = fs::read(&s.embeddings)
        .map_err(|e| CliError::from(e).context(format!("reading {}", s.embeddings.display())))?;
    let prompts = read_set(&s.embeddings)?;
    let cfg = SweepConfig {
        sigma_grid: s.sigma_grid,
        qn_grid: s.qn_grid,
        total_steps: s.steps,
        mode: s.mode,
        out_dir: s.out_dir,
        jobs: s.jobs,
        embeddings_sha256: Some(sha256_hex(&bytes)),
    };
    let outcome = run_sweep(&prompts, &cfg)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    let total = outcome.manifest.points.len();
    let failed: Vec<_> = outcome.manifest.failures().collect();
    println!(
        "wrote {} of {total} trajectories and {}",
        total - failed.len(),
        outcome.manifest_path.display()
    );
    match failed.first() {
        None => Ok(()),
        Some(first) => {
            for p in &failed {
                eprintln!(
                    "failed: sigma={} q_n={}: {}",
                    p.sigma,
                    p.q_n,
                    p.error.as_deref().unwrap_or("unknown error")
                );
            }
            let kind = first.failure.map_or(ExitKind::Failure, ExitKind::from);
            Err(CliError::new(kind, format!("{} of {total} grid points failed", failed.len())))
        }
    }
}

#[derive(Debug, Serialize)]
struct ModelSummary {
    m: usize,
    k: usize,
    s2: f64,
    steps: usize,
}

impl ModelSummary {
    fn of(model: &ToyDiffusionModel) -> Self {
        Self {
            m: model.m(),
            k: model.k(),
            s2: model.s2(),
            steps: model.total_steps(),
        }
    }
}

#[derive(Debug, Serialize)]
struct RunSummary {
    seed: u64,
    final_state: Vec<f64>,
    static_final_state: Vec<f64>,
    max_abs_diff_to_static: f64,
}

#[derive(Debug, Serialize)]
struct Equivalence {
    tolerance: f64,
    max_abs_diff: f64,
    /// Whether every run matched the run conditioned on the finest
    /// sub-prompt at every step.
    equivalent: bool,
}

#[derive(Debug, Serialize)]
struct SimulateReport {
    model: ModelSummary,
    trajectory: String,
    sigma: f64,
    q_n: f64,
    mode: BlendMode,
    seeds: Vec<u64>,
    runs: Vec<RunSummary>,
    equivalence: Equivalence,
}

pub struct SimulateSettings {
    pub model: PathBuf,
    pub trajectory: PathBuf,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub csv: PathBuf,
    pub jobs: usize,
}

fn states_csv(runs: &[SamplerRun]) -> String {
    let m = runs.first().map_or(0, |r| r.final_state.len());
    let mut csv = String::from("seed,step");
    for i in 1..=m {
        write!(csv, ",x{i}").unwrap();
    }
    csv.push('\n');
    for run in runs {
        for (step, state) in run.states.iter().enumerate() {
            write!(csv, "{},{step}", run.seed).unwrap();
            for v in state {
                write!(csv, ",{v}").unwrap();
            }
            csv.push('\n');
        }
    }
    csv
}

pub fn simulate_cmd(s: SimulateSettings) -> CliResult<()> {
    if s.seeds.is_empty() {
        return Err(CliError::precondition("--seeds must list at least one seed"));
    }
    let model = load_model(&s.model)?;
    let read = read_trajectory(&s.trajectory)
        .map_err(|e| CliError::from(e).context(format!("reading {}", s.trajectory.display())))?;
    for w in &read.warnings {
        eprintln!("warning: {w}");
    }
    let traj = read.trajectory;
    let finest = traj.steps.last().expect("trajectory has steps").clone();
    let pool = worker_pool(s.jobs)?;
    let pairs = pool.install(|| {
        s.seeds
            .par_iter()
            .map(|&seed| Ok((model.sample_trajectory(&traj, seed)?, model.sample_static(&finest, seed)?)))
            .collect::<CliResult<Vec<_>>>()
    })?;

    let runs: Vec<RunSummary> = pairs
        .iter()
        .map(|(run, reference)| RunSummary {
            seed: run.seed,
            final_state: run.final_state.clone(),
            static_final_state: reference.final_state.clone(),
            max_abs_diff_to_static: run.max_abs_diff(reference),
        })
        .collect();
    let max_abs_diff = runs.iter().map(|r| r.max_abs_diff_to_static).fold(0.0, f64::max);
    let report = SimulateReport {
        model: ModelSummary::of(&model),
        trajectory: s.trajectory.display().to_string(),
        sigma: traj.meta.sigma,
        q_n: traj.meta.q_n,
        mode: traj.meta.mode,
        seeds: s.seeds.clone(),
        runs,
        equivalence: Equivalence {
            tolerance: EQUIVALENCE_TOLERANCE,
            max_abs_diff,
            equivalent: max_abs_diff <= EQUIVALENCE_TOLERANCE,
        },
    };
    write_json(&s.out, &report)?;
    let sampled: Vec<SamplerRun> = pairs.into_iter().map(|(run, _)| run).collect();
    write_text(&s.csv, &states_csv(&sampled))?;
    println!(
        "simulated {} seed(s); max difference to static conditioning {max_abs_diff:e}; wrote {} and {}",
        s.seeds.len(),
        s.out.display(),
        s.csv.display()
    );
    Ok(())
}

pub struct ProbeSettings {
    pub model: PathBuf,
    pub embeddings: PathBuf,
    pub sigma: f64,
    pub qn_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub mode: BlendMode,
    pub out: PathBuf,
    pub csv: PathBuf,
    pub jobs: usize,
}

pub fn probe_cmd(s: ProbeSettings) -> CliResult<()> {
    if s.seeds.is_empty() {
        return Err(CliError::precondition("--seeds must list at least one seed"));
    }
    if s.qn_grid.is_empty() {
        return Err(CliError::precondition("--qn-grid must not be empty"));
    }
    let model = load_model(&s.model)?;
    let prompts = read_set(&s.embeddings)?;
    let pool = worker_pool(s.jobs)?;
    let report = pool.install(|| {
        coarse_to_fine_probe(&model, &prompts, s.sigma, &s.qn_grid, &s.seeds, s.mode)
    })?;
    write_json(&s.out, &report)?;
    let mut csv = String::from("q_n,mean_distance\n");
    for e in &report.entries {
        writeln!(csv, "{},{}", e.q_n, e.mean_distance).unwrap();
    }
    write_text(&s.csv, &csv)?;
    println!(
        "static distance {}; monotone in q_n: {}; wrote {} and {}",
        report.static_mean_distance,
        report.monotone,
        s.out.display(),
        s.csv.display()
    );
    Ok(())
}

/// Convert a sub-prompt set between the JSON mirror and SCPE, choosing the
/// direction from the file extensions.
pub fn convert_cmd(input: &Path, output: &Path) -> CliResult<()> {
    let set = read_set(input)?;
    let written = if is_json(output) {
        write_json_subprompt_set(&set, output)
    } else {
        write_subprompt_set(&set, output)
    };
    written.map_err(|e| CliError::from(e).context(format!("writing {}", output.display())))?;
    println!("wrote {} records of shape {:?} to {}", set.len(), set.shape(), output.display());
    Ok(())
}
