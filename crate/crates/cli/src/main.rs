//! `scope`: sub-prompt generation, interpolation trajectories, sweeps and
//! toy-sampler runs from the command line.
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 network, 3 parse,
//! 4 precondition or usage, 5 schedule, 6 blend, 7 dimension mismatch.

mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scope_core::BlendMode;

use crate::commands::{
    LlmSettings, ProbeSettings, SimulateSettings, SweepSettings, TrajectorySettings,
};
use crate::config::{missing, Config};
use crate::error::{CliError, CliResult};

const DEFAULT_STEPS: usize = 50;
const DEFAULT_SIGMA: f64 = 3.0;
const DEFAULT_QN: f64 = 20.0;
const DEFAULT_SIGMA_GRID: [f64; 2] = [3.0, 5.0];
const DEFAULT_QN_GRID: [f64; 4] = [4.0, 12.0, 20.0, 28.0];

#[derive(Debug, Parser)]
#[command(
    name = "scope",
    version,
    about = "Coarse-to-fine prompt embedding interpolation for diffusion samplers",
    after_help = "Exit codes: 0 ok, 1 I/O or other failure, 2 network, 3 parse, 4 precondition, \
                  5 schedule, 6 blend, 7 dimension mismatch."
)]
struct Cli {
    /// TOML file whose keys mirror flag names with dashes as underscores;
    /// flags given on the command line take precedence
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Expand a prompt and simplify it into four coarser sub-prompts via an
    /// OpenAI-compatible chat API (key read from SCOPE_LLM_API_KEY)
    GenSubprompts(GenArgs),
    /// Compute the interpolation schedule and conditioning trajectory for a
    /// sub-prompt embedding set
    Trajectory(TrajectoryArgs),
    /// Write one trajectory per (sigma, q_n) grid point plus a checksummed
    /// manifest
    Sweep(SweepArgs),
    /// Run the toy diffusion sampler on a trajectory for one or more seeds
    Simulate(SimulateArgs),
    /// Measure how far final samples land from the finest target as q_n grows
    Probe(ProbeArgs),
    /// Convert a sub-prompt set between JSON and SCPE (by file extension)
    Convert(ConvertArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    /// The short user prompt
    #[arg(long)]
    prompt: Option<String>,
    /// Output JSON file for the enhanced prompt and its levels
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// API base URL [default: https://api.openai.com/v1]
    #[arg(long, value_name = "URL")]
    base_url: Option<String>,
    /// Chat model name [default: gpt-4o]
    #[arg(long, value_name = "NAME")]
    llm_model: Option<String>,
    /// Per-request timeout in seconds [default: 60]
    #[arg(long, value_name = "SECS")]
    timeout_secs: Option<u64>,
    /// Retries after network errors, 429 and 5xx replies [default: 3]
    #[arg(long, value_name = "N")]
    max_retries: Option<u64>,
    /// Delay before the first retry, doubled on each further one [default: 500]
    #[arg(long, value_name = "MS")]
    retry_backoff_ms: Option<u64>,
    /// Sampling temperature [default: 0]
    #[arg(long)]
    temperature: Option<f64>,
}

/// Flags shared by commands that build schedules.
#[derive(Debug, Args)]
struct ScheduleArgs {
    /// Total sampling steps T [default: 50]
    #[arg(long)]
    steps: Option<usize>,
    /// Blend mode: renormalized or literal [default: renormalized]
    #[arg(long, value_parser = parse_mode)]
    mode: Option<BlendMode>,
}

#[derive(Debug, Args)]
struct TrajectoryArgs {
    /// Sub-prompt set, SCPE or JSON (by extension), coarsest first
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    /// Interpolation period q_n [default: 20]
    #[arg(long)]
    q_n: Option<f64>,
    /// Gaussian width sigma [default: 3]
    #[arg(long)]
    sigma: Option<f64>,
    #[command(flatten)]
    schedule: ScheduleArgs,
    /// Output trajectory file (SCPE)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Also print the normalized weights of every step as CSV
    #[arg(long)]
    verbose: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Sub-prompt set, SCPE or JSON (by extension), coarsest first
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    /// Comma-separated sigma values [default: 3,5]
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    sigma_grid: Option<Vec<f64>>,
    /// Comma-separated q_n values [default: 4,12,20,28]
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    qn_grid: Option<Vec<f64>>,
    #[command(flatten)]
    schedule: ScheduleArgs,
    /// Directory for the trajectory files and manifest.json
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Worker threads [default: 1]
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Toy model description (JSON)
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Trajectory file (SCPE)
    #[arg(long, value_name = "FILE")]
    trajectory: Option<PathBuf>,
    /// Comma-separated seeds [default: 0]
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    seeds: Option<Vec<u64>>,
    /// Report JSON file
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// State CSV file [default: report path with a .csv extension]
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    /// Worker threads [default: 1]
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    /// Toy model description (JSON); its step count is used
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Sub-prompt set, SCPE or JSON (by extension), coarsest first
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    /// Gaussian width sigma [default: 3]
    #[arg(long)]
    sigma: Option<f64>,
    /// Comma-separated q_n values [default: 4,12,20,28]
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    qn_grid: Option<Vec<f64>>,
    /// Comma-separated seeds [default: 0]
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    seeds: Option<Vec<u64>>,
    /// Blend mode: renormalized or literal [default: renormalized]
    #[arg(long, value_parser = parse_mode)]
    mode: Option<BlendMode>,
    /// Report JSON file
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Distance CSV file [default: report path with a .csv extension]
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    /// Worker threads [default: 1]
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct ConvertArgs {
    /// Input sub-prompt set (.json or SCPE)
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    /// Output sub-prompt set (.json or SCPE)
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<BlendMode, String> {
    s.parse()
}

fn resolve_mode(config: &Config, flag: Option<BlendMode>) -> CliResult<BlendMode> {
    match flag {
        Some(m) => Ok(m),
        None => match config.string("mode", None)? {
            Some(s) => s.parse().map_err(CliError::precondition),
            None => Ok(BlendMode::default()),
        },
    }
}

fn csv_beside(report: &Path) -> PathBuf {
    report.with_extension("csv")
}

fn run(cli: Cli) -> CliResult<()> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let c = &config;
    match cli.command {
        Command::GenSubprompts(a) => {
            let prompt = c.string("prompt", a.prompt)?.ok_or_else(|| missing("prompt"))?;
            let out = c.required_path("out", a.out)?;
            let llm = LlmSettings {
                base_url: c.string("base_url", a.base_url)?,
                model_name: c.string("llm_model", a.llm_model)?,
                timeout_secs: c.u64("timeout_secs", a.timeout_secs)?,
                max_retries: c.u64("max_retries", a.max_retries)?,
                retry_backoff_ms: c.u64("retry_backoff_ms", a.retry_backoff_ms)?,
                temperature: c.f64("temperature", a.temperature)?,
            };
            commands::gen_subprompts(&prompt, &out, llm)
        }
        Command::Trajectory(a) => commands::trajectory_cmd(TrajectorySettings {
            embeddings: c.required_path("embeddings", a.embeddings)?,
            out: c.required_path("out", a.out)?,
            q_n: c.f64("q_n", a.q_n)?.unwrap_or(DEFAULT_QN),
            sigma: c.f64("sigma", a.sigma)?.unwrap_or(DEFAULT_SIGMA),
            steps: c.usize("steps", a.schedule.steps)?.unwrap_or(DEFAULT_STEPS),
            mode: resolve_mode(c, a.schedule.mode)?,
            verbose: c.flag("verbose", a.verbose)?,
        }),
        Command::Sweep(a) => commands::sweep_cmd(SweepSettings {
            embeddings: c.required_path("embeddings", a.embeddings)?,
            out_dir: c.required_path("out_dir", a.out_dir)?,
            sigma_grid: c.f64_list("sigma_grid", a.sigma_grid)?.unwrap_or(DEFAULT_SIGMA_GRID.to_vec()),
            qn_grid: c.f64_list("qn_grid", a.qn_grid)?.unwrap_or(DEFAULT_QN_GRID.to_vec()),
            steps: c.usize("steps", a.schedule.steps)?.unwrap_or(DEFAULT_STEPS),
            mode: resolve_mode(c, a.schedule.mode)?,
            jobs: c.usize("jobs", a.jobs)?.unwrap_or(1),
        }),
        Command::Simulate(a) => {
            let out = c.required_path("out", a.out)?;
            commands::simulate_cmd(SimulateSettings {
                model: c.required_path("model", a.model)?,
                trajectory: c.required_path("trajectory", a.trajectory)?,
                seeds: c.u64_list("seeds", a.seeds)?.unwrap_or(vec![0]),
                csv: c.path("csv", a.csv)?.unwrap_or_else(|| csv_beside(&out)),
                out,
                jobs: c.usize("jobs", a.jobs)?.unwrap_or(1),
            })
        }
        Command::Probe(a) => {
            let out = c.required_path("out", a.out)?;
            commands::probe_cmd(ProbeSettings {
                model: c.required_path("model", a.model)?,
                embeddings: c.required_path("embeddings", a.embeddings)?,
                sigma: c.f64("sigma", a.sigma)?.unwrap_or(DEFAULT_SIGMA),
                qn_grid: c.f64_list("qn_grid", a.qn_grid)?.unwrap_or(DEFAULT_QN_GRID.to_vec()),
                seeds: c.u64_list("seeds", a.seeds)?.unwrap_or(vec![0]),
                mode: resolve_mode(c, a.mode)?,
                csv: c.path("csv", a.csv)?.unwrap_or_else(|| csv_beside(&out)),
                out,
                jobs: c.usize("jobs", a.jobs)?.unwrap_or(1),
            })
        }
        Command::Convert(a) => commands::convert_cmd(
            &c.required_path("input", a.input)?,
            &c.required_path("output", a.output)?,
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(error::ExitKind::Precondition.code())
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("scope: {e}");
            ExitCode::from(e.kind.code())
        }
    }
}
