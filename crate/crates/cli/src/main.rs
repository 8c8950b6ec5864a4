mod artifact;
mod config;
mod decode;
mod error;
mod report;
mod train;
mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vasamp_core::decode::DecodeMode;
use vasamp_core::eval::CostModel;

use crate::config::{Resolved, RunConfig};
use crate::error::{CliError, CliResult};
use crate::report::{Estimation, Factor, Source};

const AFTER_HELP: &str = "\
Exit codes: 0 ok, 2 config error, 3 training divergence, 4 missing artifact, 5 verification failure.
Set VASAMP_LOG (error, warn, info, debug, trace) to control log verbosity on stderr.";

#[derive(Parser, Debug)]
#[command(
    name = "vasamp",
    version,
    about = "Value augmented sampling experiments on small, exactly enumerable token MDPs",
    after_help = AFTER_HELP
)]
struct Cli {
    /// TOML run configuration
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: ./out]
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for grid sweeps; results do not depend on it
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Collect base-policy trajectories and fit a value estimator with TD(lambda)
    TrainValue,
    /// Decode trajectories with a trained estimator
    Decode(DecodeArgs),
    /// Write the KL-reward frontier of VAS, the tilted optimum, Best-of-N and the base policy
    Frontier(FrontierArgs),
    /// Run one ablation and write a two-or-more-arm report
    Ablate(AblateArgs),
    /// Print the inference cost of policy-only, Best-of-N and VAS decoding
    BenchCost(BenchCostArgs),
    /// Verify every oracle identity on the configured instance
    OracleCheck,
    /// Decode with a weighted sum of estimator checkpoints and write its frontier
    Compose(ComposeArgs),
}

#[derive(Args, Debug)]
struct DecodeArgs {
    /// Estimator checkpoint [default: <out>/checkpoint.json]
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Tilt strength [default: decode.beta]
    #[arg(long)]
    beta: Option<f64>,
    /// Candidates per step for topk and blackbox_rerank
    #[arg(long)]
    k: Option<usize>,
    /// full, topk or blackbox_rerank
    #[arg(long)]
    mode: Option<DecodeMode>,
    /// Number of trajectories
    #[arg(long, default_value_t = 1)]
    n: usize,
}

#[derive(Args, Debug)]
struct FrontierArgs {
    /// Where VAS values come from
    #[arg(long, value_enum, default_value_t = Source::Exact)]
    source: Source,
    /// Estimator checkpoint for --source learned [default: <out>/checkpoint.json]
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Exact expectations or Monte Carlo estimates with standard errors
    #[arg(long, value_enum, default_value_t = Estimation::Exact)]
    estimation: Estimation,
    /// Samples per beta for --estimation mc
    #[arg(long, default_value_t = 2000)]
    n_samples: usize,
}

#[derive(Args, Debug)]
struct AblateArgs {
    /// Factor to vary
    #[arg(long, value_enum)]
    factor: Factor,
    /// Where VAS values come from
    #[arg(long, value_enum, default_value_t = Source::Exact)]
    source: Source,
    /// Estimator checkpoint for --source learned [default: <out>/checkpoint.json]
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Top-k size for the fallback ablation [default: decode.top_k]
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args, Debug)]
struct BenchCostArgs {
    /// Per-token cost of the base model
    #[arg(long)]
    m: Option<f64>,
    /// Per-token cost of the value model
    #[arg(long)]
    n: Option<f64>,
    /// Response length
    #[arg(long)]
    t: Option<f64>,
    /// Candidates scored per step
    #[arg(long)]
    k: Option<f64>,
    /// Best-of-N sample count
    #[arg(long = "big-n", value_name = "N")]
    big_n: Option<f64>,
}

#[derive(Args, Debug)]
struct ComposeArgs {
    /// Estimator checkpoint; repeat once per component
    #[arg(long = "checkpoint", value_name = "PATH", required = true)]
    checkpoints: Vec<PathBuf>,
    /// Comma-separated weights, one per checkpoint
    #[arg(
        long,
        value_delimiter = ',',
        required = true,
        allow_hyphen_values = true
    )]
    weights: Vec<f64>,
}

fn resolve(cli: &Cli) -> CliResult<Resolved> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("this command needs --config".into()))?;
    let mut c = RunConfig::load(path)?;
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(o) = &cli.out {
        c.out = Some(o.clone());
    }
    c.resolve()
}

fn checkpoint_path(explicit: &Option<PathBuf>, out: &Path) -> PathBuf {
    explicit
        .clone()
        .unwrap_or_else(|| out.join("checkpoint.json"))
}

fn learned(
    source: Source,
    explicit: &Option<PathBuf>,
    out: &Path,
) -> CliResult<Option<artifact::LoadedEstimator>> {
    match source {
        Source::Learned => Ok(Some(artifact::load_checkpoint(&checkpoint_path(
            explicit, out,
        ))?)),
        Source::Exact => Ok(None),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if cli.jobs == 0 {
        return Err(CliError::Config("--jobs must be >= 1".into()));
    }
    if let Command::BenchCost(a) = &cli.command {
        let (mut model, checksum) = match &cli.config {
            Some(_) => {
                let r = resolve(&cli)?;
                (r.config.cost.clone(), Some(r.checksum))
            }
            None => (CostModel::default(), None),
        };
        for (slot, v) in [
            (&mut model.m, a.m),
            (&mut model.n, a.n),
            (&mut model.t, a.t),
            (&mut model.k, a.k),
            (&mut model.big_n, a.big_n),
        ] {
            if v.is_some() {
                *slot = v;
            }
        }
        return report::bench_cost(&model, checksum.as_deref(), cli.out.as_deref());
    }

    let r = resolve(&cli)?;
    let out = r.out_dir();
    log::info!("config {} checksum {}", r.config.name, r.checksum);
    match &cli.command {
        Command::TrainValue => train::run(&r, &out),
        Command::Decode(a) => {
            let est = artifact::load_checkpoint(&checkpoint_path(&a.checkpoint, &out))?;
            let o = decode::DecodeOverrides {
                beta: a.beta,
                k: a.k,
                mode: a.mode,
                n: a.n,
            };
            decode::run(&r, &est, &o, &out)
        }
        Command::Frontier(a) => {
            let est = learned(a.source, &a.checkpoint, &out)?;
            let args = report::FrontierArgs {
                source: a.source,
                estimation: a.estimation,
                n_samples: a.n_samples,
            };
            report::frontier(&r, est.as_ref(), &args, cli.jobs, &out)
        }
        Command::Ablate(a) => {
            let est = learned(a.source, &a.checkpoint, &out)?;
            let args = report::AblateArgs {
                factor: a.factor,
                source: a.source,
                k: a.k,
            };
            report::ablate(&r, est.as_ref(), &args, &out)
        }
        Command::OracleCheck => verify::run(&r),
        Command::Compose(a) => {
            if a.weights.len() != a.checkpoints.len() {
                return Err(CliError::Config(format!(
                    "{} weights for {} checkpoints",
                    a.weights.len(),
                    a.checkpoints.len()
                )));
            }
            let parts = a
                .checkpoints
                .iter()
                .map(|p| artifact::load_checkpoint(p))
                .collect::<CliResult<Vec<_>>>()?;
            report::compose_cmd(&r, parts, &a.weights, cli.jobs, &out)
        }
        Command::BenchCost(_) => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VASAMP_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vasamp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
