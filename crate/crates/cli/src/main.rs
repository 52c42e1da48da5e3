mod artifacts;
mod commands;
mod config;
mod figures;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use config::{Lambda, RunConfig};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// A configuration value outside its valid range (exit code 1).
#[derive(Debug)]
pub struct InvalidConfig(pub String);

impl std::fmt::Display for InvalidConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for InvalidConfig {}

/// A required input artifact that does not exist (exit code 2).
#[derive(Debug)]
pub struct MissingInput(pub PathBuf);

impl std::fmt::Display for MissingInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "missing input artifact: {}", self.0.display())
    }
}

impl std::error::Error for MissingInput {}

pub fn read_input(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(MissingInput(path.to_path_buf()).into());
    }
    Ok(std::fs::read_to_string(path)?)
}

#[derive(Parser)]
#[command(name = "cascade-lab", version, about = "Line-failure cascade simulation and interaction learning")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON); a run manifest is accepted too.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, env = "CASCADE_LAB_SEED")]
    seed: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Case file (default: bundled IEEE 118-bus case).
    #[arg(long, global = true)]
    grid: Option<PathBuf>,
}

#[derive(Args, Default)]
struct LearnArgs {
    /// Dataset file.
    #[arg(long)]
    data: PathBuf,
    /// Number, `auto` (sample-size rule) or `default` (per variant).
    #[arg(long)]
    lambda: Option<Lambda>,
    #[arg(long)]
    delta_minus: Option<f64>,
    #[arg(long)]
    delta_plus: Option<f64>,
    #[arg(long)]
    output: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a trajectory dataset.
    Simulate {
        #[arg(long)]
        variant: Option<cascade_lab::Variant>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        p_f: Option<f64>,
        /// Seed domain: `training` or `evaluation` (fresh test data).
        #[arg(long, default_value = "training")]
        domain: String,
        #[arg(long, default_value = "dataset.jsonl")]
        output: String,
    },
    /// Fit a static interaction model to the distinct final states.
    LearnStatic(LearnArgs),
    /// Fit a kinetic interaction model to the trajectories.
    LearnKinetic(LearnArgs),
    /// Glauber samples from a static model and cascade-size statistics.
    Sample {
        #[arg(long)]
        model: PathBuf,
        /// Dataset whose final states set the reference statistics.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        n_samples: Option<usize>,
        #[arg(long)]
        chains: Option<usize>,
    },
    /// Flow graph, map-equation clusters and the co-susceptibility ratio.
    Cluster {
        #[arg(long)]
        model: PathBuf,
        /// Dataset for the co-susceptibility ratio; skipped when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        teleport: Option<f64>,
        #[arg(long)]
        n_null: Option<usize>,
    },
    /// ROC of a static (neighbor flips) or kinetic (rollouts) model.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        /// Fresh dataset simulated with `--domain evaluation`.
        #[arg(long)]
        test: PathBuf,
        /// Neighbor flips for static models.
        #[arg(long, value_delimiter = ',', default_value = "0,2")]
        flip: Vec<usize>,
    },
    /// Edge distances, LODFs and correlations.
    Metrics {
        /// Outaged line for an LODF column.
        #[arg(long)]
        lodf: Option<usize>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Line pair for plain and conditional correlations.
        #[arg(long, num_args = 2, value_names = ["I", "J"])]
        pair: Option<Vec<usize>>,
        /// Conditioning lines for the correlations.
        #[arg(long, value_delimiter = ',')]
        given: Vec<usize>,
    },
    /// Data behind a figure: fig1, fig3, fig4, fig5, fig6, fig7, fig8,
    /// optionally with a panel letter (e.g. fig4a).
    Figures { name: String },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::LearnStatic(_) => "learn-static",
            Command::LearnKinetic(_) => "learn-kinetic",
            Command::Sample { .. } => "sample",
            Command::Cluster { .. } => "cluster",
            Command::Evaluate { .. } => "evaluate",
            Command::Metrics { .. } => "metrics",
            Command::Figures { .. } => "figures",
        }
    }
}

fn resolve_config(common: &Common, command: &Command) -> Result<RunConfig> {
    let mut c = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = common.seed {
        c.seed = v;
    }
    if let Some(v) = &common.out {
        c.out = v.clone();
    }
    if let Some(v) = &common.grid {
        c.grid = Some(v.clone());
    }
    match command {
        Command::Simulate { variant, m, p_f, .. } => {
            c.variant = variant.unwrap_or(c.variant);
            c.m_target = m.unwrap_or(c.m_target);
            c.p_f = p_f.or(c.p_f);
        }
        Command::LearnStatic(a) | Command::LearnKinetic(a) => {
            c.lambda = a.lambda.unwrap_or(c.lambda);
            c.delta_minus = a.delta_minus.unwrap_or(c.delta_minus);
            c.delta_plus = a.delta_plus.unwrap_or(c.delta_plus);
        }
        Command::Sample { n_samples, chains, .. } => {
            c.n_samples = n_samples.or(c.n_samples);
            c.chains = chains.unwrap_or(c.chains);
        }
        Command::Cluster { teleport, n_null, .. } => {
            c.teleport = teleport.unwrap_or(c.teleport);
            c.n_null = n_null.unwrap_or(c.n_null);
        }
        _ => {}
    }
    c.validate()?;
    Ok(c)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.common.jobs {
        if jobs == 0 {
            return Err(InvalidConfig("--jobs must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    let config = resolve_config(&cli.common, &cli.command)?;
    let mut run = artifacts::Run::start(cli.command.name(), &config)?;
    match cli.command {
        Command::Simulate { domain, output, .. } => commands::simulate(&mut run, &domain, &output)?,
        Command::LearnStatic(a) => commands::learn_static(&mut run, &a.data, a.output.as_deref())?,
        Command::LearnKinetic(a) => commands::learn_kinetic(&mut run, &a.data, a.output.as_deref())?,
        Command::Sample { model, data, .. } => commands::sample(&mut run, &model, data.as_deref())?,
        Command::Cluster { model, data, .. } => commands::cluster(&mut run, &model, data.as_deref())?,
        Command::Evaluate { model, test, flip } => commands::evaluate(&mut run, &model, &test, &flip)?,
        Command::Metrics { lodf, data, pair, given } => {
            commands::metrics(&mut run, lodf, data.as_deref(), pair.as_deref(), &given)?
        }
        Command::Figures { name } => figures::figure(&mut run, &name)?,
    }
    run.finish()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<MissingInput>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
