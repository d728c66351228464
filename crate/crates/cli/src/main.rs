mod args;
mod config;
mod report;
mod run;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use hdtwin::orchestrator::{OrchestratorError, TestMetric};

use crate::args::{parse_split, DataArgs, GenArgs, OptimArgs, SindyArgs};

#[derive(Debug, Parser)]
#[command(name = "hdtwin", version, about = "Evolve, fit and evaluate hybrid digital twins")]
struct Cli {
    /// More log output (-v info, -vv debug); RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate train/val/test splits of a benchmark system.
    GenData {
        #[arg(long)]
        system: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Split one recorded trajectory instead of simulating.
        #[arg(long)]
        from_csv: Option<PathBuf>,
        /// counts:A,B,C or fractions:A,B,C [default: the system's own rule]
        #[arg(long, value_parser = parse_split)]
        split: Option<hdtwin::systems::SplitRule>,
        #[command(flatten)]
        gen: GenArgs,
    },
    /// Fit the parameters of one model spec.
    Fit {
        #[arg(long)]
        spec: PathBuf,
        /// Data bundle written by `gen-data`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seeds network initialisation and batch order.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = TestMetric::OneStep)]
        metric: TestMetric,
        #[command(flatten)]
        optim: OptimArgs,
    },
    /// Run an experiment described by a config file.
    Evolve {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a baseline model.
    Baseline {
        #[arg(long)]
        system: String,
        /// A baseline id or `sindy`.
        #[arg(long)]
        id: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = TestMetric::OneStep)]
        metric: TestMetric,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        optim: OptimArgs,
        #[command(flatten)]
        sindy: SindyArgs,
    },
    /// Print the losses of fitted parameters on one split.
    Eval {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        params: PathBuf,
        /// A split directory inside a data bundle, such as `data/test`.
        #[arg(long)]
        data: PathBuf,
    },
    /// Aggregate test MSE across run archives.
    Report {
        /// Archive directories, or directories holding archives.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure classes, one exit code each.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
    Transport(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Run(_) => 3,
            Failure::Transport(_) => 4,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Run(e) | Failure::Transport(e) => e,
        }
    }
}

impl From<OrchestratorError> for Failure {
    fn from(e: OrchestratorError) -> Self {
        match e {
            OrchestratorError::Config(_) => Failure::Config(e.into()),
            OrchestratorError::Transport { .. } => Failure::Transport(e.into()),
            _ => Failure::Run(e.into()),
        }
    }
}

pub trait ConfigContext<T> {
    fn config_err(self) -> Result<T, Failure>;
    fn run_err(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ConfigContext<T> for Result<T, E> {
    fn config_err(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn run_err(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Run(e.into()))
    }
}

/// `METRICS k=v ...`, the machine-readable line ending a run's output.
pub fn metrics_line(pairs: &[(&str, String)]) -> String {
    let mut s = String::from("METRICS");
    for (k, v) in pairs {
        let _ = write!(s, " {k}={}", v.replace(char::is_whitespace, "_"));
    }
    s
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::GenData {
            system,
            seed,
            out,
            from_csv,
            split,
            gen,
        } => run::gen_data(&system, seed, &out, from_csv.as_deref(), split, &gen),
        Command::Fit {
            spec,
            data,
            out,
            seed,
            metric,
            optim,
        } => run::fit(&spec, &data, &out, seed, metric, &optim),
        Command::Evolve { config, out } => run::evolve(&config, out.as_deref()),
        Command::Baseline {
            system,
            id,
            seed,
            out,
            metric,
            data,
            optim,
            sindy,
        } => run::baseline(&system, &id, seed, &out, metric, &data, &optim, &sindy),
        Command::Eval { spec, params, data } => run::eval(&spec, &params, &data),
        Command::Report { dirs, out } => report::report(&dirs, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let help = config::config_help();
    let command = Cli::command()
        .after_long_help(help.clone())
        .mut_subcommand("evolve", |c| c.after_help(help));
    let cli = match command
        .try_get_matches()
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };

    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
