//! Flag groups shared by several subcommands.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use hdtwin::baselines::SindyConfig;
use hdtwin::optim::OptimConfig;
use hdtwin::systems::{GenConfig, Intervention, SplitRule};

/// `LO,HI` on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range(pub f64, pub f64);

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(',').ok_or_else(|| format!("expected LO,HI, got `{s}`"))?;
        let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
        Ok(Range(parse(a)?, parse(b)?))
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.0, self.1)
    }
}

/// `counts:TRAIN,VAL,TEST` or `fractions:TRAIN,VAL,TEST`.
pub fn parse_split(s: &str) -> Result<SplitRule, String> {
    let (kind, rest) = s
        .split_once(':')
        .ok_or_else(|| format!("expected counts:A,B,C or fractions:A,B,C, got `{s}`"))?;
    let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("split needs three values, got `{rest}`"));
    }
    match kind {
        "counts" => {
            let n = parts
                .iter()
                .map(|p| p.parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(SplitRule::Counts {
                train: n[0],
                val: n[1],
                test: n[2],
            })
        }
        "fractions" => {
            let f = parts
                .iter()
                .map(|p| p.parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(SplitRule::Fractions {
                train: f[0],
                val: f[1],
                test: f[2],
            })
        }
        _ => Err(format!("unknown split kind `{kind}`")),
    }
}

#[derive(Debug, Clone, Args)]
pub struct OptimArgs {
    #[arg(long, default_value_t = OptimConfig::default().learning_rate)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = OptimConfig::default().batch_size)]
    pub batch_size: usize,
    #[arg(long, default_value_t = OptimConfig::default().max_epochs)]
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    #[arg(long, default_value_t = OptimConfig::default().patience)]
    pub patience: usize,
    #[arg(long, default_value_t = OptimConfig::default().beta1)]
    pub beta1: f64,
    #[arg(long, default_value_t = OptimConfig::default().beta2)]
    pub beta2: f64,
    #[arg(long, default_value_t = OptimConfig::default().eps)]
    pub eps: f64,
}

impl OptimArgs {
    pub fn config(&self, seed: u64) -> OptimConfig {
        OptimConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            seed,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    /// Trajectories per split [default: the system's own]
    #[arg(long)]
    pub trajectories: Option<usize>,
    /// Draw test initial states from a disjoint range.
    #[arg(long)]
    pub ood: bool,
    #[arg(long, default_value_t = Range(GenConfig::default().ood_train_range.0, GenConfig::default().ood_train_range.1))]
    pub ood_train_range: Range,
    #[arg(long, default_value_t = Range(GenConfig::default().ood_test_range.0, GenConfig::default().ood_test_range.1))]
    pub ood_test_range: Range,
    #[arg(long, default_value_t = GenConfig::default().ood_dt)]
    pub ood_dt: f64,
    /// Scale one true parameter partway through every test trajectory.
    #[arg(long)]
    pub intervene: bool,
    #[arg(long, default_value_t = Intervention::default().day)]
    pub intervention_day: f64,
    #[arg(long, default_value_t = Intervention::default().param)]
    pub intervention_param: String,
    #[arg(long, default_value_t = Intervention::default().factor)]
    pub intervention_factor: f64,
    /// Time step override [default: the system's own]
    #[arg(long)]
    pub dt: Option<f64>,
    /// First-state initial range override, LO,HI [default: the system's own]
    #[arg(long)]
    pub init_range: Option<Range>,
}

impl GenArgs {
    pub fn config(&self, seed: u64) -> GenConfig {
        GenConfig {
            trajectories: self.trajectories,
            seed,
            ood: self.ood,
            ood_train_range: (self.ood_train_range.0, self.ood_train_range.1),
            ood_test_range: (self.ood_test_range.0, self.ood_test_range.1),
            ood_dt: self.ood_dt,
            intervention: self.intervene.then(|| Intervention {
                day: self.intervention_day,
                param: self.intervention_param.clone(),
                factor: self.intervention_factor,
            }),
            dt: self.dt,
            init_range: self.init_range.map(|r| (r.0, r.1)),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SindyArgs {
    /// Maximum monomial degree of the library.
    #[arg(long, default_value_t = SindyConfig::default().degree)]
    pub sindy_degree: usize,
    /// Ridge strength inside each thresholded solve.
    #[arg(long, default_value_t = SindyConfig::default().alpha)]
    pub sindy_alpha: f64,
    /// Coefficient cut-off [default: 0.02, or 1e-5 for seir-covid]
    #[arg(long)]
    pub sindy_threshold: Option<f64>,
    #[arg(long, default_value_t = SindyConfig::default().max_iter)]
    pub sindy_max_iter: usize,
}

impl SindyArgs {
    pub fn config(&self, system: &str) -> SindyConfig {
        let base = if system == "seir-covid" {
            SindyConfig::covid()
        } else {
            SindyConfig::default()
        };
        SindyConfig {
            degree: self.sindy_degree,
            alpha: self.sindy_alpha,
            threshold: self.sindy_threshold.unwrap_or(base.threshold),
            max_iter: self.sindy_max_iter,
        }
    }
}

/// Existing data bundle, or generated data.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Data bundle written by `gen-data`; generated from the system when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub gen: GenArgs,
}
