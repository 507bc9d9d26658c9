//! Command-line and JSON-config arguments. Every field is optional so that
//! flags can be layered over a config file before defaults are applied.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::censoring::CensoringSpec;
use crate::simulation::ScenarioConfig;

#[derive(Debug, Parser)]
#[command(name = "dcreg", version, about = "Age-specific logistic regression for doubly censored event times")]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// JSON config file; flags take precedence. A run manifest is accepted too.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the age-specific model to a dataset over a grid of ages.
    Fit(FitArgs),
    /// Run a Monte Carlo study for a scenario preset or JSON scenario.
    Simulate(SimulateArgs),
    /// Append LOESS-smoothed columns to a coefficients CSV.
    Smooth(SmoothArgs),
    /// Plug-in asymptotic-variance difference between approaches A and B.
    Diagnose(DiagnoseArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Simulate(_) => "simulate",
            Command::Smooth(_) => "smooth",
            Command::Diagnose(_) => "diagnose",
        }
    }
}

/// Ages as `start:end:step`, a comma list, or (in JSON) numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridArg {
    Ages(Vec<f64>),
    Age(f64),
    Text(String),
}

impl FromStr for GridArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(GridArg::Text(s.to_string()))
    }
}

impl GridArg {
    pub fn resolve(&self) -> crate::Result<Vec<f64>> {
        match self {
            GridArg::Text(s) => crate::data::parse_t0_grid(s),
            GridArg::Age(t) => crate::data::parse_t0_grid(&t.to_string()),
            GridArg::Ages(v) => {
                crate::data::validate_grid(v)?;
                Ok(v.clone())
            }
        }
    }
}

/// Censoring methods as a comma list of names or (in JSON) full specs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MethodsArg {
    Specs(Vec<CensoringSpec>),
    Spec(CensoringSpec),
    Names(String),
}

impl FromStr for MethodsArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(MethodsArg::Names(s.to_string()))
    }
}

/// A scenario file path or (in JSON) an inline scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioArg {
    Inline(Box<ScenarioConfig>),
    Path(PathBuf),
}

impl FromStr for ScenarioArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(ScenarioArg::Path(PathBuf::from(s)))
    }
}

/// Forest hyperparameters shared by `fit`, `simulate` and `diagnose`.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestArgs {
    /// Number of trees in the survival forest.
    #[arg(long)]
    pub trees: Option<usize>,
    /// Minimum node size of the survival forest.
    #[arg(long)]
    pub node_size: Option<usize>,
    /// Candidate split variables per node.
    #[arg(long)]
    pub mtry: Option<usize>,
    /// Out-of-bag prediction for training subjects.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub oob: Option<bool>,
    /// Forest seed (default: the run seed).
    #[arg(long)]
    pub forest_seed: Option<u64>,
    /// Entry gap for the gap-time Cox model.
    #[arg(long)]
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitArgs {
    /// Input CSV with columns u, delta, v, optional c, and covariates.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Analysis ages, e.g. 17:40:1 or 21,30,40.
    #[arg(long)]
    pub t0: Option<GridArg>,
    /// Approaches: im, a, b (comma separated).
    #[arg(long)]
    pub approach: Option<String>,
    /// Censoring methods: ecdf, km, cox, coxgap, srf (comma separated).
    #[arg(long)]
    pub censoring: Option<MethodsArg>,
    #[command(flatten)]
    pub forest: ForestArgs,
    /// Standard errors: sandwich, bootstrap or both.
    #[arg(long)]
    pub se: Option<String>,
    /// Bootstrap replicates.
    #[arg(long)]
    pub bootstrap_reps: Option<usize>,
    /// Keep the full-data censoring model inside bootstrap resamples.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub frozen_g: Option<bool>,
    /// Confidence level of the Wald intervals.
    #[arg(long)]
    pub level: Option<f64>,
    /// Start each age from the previous age's estimate.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub warm_start: Option<bool>,
    /// Seed (default: DCREG_SEED, else 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// Scenario preset: s11, s12, s2, s3.
    #[arg(long)]
    pub preset: Option<String>,
    /// Scenario JSON file (overrides the preset).
    #[arg(long)]
    pub scenario: Option<ScenarioArg>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Subjects per replication.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Censoring methods, including `true` (comma separated).
    #[arg(long)]
    pub methods: Option<MethodsArg>,
    /// Approaches: im, a, b (comma separated).
    #[arg(long)]
    pub approaches: Option<String>,
    /// Event-time generator: backward or inverse.
    #[arg(long)]
    pub generator: Option<String>,
    /// Analysis ages (default: the scenario's grid).
    #[arg(long)]
    pub t0: Option<GridArg>,
    #[command(flatten)]
    pub forest: ForestArgs,
    /// Compute sandwich standard errors for every fit.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub sandwich: Option<bool>,
    /// Also write survival_comparison.csv.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub survival: Option<bool>,
    /// Also write av_difference.csv (needs approaches a and b).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub av_difference: Option<bool>,
    /// Rerun with the other generator and write generator_comparison.csv.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub compare_generator: Option<bool>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothArgs {
    /// CSV with t0 and estimate columns (e.g. coefficients.csv).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// LOESS spans (comma separated).
    #[arg(long)]
    pub spans: Option<String>,
    /// Local polynomial degree (1 or 2).
    #[arg(long)]
    pub degree: Option<usize>,
    /// Column to smooth.
    #[arg(long)]
    pub column: Option<String>,
    /// Output CSV (default: rewrite the input).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub t0: Option<GridArg>,
    /// A single censoring method.
    #[arg(long)]
    pub censoring: Option<MethodsArg>,
    #[command(flatten)]
    pub forest: ForestArgs,
    /// Coefficients `alpha,beta1,...` to evaluate at; default fits approach A.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Field-wise `self.or(config)`.
pub trait Layer {
    fn layer(self, under: Self) -> Self;
}

macro_rules! layer_impl {
    ($t:ty; $($f:ident),*; $($nested:ident),*) => {
        impl Layer for $t {
            fn layer(self, under: Self) -> Self {
                Self { $($f: self.$f.or(under.$f),)* $($nested: self.$nested.layer(under.$nested),)* }
            }
        }
    };
}

layer_impl!(ForestArgs; trees, node_size, mtry, oob, forest_seed, gap;);
layer_impl!(FitArgs; data, t0, approach, censoring, se, bootstrap_reps, frozen_g, level, warm_start, seed, out; forest);
layer_impl!(SimulateArgs; preset, scenario, reps, n, seed, methods, approaches, generator, t0, sandwich, survival,
    av_difference, compare_generator, out; forest);
layer_impl!(SmoothArgs; input, spans, degree, column, output;);
layer_impl!(DiagnoseArgs; data, t0, censoring, theta, seed, out; forest);
