use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Utility-based dose optimization: sizing, selection bias and trial simulation.
///
/// Probabilities are on [0, 1]; times are in weeks; hazards are per week.
#[derive(Debug, Parser)]
#[command(name = "doseopt", version)]
pub struct Cli {
    /// Worker threads for simulations (default: all cores).
    #[arg(long, global = true, env = "DOSEOPT_WORKERS")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample size and selection threshold for a two-dose selection stage.
    Design(DesignArgs),
    /// Selection bias of the selected dose's response rate (or survival).
    Bias(ChainArgs),
    /// Type I error of confirmatory tests that reuse Stage-1 data.
    Type1(ChainArgs),
    /// Run Monte Carlo scenarios from a TOML config file.
    Simulate(SimulateArgs),
    /// Regenerate a reference table and diff it against the published values.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Approx,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChoiceArg {
    Smallest,
    Largest,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    /// Response rate of the high dose (probability).
    #[arg(long)]
    pub p: f64,
    /// No-AE rate of the low dose (probability); not needed with --rose.
    #[arg(long)]
    pub q: Option<f64>,
    /// Efficacy margin: response deficit of the low dose in S_H (probability).
    #[arg(long)]
    pub delta: f64,
    /// Safety margin: no-AE deficit of the high dose in S_L (probability); not needed with --rose.
    #[arg(long)]
    pub d: Option<f64>,
    /// Efficacy-safety phi correlation.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub phi: f64,
    /// Target PCS in both scenarios.
    #[arg(long, default_value_t = 0.8)]
    pub alpha: f64,
    /// Target PCS under S_L (overrides --alpha).
    #[arg(long)]
    pub alpha_l: Option<f64>,
    /// Target PCS under S_H (overrides --alpha).
    #[arg(long)]
    pub alpha_h: Option<f64>,
    /// Efficacy-only selection, utilities (1, 1, 0, 0).
    #[arg(long)]
    pub rose: bool,
    /// Utility scores "u1,u2,u3,u4" replacing the margin-derived ones.
    #[arg(long, allow_hyphen_values = true)]
    pub utilities: Option<String>,
    #[arg(long, value_enum, default_value_t = MethodArg::Approx)]
    pub method: MethodArg,
    /// Threshold reported when several are feasible at the minimal n (exact method).
    #[arg(long, value_enum, default_value_t = ChoiceArg::Largest)]
    pub lambda_choice: ChoiceArg,
    /// Largest per-arm n examined by the exact search.
    #[arg(long, default_value_t = 5000)]
    pub n_cap: u64,
    /// Also estimate PCS by simulation with this many replications per scenario.
    #[arg(long)]
    pub empirical: Option<u64>,
    /// RNG seed for --empirical.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestArg {
    Z,
    Binomial,
    Landmark,
    Exp,
    Cox,
    All,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    /// Common response rate of both doses under the null (defaults to --p0).
    #[arg(long)]
    pub p: Option<f64>,
    /// Null response rate of the confirmatory test (defaults to --p).
    #[arg(long)]
    pub p0: Option<f64>,
    /// Common no-AE rate of both doses.
    #[arg(long)]
    pub q: Option<f64>,
    /// Efficacy-safety phi correlation.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub phi: f64,
    /// Utility scores "u1,u2,u3,u4".
    #[arg(long, allow_hyphen_values = true)]
    pub utilities: Option<String>,
    /// Utilities from margins: efficacy margin (requires --d).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Utilities from margins: safety margin (requires --delta).
    #[arg(long)]
    pub d: Option<f64>,
    /// Selection on response only, utilities (1, 1, 0, 0).
    #[arg(long)]
    pub response_only: bool,
    /// Per-patient utility SD, overriding the model value.
    #[arg(long)]
    pub sigma_u: Option<f64>,
    /// Per-patient Cov(X, U), overriding the model value.
    #[arg(long, allow_negative_numbers = true)]
    pub cov_xu: Option<f64>,
    /// Stage-1 patients per dose.
    #[arg(long)]
    pub n1: u64,
    /// Stage-2 patients on the selected dose (default: n-total - n1).
    #[arg(long)]
    pub n2: Option<u64>,
    /// Total patients on the selected dose, n1 + n2.
    #[arg(long, default_value_t = 200)]
    pub n_total: u64,
    /// Minimum required utility advantage of the high dose.
    #[arg(long, default_value_t = 0.0)]
    pub lambda_u: f64,
    /// One-sided significance level.
    #[arg(long, default_value_t = 0.025)]
    pub alpha: f64,
    /// Use the conservative bounds, which need no covariance inputs.
    #[arg(long)]
    pub max: bool,
    /// Hazard-scale bounds through the landmark bridge (implies --tte).
    #[arg(long)]
    pub bridge: bool,
    /// Include the time-to-event endpoints.
    #[arg(long)]
    pub tte: bool,
    /// Which test to report (type1 only).
    #[arg(long, value_enum, default_value_t = TestArg::All)]
    pub test: TestArg,
    /// Null hazard per week.
    #[arg(long, default_value_t = 0.1)]
    pub lambda0: f64,
    /// Landmark time (weeks).
    #[arg(long, default_value_t = 24.0)]
    pub tau: f64,
    /// Accrual window (weeks), used for the default event counts.
    #[arg(long, default_value_t = 52.0)]
    pub t_entry: f64,
    /// Analysis time (weeks), used for the default event counts.
    #[arg(long, default_value_t = 76.0)]
    pub t_admin: f64,
    /// Events on the selected dose (default: expected under the null).
    #[arg(long)]
    pub d_events: Option<f64>,
    /// Events on both arms of the two-sample test (default: twice --d-events).
    #[arg(long)]
    pub d_total: Option<f64>,
    /// Per-patient Cov(S(tau), U).
    #[arg(long, allow_negative_numbers = true)]
    pub cov_su: Option<f64>,
    /// Per-patient Cov(T, U) in weeks.
    #[arg(long, allow_negative_numbers = true)]
    pub cov_tu: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario config (TOML).
    pub config: PathBuf,
    /// Output CSV (default: the config path with a .csv extension).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the config's replication count.
    #[arg(long)]
    pub replications: Option<u64>,
    /// Override the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SizingArg {
    Approx,
    Exact,
    Both,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// Table number, 1 to 6.
    #[arg(value_parser = clap::value_parser!(u8).range(1..=6))]
    pub table: u8,
    /// Monte Carlo replications per scenario.
    #[arg(long, default_value_t = 100_000)]
    pub replications: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Sizing methods for table 1.
    #[arg(long, value_enum, default_value_t = SizingArg::Both)]
    pub method: SizingArg,
    /// Table 1: also estimate every PCS cell by simulation.
    #[arg(long)]
    pub empirical: bool,
    /// Output directory for the table, diff report and manifest.
    #[arg(long, default_value = "reproduce")]
    pub out_dir: PathBuf,
    /// Exit with code 4 when any cell falls outside its tolerance.
    #[arg(long)]
    pub strict: bool,
}
