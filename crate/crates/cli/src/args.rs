use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "spreadlab", version, about = "Spread measures, the planted model and second moments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Maximal spread factor, and a pass/fail verdict at --r.
    SpreadCheck(SpreadCheckArgs),
    /// Draws from the planted coupling, with exact checks when enumerable.
    PlantedSim(PlantedSimArgs),
    /// Truncated and unrestricted second moments.
    Moments(MomentsArgs),
    /// Traces of the iterated coupling.
    CouplingRun(CouplingRunArgs),
    /// Cover probability over a grid of p.
    ThresholdSweep(ThresholdSweepArgs),
    /// Second moments of the perfect-matching family at p = ln(n)/n.
    MatchingDemo(MatchingDemoArgs),
    /// Writes a builtin family in the family file format.
    FamilyGen(FamilyGenArgs),
    /// Runs the subcommand named by a config file.
    Run(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Builtin {
    /// Perfect matchings of K_n (--n even, at most 12).
    Matchings,
    /// All k-subsets of [n] (--n, --k).
    KUniform,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FamilyArgs {
    /// Builtin family.
    #[arg(long, value_enum, conflicts_with = "family_file")]
    pub family: Option<Builtin>,
    /// Family file (N= header, one set per line, optional w= weights).
    #[arg(long)]
    pub family_file: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// k-uniform only: binomial formulas, no member list.
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value_t = false, default_missing_value = "true")]
    pub closed_form: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CommonArgs {
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the JSON summary here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub budget: BudgetArgs,
}

/// Overrides for the enumeration caps. Defaults come from the library, then
/// from `SPREADLAB_BUDGET` (for example `pairs=1e8,bits=22`).
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct BudgetArgs {
    #[arg(long)]
    pub budget_pairs: Option<f64>,
    #[arg(long)]
    pub budget_candidates: Option<f64>,
    #[arg(long)]
    pub budget_bits: Option<u32>,
    #[arg(long)]
    pub budget_work: Option<f64>,
    #[arg(long)]
    pub budget_members: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SpreadCheckArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long)]
    pub r: Option<f64>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PlantedSimArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long)]
    pub p: f64,
    /// Truncation level; defaults to (pR*)^(-1/3).
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
    /// Per-draw records as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathArg {
    Auto,
    Pairs,
    ClosedForm,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MomentsArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long, required_unless_present = "p_grid")]
    pub p: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
    /// Batch mode: comma-separated p values.
    #[arg(long, value_delimiter = ',')]
    pub p_grid: Option<Vec<f64>>,
    /// Batch mode: comma-separated δ values.
    #[arg(long, value_delimiter = ',')]
    pub delta_grid: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = PathArg::Auto)]
    pub path: PathArg,
    /// Batch rows as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CouplingRunArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Per-round noise level; defaults to 700³/R* when that is below 1.
    #[arg(long)]
    pub q: Option<f64>,
    /// Rounds; defaults to ceil(ln k).
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
    /// One JSON object per trace.
    #[arg(long)]
    pub traces: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepModeArg {
    Exact,
    Mc,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ThresholdSweepArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',', default_values_t = default_grid())]
    pub p_grid: Vec<f64>,
    #[arg(long, value_enum, default_value_t = SweepModeArg::Mc)]
    pub mode: SweepModeArg,
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
    /// Grid estimates as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

fn default_grid() -> Vec<f64> {
    (1..20).map(|i| i as f64 / 20.0).collect()
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MatchingDemoArgs {
    /// Even vertex counts, comma-separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![4usize, 6, 8, 10, 12])]
    pub n: Vec<usize>,
    /// Report rows as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FamilyGenArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Family file destination; standard output when absent.
    #[arg(long)]
    pub file: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    pub config: PathBuf,
}
