use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "qvkit",
    version,
    about = "Quadratic and gamma-power voting: tallies, decentralization metrics, transforms, utility and attacks",
    long_about = "Quadratic and gamma-power voting toolkit.\n\n\
        Every command writes one report (compact JSON with 12 significant digits, or CSV where noted) \
        to standard output or --output. Exit status: 0 success, 1 domain error (JSON on stderr), 2 usage error."
)]
pub struct Cli {
    /// Write the report to this file instead of standard output
    #[arg(long, short, global = true, value_name = "PATH")]
    pub output: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate ballots against stakes and tally score and vscore per proposal
    Tally(TallyArgs),
    /// Relative voting ratios, eta, Gini, Nakamoto and Lorenz points for a gamma
    Metrics(MetricsArgs),
    /// Lorenz curve points of the gamma-transformed credits
    Lorenz(LorenzArgs),
    /// Find the gamma that caps the top-k share at a target
    GammaSearch(GammaSearchArgs),
    /// Maximize one voter's expected utility under QV-1 or QV-2
    Optimize(OptimizeArgs),
    /// Quantify collusion, Sybil splitting or last-voter advantage
    Attack(AttackArgs),
    /// Generate a seeded synthetic stake distribution
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeName {
    Linear,
    Qv1,
    Qv2,
    Qv3,
    Gpv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Split,
    Unsplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolarityArg {
    YesAbstain,
    YesNoAbstain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UtilitySchemeArg {
    Qv1,
    Qv2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Constant,
    Uniform,
    Pareto,
}

#[derive(Debug, Args)]
pub struct TallyArgs {
    /// Voting scheme
    #[arg(long, value_enum)]
    pub scheme: SchemeName,
    /// Exponent for --scheme gpv, in (0, 1)
    #[arg(long, value_parser = open_unit)]
    pub gamma: Option<f64>,
    /// Stake mode; defaults to unsplit for qv3 and split otherwise
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum, default_value = "yes-abstain")]
    pub polarity: PolarityArg,
    /// Stake CSV with header `voter_id,stake`
    #[arg(long, value_name = "FILE")]
    pub stakes: PathBuf,
    /// Ballot JSON: array of {voter_id, allocations}
    #[arg(long, value_name = "FILE")]
    pub ballots: PathBuf,
    /// Number of proposals; defaults to the length of the first ballot
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub proposals: Option<u64>,
    /// Absolute tolerance on credit sums
    #[arg(long, default_value = "1e-9", value_parser = positive)]
    pub tol: f64,
    /// Accept ballots that spend less than the full credit
    #[arg(long)]
    pub allow_undervote: bool,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long, value_name = "FILE")]
    pub stakes: PathBuf,
    /// Credit exponent in (0, 1]; 0.5 is quadratic voting, 1 is linear
    #[arg(long, default_value_t = 0.5, value_parser = half_open_unit)]
    pub gamma: f64,
    /// Nakamoto thresholds in (0, 1), comma separated or repeated
    #[arg(long, value_delimiter = ',', default_value = "0.51", value_parser = open_unit)]
    pub nakamoto: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct LorenzArgs {
    #[arg(long, value_name = "FILE")]
    pub stakes: PathBuf,
    /// Credit exponent in (0, 1]
    #[arg(long, default_value_t = 0.5, value_parser = half_open_unit)]
    pub gamma: f64,
    /// `csv` writes `i,cumulative_share` rows
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct GammaSearchArgs {
    #[arg(long, value_name = "FILE")]
    pub stakes: PathBuf,
    /// Number of largest stakeholders whose share is capped
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    /// Target share of the top k, in (0, 1)
    #[arg(long, value_parser = open_unit)]
    pub alpha: f64,
    /// Tolerance on the achieved share and on the gamma bracket
    #[arg(long, default_value = "1e-9", value_parser = positive)]
    pub tol: f64,
    /// Bisection iteration limit
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Lower end of the initial gamma bracket, in (0, 1)
    #[arg(long, default_value = "1e-9", value_parser = open_unit)]
    pub bracket_lo: f64,
    /// Upper end of the initial gamma bracket, in (0, 1]
    #[arg(long, default_value_t = 1.0, value_parser = half_open_unit)]
    pub bracket_hi: f64,
    /// Fail when the target is already met instead of returning gamma = 1
    #[arg(long)]
    pub strict_input: bool,
    /// Also write the transformed distribution as CSV to this file
    #[arg(long, value_name = "PATH")]
    pub transformed_out: Option<PathBuf>,
    /// Include the transform property checks in the report
    #[arg(long)]
    pub check_properties: bool,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long, value_enum)]
    pub scheme: UtilitySchemeArg,
    /// Problem JSON: {profits, aligned, total, stake}
    #[arg(long, value_name = "FILE")]
    pub problem: PathBuf,
    /// Maximum accepted KKT residual
    #[arg(long, default_value = "1e-8", value_parser = positive)]
    pub tol: f64,
    /// Compare against the grid-search oracle (at most 4 proposals)
    #[arg(long)]
    pub oracle_check: bool,
    /// Grid points per axis for --oracle-check, at least 100
    #[arg(long, default_value_t = 400, value_parser = clap::value_parser!(u64).range(100..))]
    pub resolution: u64,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[command(subcommand)]
    pub kind: AttackCommand,
}

#[derive(Debug, Subcommand)]
pub enum AttackCommand {
    /// Scenario JSON: {stakes, proposals, honest, colluding}
    Collusion(ScenarioArg),
    /// Scenario JSON: {scheme, gamma?, stake, k}
    Sybil(ScenarioArg),
    /// Scenario JSON: {scheme, prior_stakes, prior_ballots, last_voter_stake, profits, aligned_fraction?}
    LastVoter(ScenarioArg),
}

#[derive(Debug, Args)]
pub struct ScenarioArg {
    #[arg(long, value_name = "FILE")]
    pub scenario: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Number of voters
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    /// Generator seed (ChaCha8)
    #[arg(long, env = "QVKIT_SEED")]
    pub seed: u64,
    /// Stake for --kind constant
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub value: f64,
    /// Lower bound for --kind uniform
    #[arg(long, value_parser = positive)]
    pub lo: Option<f64>,
    /// Upper bound for --kind uniform
    #[arg(long, value_parser = positive)]
    pub hi: Option<f64>,
    /// Tail index for --kind pareto
    #[arg(long, default_value_t = 1.16, value_parser = positive)]
    pub shape: f64,
    /// Minimum stake for --kind pareto
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub scale: f64,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

fn real(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v = real(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

fn open_unit(s: &str) -> Result<f64, String> {
    let v = real(s)?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} must lie in (0, 1)"))
    }
}

fn half_open_unit(s: &str) -> Result<f64, String> {
    let v = real(s)?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} must lie in (0, 1]"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn ranges() {
        assert!(open_unit("1").is_err());
        assert!(half_open_unit("1").is_ok());
        assert!(positive("0").is_err());
        assert!(real("nan").is_err());
    }
}
