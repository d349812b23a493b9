use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use qvkit_core::attacks::{collusion_gain, last_voter_advantage, sybil_report, AttackReport};
use qvkit_core::metrics::{gamma_credits, lorenz_points, report};
use qvkit_core::schemes::{
    tally, BallotProfile, Polarity, SchemeFamily, SchemeSpec, StakeMode, ValidationOptions,
};
use qvkit_core::stake::{generate, DistributionKind, DistributionSpec, StakeDistribution, StakeEntry};
use qvkit_core::transform::{apply_gamma, gamma_search, verify_transform_properties, GammaSearchParams};
use qvkit_core::utility::{
    brute_force_oracle, maximize, AllocationSolution, UtilityProblem, UtilityScheme,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::args::*;
use crate::error::CliError;
use crate::output::{format_float, to_json_line};

pub fn read_stakes(path: &Path) -> Result<StakeDistribution, CliError> {
    let file = File::open(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    StakeDistribution::read_csv(BufReader::new(file)).map_err(|source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::json(path, e))
}

fn json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CliError> {
    to_json_line(value).map_err(|e| CliError::Usage(format!("cannot serialize report: {e}")))
}

fn scheme_spec(
    name: SchemeName,
    gamma: Option<f64>,
    mode: Option<ModeArg>,
    polarity: PolarityArg,
) -> Result<SchemeSpec, CliError> {
    let family = match (name, gamma) {
        (SchemeName::Gpv, Some(g)) => SchemeFamily::Gpv(g),
        (SchemeName::Gpv, None) => return Err(CliError::Usage("--scheme gpv needs --gamma".into())),
        (_, Some(_)) => return Err(CliError::Usage("--gamma only applies to --scheme gpv".into())),
        (SchemeName::Linear, None) => SchemeFamily::Linear,
        (SchemeName::Qv1, None) => SchemeFamily::Qv1,
        (SchemeName::Qv2, None) => SchemeFamily::Qv2,
        (SchemeName::Qv3, None) => SchemeFamily::Qv3,
    };
    let polarity = match polarity {
        PolarityArg::YesAbstain => Polarity::YesAbstain,
        PolarityArg::YesNoAbstain => Polarity::YesNoAbstain,
    };
    let spec = match mode {
        None => SchemeSpec::of(family)?,
        Some(m) => {
            let mode = match m {
                ModeArg::Split => StakeMode::Split,
                ModeArg::Unsplit => StakeMode::Unsplit,
            };
            SchemeSpec::new(family, mode, polarity).map_err(|e| CliError::Usage(e.to_string()))?
        }
    };
    Ok(spec.with_polarity(polarity))
}

pub fn tally_cmd(a: &TallyArgs) -> Result<Vec<u8>, CliError> {
    let scheme = scheme_spec(a.scheme, a.gamma, a.mode, a.polarity)?;
    let dist = read_stakes(&a.stakes)?;
    let ballots: Vec<BallotProfile> = read_json(&a.ballots)?;
    let m = match a.proposals {
        Some(m) => m as usize,
        None => ballots
            .first()
            .map(|b| b.allocations.len())
            .ok_or_else(|| CliError::Usage("no ballots; pass --proposals".into()))?,
    };
    let opts = ValidationOptions {
        tol: a.tol,
        allow_undervote: a.allow_undervote,
    };
    json(&tally(&scheme, &dist, &ballots, m, opts)?)
}

pub fn metrics_cmd(a: &MetricsArgs) -> Result<Vec<u8>, CliError> {
    let dist = read_stakes(&a.stakes)?;
    json(&report(&dist, a.gamma, &a.nakamoto)?)
}

pub fn lorenz_cmd(a: &LorenzArgs) -> Result<Vec<u8>, CliError> {
    let dist = read_stakes(&a.stakes)?;
    let points = lorenz_points(&gamma_credits(&dist, a.gamma))?;
    match a.format {
        Format::Json => json(&points),
        Format::Csv => {
            let mut out = String::from("i,cumulative_share\n");
            for p in &points {
                out.push_str(&format!("{},{}\n", p.index, format_float(p.cumulative_share)));
            }
            Ok(out.into_bytes())
        }
    }
}

#[derive(Serialize)]
struct GammaSearchOutput {
    #[serde(flatten)]
    result: qvkit_core::transform::GammaSearchResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    properties: Option<qvkit_core::transform::TransformPropertyReport>,
}

pub fn gamma_search_cmd(a: &GammaSearchArgs) -> Result<Vec<u8>, CliError> {
    let dist = read_stakes(&a.stakes)?;
    if a.bracket_lo >= a.bracket_hi {
        return Err(CliError::Usage("--bracket-lo must be below --bracket-hi".into()));
    }
    let params = GammaSearchParams {
        tol: a.tol,
        max_iter: a.max_iter,
        bracket: (a.bracket_lo, a.bracket_hi),
        strict_input: a.strict_input,
    };
    let result = gamma_search(&dist, a.k as usize, a.alpha, &params)?;
    if let Some(path) = &a.transformed_out {
        let transformed = apply_gamma(&dist, result.gamma)?;
        let file = File::create(path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        transformed.write_csv(file).map_err(|source| CliError::Csv {
            path: path.clone(),
            source,
        })?;
    }
    let properties = if a.check_properties {
        Some(verify_transform_properties(&dist, result.gamma, a.alpha)?)
    } else {
        None
    };
    json(&GammaSearchOutput { result, properties })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    profits: Vec<f64>,
    aligned: Vec<f64>,
    total: Vec<f64>,
    stake: f64,
}

fn utility_scheme(s: UtilitySchemeArg) -> UtilityScheme {
    match s {
        UtilitySchemeArg::Qv1 => UtilityScheme::Qv1,
        UtilitySchemeArg::Qv2 => UtilityScheme::Qv2,
    }
}

#[derive(Serialize)]
struct OracleCheck {
    utility: f64,
    allocation: Vec<f64>,
    gap: f64,
    solver_dominates: bool,
}

#[derive(Serialize)]
struct OptimizeOutput {
    #[serde(flatten)]
    solution: AllocationSolution,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<OracleCheck>,
}

pub fn optimize_cmd(a: &OptimizeArgs) -> Result<Vec<u8>, CliError> {
    let file: ProblemFile = read_json(&a.problem)?;
    let problem = UtilityProblem::new(utility_scheme(a.scheme), file.profits, file.aligned, file.total, file.stake)?;
    let solution = maximize(&problem, a.tol)?;
    let oracle = if a.oracle_check {
        let o = brute_force_oracle(&problem, a.resolution as usize)?;
        let gap = solution.utility - o.utility;
        Some(OracleCheck {
            solver_dominates: gap >= -1e-6 * (1.0 + o.utility.abs()),
            utility: o.utility,
            allocation: o.allocation,
            gap,
        })
    } else {
        None
    };
    json(&OptimizeOutput { solution, oracle })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CollusionScenario {
    stakes: Vec<f64>,
    proposals: usize,
    honest: Vec<BallotProfile>,
    colluding: Vec<BallotProfile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SybilScenario {
    scheme: SchemeKey,
    #[serde(default)]
    gamma: Option<f64>,
    stake: f64,
    k: u32,
}

#[derive(Deserialize, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum SchemeKey {
    Linear,
    Qv1,
    Qv2,
    Qv3,
    Gpv,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LastVoterScenario {
    scheme: UtilityScheme,
    prior_stakes: Vec<StakeEntry>,
    prior_ballots: Vec<BallotProfile>,
    last_voter_stake: f64,
    profits: Vec<f64>,
    #[serde(default)]
    aligned_fraction: Option<Vec<f64>>,
}

fn attack_report(kind: &AttackCommand) -> Result<AttackReport, CliError> {
    match kind {
        AttackCommand::Collusion(s) => {
            let sc: CollusionScenario = read_json(&s.scenario)?;
            Ok(collusion_gain(&sc.stakes, sc.proposals, &sc.honest, &sc.colluding)?)
        }
        AttackCommand::Sybil(s) => {
            let sc: SybilScenario = read_json(&s.scenario)?;
            let name = match sc.scheme {
                SchemeKey::Linear => SchemeName::Linear,
                SchemeKey::Qv1 => SchemeName::Qv1,
                SchemeKey::Qv2 => SchemeName::Qv2,
                SchemeKey::Qv3 => SchemeName::Qv3,
                SchemeKey::Gpv => SchemeName::Gpv,
            };
            let scheme = scheme_spec(name, sc.gamma, None, PolarityArg::YesAbstain)?;
            Ok(sybil_report(&scheme, sc.stake, sc.k)?)
        }
        AttackCommand::LastVoter(s) => {
            let sc: LastVoterScenario = read_json(&s.scenario)?;
            let dist = StakeDistribution::from_entries(sc.prior_stakes)?;
            Ok(last_voter_advantage(
                sc.scheme,
                &sc.prior_ballots,
                &dist,
                sc.last_voter_stake,
                &sc.profits,
                sc.aligned_fraction.as_deref(),
            )?)
        }
    }
}

pub fn attack_cmd(a: &AttackArgs) -> Result<Vec<u8>, CliError> {
    json(&attack_report(&a.kind)?)
}

pub fn generate_cmd(a: &GenerateArgs) -> Result<Vec<u8>, CliError> {
    let kind = match a.kind {
        KindArg::Constant => DistributionKind::Constant { value: a.value },
        KindArg::Uniform => match (a.lo, a.hi) {
            (Some(lo), Some(hi)) => DistributionKind::UniformRange { lo, hi },
            _ => return Err(CliError::Usage("--kind uniform needs --lo and --hi".into())),
        },
        KindArg::Pareto => DistributionKind::Pareto {
            shape: a.shape,
            scale: a.scale,
        },
    };
    let spec = DistributionSpec {
        kind,
        n: a.n as usize,
        seed: a.seed,
    };
    let dist = generate(&spec)?;
    match a.format {
        Format::Json => json(dist.entries()),
        Format::Csv => {
            let mut buf = Vec::new();
            dist.write_csv(&mut buf).map_err(|source| CliError::Csv {
                path: "<output>".into(),
                source,
            })?;
            Ok(buf)
        }
    }
}

pub fn run(cli: &Cli) -> Result<Vec<u8>, CliError> {
    match &cli.command {
        Command::Tally(a) => tally_cmd(a),
        Command::Metrics(a) => metrics_cmd(a),
        Command::Lorenz(a) => lorenz_cmd(a),
        Command::GammaSearch(a) => gamma_search_cmd(a),
        Command::Optimize(a) => optimize_cmd(a),
        Command::Attack(a) => attack_cmd(a),
        Command::Generate(a) => generate_cmd(a),
    }
}
