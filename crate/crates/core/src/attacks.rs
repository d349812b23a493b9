//! Strategic behaviour: collusion under QV-1, Sybil stake splitting, and the
//! advantage of voting last.

use serde::Serialize;
use thiserror::Error;

use crate::numeric::compensated_sum;
use crate::schemes::{self, BallotProfile, SchemeError, SchemeFamily, SchemeSpec, ValidationOptions};
use crate::stake::StakeDistribution;
use crate::utility::{self, UtilityError, UtilityProblem, UtilityScheme, DEFAULT_KKT_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Utility(#[from] UtilityError),
    #[error("{plan} plan has {actual} ballots for {expected} voters")]
    PlanLengthMismatch {
        plan: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("no proposal receives votes under the honest plan")]
    NoTargetedProposals,
    #[error("cannot split stake {stake} across {k} identities")]
    InvalidSybilSplit { stake: f64, k: u32 },
    #[error("alignment fraction {value} at proposal {index} is outside [0, 1]")]
    InvalidAlignment { index: usize, value: f64 },
    #[error("expected {expected} alignment fractions, got {actual}")]
    AlignmentLengthMismatch { expected: usize, actual: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    Collusion,
    Sybil,
    LastVoter,
}

/// What one side of an attack scenario produces.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum AttackOutcome {
    Vscores { vscores: Vec<f64> },
    VoteMass { identities: u32, mass: f64 },
    Utility { allocation: Vec<f64>, utility: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NarrativeStep {
    pub step: String,
    pub detail: String,
}

impl NarrativeStep {
    fn new(step: &str, detail: impl Into<String>) -> Self {
        NarrativeStep {
            step: step.to_string(),
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackReport {
    pub attack_kind: AttackKind,
    pub baseline: AttackOutcome,
    pub attacked: AttackOutcome,
    pub gain: f64,
    pub narrative: Vec<NarrativeStep>,
}

fn validate_plan(
    scheme: &SchemeSpec,
    stakes: &[f64],
    m: usize,
    plan: &[BallotProfile],
    name: &'static str,
) -> Result<(), AttackError> {
    if plan.len() != stakes.len() {
        return Err(AttackError::PlanLengthMismatch {
            plan: name,
            expected: stakes.len(),
            actual: plan.len(),
        });
    }
    for (&stake, ballot) in stakes.iter().zip(plan) {
        schemes::voting_credit(scheme, stake)?;
        schemes::validate_ballot(scheme, stake, ballot, m, ValidationOptions::default()).map_err(|violation| {
            SchemeError::InvalidBallot {
                voter_id: ballot.voter_id.clone(),
                violation,
            }
        })?;
    }
    Ok(())
}

/// Compares QV-1 vscores under an honest plan and a colluding plan.
///
/// Ballot `i` of each plan belongs to the voter holding `stakes[i]`. The gain
/// is the smallest `colluding / honest` ratio over the proposals that the
/// honest plan supports.
pub fn collusion_gain(
    stakes: &[f64],
    m: usize,
    honest_plan: &[BallotProfile],
    colluding_plan: &[BallotProfile],
) -> Result<AttackReport, AttackError> {
    let scheme = SchemeSpec::qv1();
    validate_plan(&scheme, stakes, m, honest_plan, "honest")?;
    validate_plan(&scheme, stakes, m, colluding_plan, "colluding")?;
    let honest = schemes::vscore(&scheme, honest_plan, m)?;
    let colluding = schemes::vscore(&scheme, colluding_plan, m)?;
    let targeted: Vec<usize> = (0..m).filter(|&r| honest[r] > 0.0).collect();
    let gain = targeted
        .iter()
        .map(|&r| colluding[r] / honest[r])
        .min_by(f64::total_cmp)
        .ok_or(AttackError::NoTargetedProposals)?;
    let narrative = vec![
        NarrativeStep::new("honest", format!("per-proposal vscore {honest:?}")),
        NarrativeStep::new("colluding", format!("per-proposal vscore {colluding:?}")),
        NarrativeStep::new(
            "gain",
            format!(
                "minimum ratio over proposals {:?}",
                targeted.iter().map(|r| r + 1).collect::<Vec<_>>()
            ),
        ),
    ];
    Ok(AttackReport {
        attack_kind: AttackKind::Collusion,
        baseline: AttackOutcome::Vscores { vscores: honest },
        attacked: AttackOutcome::Vscores { vscores: colluding },
        gain,
        narrative,
    })
}

fn check_sybil(stake: f64, k: u32) -> Result<(), AttackError> {
    if k == 0 || !(stake.is_finite() && stake > 0.0) {
        return Err(AttackError::InvalidSybilSplit { stake, k });
    }
    Ok(())
}

/// Vote mass that one identity with `stake` can put on a single proposal.
fn concentrated_mass(scheme: &SchemeSpec, stake: f64) -> f64 {
    scheme.vote_fn(scheme.credit_fn(stake))
}

/// Ratio of the vote mass `k` identities of stake `stake/k` can concentrate
/// on one proposal to what the undivided stake achieves: `k^(1 − p·q)` for
/// `g(x) = x^p`, `f(x) = x^q`.
pub fn sybil_gain(scheme: &SchemeSpec, stake: f64, k: u32) -> Result<f64, AttackError> {
    check_sybil(stake, k)?;
    let exponent = 1.0 - scheme.credit_exponent() * scheme.vote_exponent();
    let k = f64::from(k);
    Ok(if exponent == 0.0 {
        1.0
    } else if exponent == 0.5 {
        k.sqrt()
    } else {
        k.powf(exponent)
    })
}

/// [`sybil_gain`] with both outcomes evaluated directly.
pub fn sybil_report(scheme: &SchemeSpec, stake: f64, k: u32) -> Result<AttackReport, AttackError> {
    check_sybil(stake, k)?;
    let single = concentrated_mass(scheme, stake);
    let split = f64::from(k) * concentrated_mass(scheme, stake / f64::from(k));
    let mut narrative = vec![
        NarrativeStep::new("baseline", format!("one identity with stake {stake} casts {single}")),
        NarrativeStep::new(
            "attacked",
            format!("{k} identities with stake {} each cast {split} in total", stake / f64::from(k)),
        ),
        NarrativeStep::new("closed-form", format!("gain = {}", sybil_gain(scheme, stake, k)?)),
    ];
    if scheme.family() == SchemeFamily::Qv3 && split > single {
        narrative.push(NarrativeStep::new(
            "qv3-note",
            "unsplit credit does not stop splitting across identities: each identity still casts \
             the square root of its own stake, so the total grows with the number of identities",
        ));
    }
    Ok(AttackReport {
        attack_kind: AttackKind::Sybil,
        baseline: AttackOutcome::VoteMass {
            identities: 1,
            mass: single,
        },
        attacked: AttackOutcome::VoteMass { identities: k, mass: split },
        gain: split / single,
        narrative,
    })
}

fn scheme_spec(scheme: UtilityScheme) -> SchemeSpec {
    match scheme {
        UtilityScheme::Qv1 => SchemeSpec::qv1(),
        UtilityScheme::Qv2 => SchemeSpec::qv2(),
    }
}

/// Allocation proportional to `profits`, scaled onto the scheme's budget.
/// All-zero profits fall back to an even split.
pub fn naive_allocation(problem: &UtilityProblem) -> Vec<f64> {
    let weights: Vec<f64> = if problem.profits.iter().all(|&p| p == 0.0) {
        vec![1.0; problem.m()]
    } else {
        problem.profits.clone()
    };
    let norm = match problem.scheme {
        UtilityScheme::Qv1 => compensated_sum(weights.iter().map(|w| w * w)).sqrt(),
        UtilityScheme::Qv2 => compensated_sum(weights.iter().copied()),
    };
    let radius = problem.stake.sqrt();
    weights.iter().map(|w| w * radius / norm).collect()
}

/// Builds the last voter's utility problem from the earlier ballots.
///
/// The external mass on proposal `r` is `b_r = Σ f(|ballot_r|)` over prior
/// ballots; `aligned_fraction[r]` of it counts as aligned with the last voter
/// (`None` means nothing is aligned).
pub fn last_voter_problem(
    scheme: UtilityScheme,
    prior_ballots: &[BallotProfile],
    prior_stakes: &StakeDistribution,
    last_voter_stake: f64,
    profits: &[f64],
    aligned_fraction: Option<&[f64]>,
) -> Result<UtilityProblem, AttackError> {
    let spec = scheme_spec(scheme);
    let m = profits.len();
    schemes::tally(&spec, prior_stakes, prior_ballots, m, ValidationOptions::default())?;
    let total: Vec<f64> = (0..m)
        .map(|r| compensated_sum(prior_ballots.iter().map(|b| spec.vote_fn(b.allocations[r].abs()))))
        .collect();
    let fractions = match aligned_fraction {
        Some(f) if f.len() != m => {
            return Err(AttackError::AlignmentLengthMismatch {
                expected: m,
                actual: f.len(),
            })
        }
        Some(f) => f.to_vec(),
        None => vec![0.0; m],
    };
    if let Some(index) = fractions.iter().position(|f| !(0.0..=1.0).contains(f)) {
        return Err(AttackError::InvalidAlignment {
            index,
            value: fractions[index],
        });
    }
    let aligned = (0..m).map(|r| fractions[r] * total[r]).collect();
    Ok(UtilityProblem::new(scheme, profits.to_vec(), aligned, total, last_voter_stake)?)
}

/// Utility of the last voter's optimal allocation relative to the naive
/// profit-proportional one.
pub fn last_voter_advantage(
    scheme: UtilityScheme,
    prior_ballots: &[BallotProfile],
    prior_stakes: &StakeDistribution,
    last_voter_stake: f64,
    profits: &[f64],
    aligned_fraction: Option<&[f64]>,
) -> Result<AttackReport, AttackError> {
    let problem = last_voter_problem(
        scheme,
        prior_ballots,
        prior_stakes,
        last_voter_stake,
        profits,
        aligned_fraction,
    )?;
    let naive = naive_allocation(&problem);
    let naive_utility = utility::utility(&problem, &naive)?;
    let mut narrative = vec![
        NarrativeStep::new(
            "external-mass",
            format!("prior vote mass {:?}, aligned {:?}", problem.total, problem.aligned),
        ),
        NarrativeStep::new("naive", format!("profit-proportional allocation has utility {naive_utility}")),
    ];
    let (allocation, optimized_utility) = match utility::maximize(&problem, DEFAULT_KKT_TOL) {
        Ok(sol) => {
            narrative.push(NarrativeStep::new(
                "optimized",
                format!(
                    "Lagrange solution has utility {} (multiplier {}, KKT residual {:.3e})",
                    sol.utility, sol.multiplier, sol.kkt_residual
                ),
            ));
            (sol.allocation, sol.utility)
        }
        Err(UtilityError::FlatObjective { .. }) => {
            narrative.push(NarrativeStep::new(
                "optimized",
                "utility does not depend on the allocation, so the naive allocation is already optimal",
            ));
            (naive.clone(), naive_utility)
        }
        Err(e) => return Err(e.into()),
    };
    let gain = if naive_utility == 0.0 {
        if optimized_utility == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        optimized_utility / naive_utility
    };
    Ok(AttackReport {
        attack_kind: AttackKind::LastVoter,
        baseline: AttackOutcome::Utility {
            allocation: naive,
            utility: naive_utility,
        },
        attacked: AttackOutcome::Utility {
            allocation,
            utility: optimized_utility,
        },
        gain,
        narrative,
    })
}
