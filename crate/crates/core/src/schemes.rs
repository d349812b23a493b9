//! Voting schemes and tallies.
//!
//! A scheme is the pair of increasing functions `(g, f)` plus a stake mode and
//! a ballot polarity. `g` turns a stake into the voter's *voting credit*; `f`
//! turns a per-proposal allocation into votes when the `vscore` is taken.
//!
//! | family | g(x) | f(x) | stake mode |
//! |--------|------|------|------------|
//! | linear | x | x | split or unsplit |
//! | qv1 | x | √x | split |
//! | qv2 | √x | x | split |
//! | qv3 | √x | x | unsplit |
//! | gpv(γ) | x^γ | x | split |

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stake::StakeDistribution;

/// Absolute tolerance on credit sums used when none is given.
pub const DEFAULT_CREDIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "family", content = "gamma")]
pub enum SchemeFamily {
    Linear,
    Qv1,
    Qv2,
    Qv3,
    Gpv(f64),
}

impl fmt::Display for SchemeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeFamily::Linear => write!(f, "linear"),
            SchemeFamily::Qv1 => write!(f, "qv1"),
            SchemeFamily::Qv2 => write!(f, "qv2"),
            SchemeFamily::Qv3 => write!(f, "qv3"),
            SchemeFamily::Gpv(g) => write!(f, "gpv({g})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StakeMode {
    Split,
    Unsplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    #[default]
    YesAbstain,
    YesNoAbstain,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("gamma must lie in (0, 1), got {0}")]
    GammaOutOfRange(f64),
    #[error("scheme {family} cannot use {mode:?} stake")]
    ModeMismatch { family: SchemeFamily, mode: StakeMode },
    #[error("ballot of voter {voter_id:?} has {actual} entries, expected {expected}")]
    LengthMismatch {
        voter_id: String,
        expected: usize,
        actual: usize,
    },
    #[error("ballot from unknown voter {0:?}")]
    UnknownVoter(String),
    #[error("voter {0:?} submitted more than one ballot")]
    DuplicateBallot(String),
    #[error("invalid ballot from voter {voter_id:?}: {violation}")]
    InvalidBallot {
        voter_id: String,
        violation: BallotViolation,
    },
    #[error("stake must be positive, got {0}")]
    NonPositiveStake(f64),
}

/// Why a single ballot fails validation.
#[derive(Debug, Error, Clone, PartialEq, Serialize)]
#[serde(tag = "violation", rename_all = "kebab-case")]
pub enum BallotViolation {
    #[error("credit mismatch: expected {expected}, allocated {actual}")]
    CreditMismatch { expected: f64, actual: f64 },
    #[error("entry {index} = {value} is not one of 0, ±credit")]
    IllegalEntry { index: usize, value: f64 },
    #[error("entry {index} is negative under yes-abstain polarity")]
    NegativeUnderYesAbstain { index: usize },
    #[error("entry {index} is not finite")]
    NonFinite { index: usize },
    #[error("ballot has {actual} entries, expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
}

/// `(g, f, stake mode, polarity)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    family: SchemeFamily,
    mode: StakeMode,
    polarity: Polarity,
}

impl SchemeSpec {
    pub fn new(family: SchemeFamily, mode: StakeMode, polarity: Polarity) -> Result<Self, SchemeError> {
        if let SchemeFamily::Gpv(g) = family {
            if !(g > 0.0 && g < 1.0) {
                return Err(SchemeError::GammaOutOfRange(g));
            }
        }
        let allowed = match family {
            SchemeFamily::Linear => true,
            SchemeFamily::Qv3 => mode == StakeMode::Unsplit,
            _ => mode == StakeMode::Split,
        };
        if !allowed {
            return Err(SchemeError::ModeMismatch { family, mode });
        }
        Ok(SchemeSpec { family, mode, polarity })
    }

    /// Scheme with the family's natural stake mode and yes-abstain polarity.
    /// Linear defaults to split.
    pub fn of(family: SchemeFamily) -> Result<Self, SchemeError> {
        let mode = match family {
            SchemeFamily::Qv3 => StakeMode::Unsplit,
            _ => StakeMode::Split,
        };
        Self::new(family, mode, Polarity::YesAbstain)
    }

    pub fn linear() -> Self {
        Self::of(SchemeFamily::Linear).unwrap()
    }

    pub fn qv1() -> Self {
        Self::of(SchemeFamily::Qv1).unwrap()
    }

    pub fn qv2() -> Self {
        Self::of(SchemeFamily::Qv2).unwrap()
    }

    pub fn qv3() -> Self {
        Self::of(SchemeFamily::Qv3).unwrap()
    }

    pub fn gpv(gamma: f64) -> Result<Self, SchemeError> {
        Self::of(SchemeFamily::Gpv(gamma))
    }

    pub fn with_polarity(mut self, polarity: Polarity) -> Self {
        self.polarity = polarity;
        self
    }

    pub fn family(&self) -> SchemeFamily {
        self.family
    }

    pub fn mode(&self) -> StakeMode {
        self.mode
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    /// Exponent `p` of the credit function `g(x) = x^p`.
    pub fn credit_exponent(&self) -> f64 {
        match self.family {
            SchemeFamily::Linear | SchemeFamily::Qv1 => 1.0,
            SchemeFamily::Qv2 | SchemeFamily::Qv3 => 0.5,
            SchemeFamily::Gpv(g) => g,
        }
    }

    /// Exponent `q` of the vote function `f(x) = x^q`.
    pub fn vote_exponent(&self) -> f64 {
        match self.family {
            SchemeFamily::Qv1 => 0.5,
            _ => 1.0,
        }
    }

    /// `g(x)`.
    pub fn credit_fn(&self, x: f64) -> f64 {
        match self.family {
            SchemeFamily::Linear | SchemeFamily::Qv1 => x,
            SchemeFamily::Qv2 | SchemeFamily::Qv3 => x.sqrt(),
            SchemeFamily::Gpv(g) => x.powf(g),
        }
    }

    /// `f(x)`.
    pub fn vote_fn(&self, x: f64) -> f64 {
        match self.family {
            SchemeFamily::Qv1 => x.sqrt(),
            _ => x,
        }
    }

    /// `sign(b)·f(|b|)`.
    pub fn signed_votes(&self, b: f64) -> f64 {
        if b == 0.0 {
            0.0
        } else {
            b.signum() * self.vote_fn(b.abs())
        }
    }

    pub fn label(&self) -> String {
        self.family.to_string()
    }
}

impl fmt::Display for SchemeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.family.fmt(f)
    }
}

/// One voter's allocation over the round's proposals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallotProfile {
    pub voter_id: String,
    pub allocations: Vec<f64>,
}

impl BallotProfile {
    pub fn new(voter_id: impl Into<String>, allocations: Vec<f64>) -> Self {
        BallotProfile {
            voter_id: voter_id.into(),
            allocations,
        }
    }

    /// `Σ |b_l|`.
    pub fn credit_spent(&self) -> f64 {
        self.allocations.iter().map(|b| b.abs()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    pub tol: f64,
    /// Accept `Σ|b| <= g(s)` instead of requiring equality (split mode only).
    pub allow_undervote: bool,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            tol: DEFAULT_CREDIT_TOL,
            allow_undervote: false,
        }
    }
}

impl ValidationOptions {
    pub fn with_tol(tol: f64) -> Self {
        ValidationOptions {
            tol,
            ..Default::default()
        }
    }
}

/// `g(stake)`.
pub fn voting_credit(scheme: &SchemeSpec, stake: f64) -> Result<f64, SchemeError> {
    if stake.is_nan() || stake <= 0.0 {
        return Err(SchemeError::NonPositiveStake(stake));
    }
    Ok(scheme.credit_fn(stake))
}

/// Checks one ballot against the voter's credit `g(stake)`.
pub fn validate_ballot(
    scheme: &SchemeSpec,
    stake: f64,
    profile: &BallotProfile,
    m: usize,
    opts: ValidationOptions,
) -> Result<(), BallotViolation> {
    check_shape(scheme, profile, m)?;
    let credit = scheme.credit_fn(stake);
    match scheme.mode {
        StakeMode::Split => {
            let spent = profile.credit_spent();
            let over = spent - credit > opts.tol;
            let under = credit - spent > opts.tol;
            if over || (under && !opts.allow_undervote) {
                return Err(BallotViolation::CreditMismatch {
                    expected: credit,
                    actual: spent,
                });
            }
        }
        StakeMode::Unsplit => {
            for (index, &b) in profile.allocations.iter().enumerate() {
                let legal = b.abs() <= opts.tol || (b.abs() - credit).abs() <= opts.tol;
                if !legal {
                    return Err(BallotViolation::IllegalEntry { index, value: b });
                }
            }
        }
    }
    Ok(())
}

/// Length, finiteness and polarity; everything that does not need the stake.
fn check_shape(scheme: &SchemeSpec, profile: &BallotProfile, m: usize) -> Result<(), BallotViolation> {
    if profile.allocations.len() != m {
        return Err(BallotViolation::LengthMismatch {
            expected: m,
            actual: profile.allocations.len(),
        });
    }
    for (index, &b) in profile.allocations.iter().enumerate() {
        if !b.is_finite() {
            return Err(BallotViolation::NonFinite { index });
        }
        if scheme.polarity == Polarity::YesAbstain && b < 0.0 {
            return Err(BallotViolation::NegativeUnderYesAbstain { index });
        }
    }
    Ok(())
}

fn check_lengths(ballots: &[BallotProfile], m: usize) -> Result<(), SchemeError> {
    for b in ballots {
        if b.allocations.len() != m {
            return Err(SchemeError::LengthMismatch {
                voter_id: b.voter_id.clone(),
                expected: m,
                actual: b.allocations.len(),
            });
        }
    }
    Ok(())
}

/// Raw per-proposal sum of allocations.
pub fn score(ballots: &[BallotProfile], m: usize) -> Result<Vec<f64>, SchemeError> {
    check_lengths(ballots, m)?;
    let mut out = vec![0.0; m];
    for b in ballots {
        for (acc, &x) in out.iter_mut().zip(&b.allocations) {
            *acc += x;
        }
    }
    Ok(out)
}

/// Per-proposal `Σ sign(b)·f(|b|)`.
///
/// Only the stake-independent part of validation (length, finiteness,
/// polarity) can be checked here; [`tally`] performs the full check.
pub fn vscore(scheme: &SchemeSpec, ballots: &[BallotProfile], m: usize) -> Result<Vec<f64>, SchemeError> {
    check_lengths(ballots, m)?;
    let mut out = vec![0.0; m];
    for b in ballots {
        check_shape(scheme, b, m).map_err(|violation| SchemeError::InvalidBallot {
            voter_id: b.voter_id.clone(),
            violation,
        })?;
        for (acc, &x) in out.iter_mut().zip(&b.allocations) {
            *acc += scheme.signed_votes(x);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProposalTally {
    pub index: usize,
    pub score: f64,
    pub vscore: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoterCredit {
    pub voter_id: String,
    pub credit_used: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TallyResult {
    pub scheme: String,
    pub proposals: Vec<ProposalTally>,
    pub voters: Vec<VoterCredit>,
}

impl TallyResult {
    pub fn scores(&self) -> Vec<f64> {
        self.proposals.iter().map(|p| p.score).collect()
    }

    pub fn vscores(&self) -> Vec<f64> {
        self.proposals.iter().map(|p| p.vscore).collect()
    }
}

/// Validates every ballot against its voter's stake and tallies the round.
///
/// Proposals are reported with 1-based indices. Voters are listed in ballot
/// order.
pub fn tally(
    scheme: &SchemeSpec,
    dist: &StakeDistribution,
    ballots: &[BallotProfile],
    m: usize,
    opts: ValidationOptions,
) -> Result<TallyResult, SchemeError> {
    let stakes: HashMap<&str, f64> = dist
        .entries()
        .iter()
        .map(|e| (e.voter_id.as_str(), e.stake))
        .collect();
    let mut seen = HashSet::with_capacity(ballots.len());
    let mut voters = Vec::with_capacity(ballots.len());
    for b in ballots {
        let stake = *stakes
            .get(b.voter_id.as_str())
            .ok_or_else(|| SchemeError::UnknownVoter(b.voter_id.clone()))?;
        if !seen.insert(b.voter_id.as_str()) {
            return Err(SchemeError::DuplicateBallot(b.voter_id.clone()));
        }
        validate_ballot(scheme, stake, b, m, opts).map_err(|violation| SchemeError::InvalidBallot {
            voter_id: b.voter_id.clone(),
            violation,
        })?;
        let credit_used = match scheme.mode {
            StakeMode::Split => b.credit_spent(),
            StakeMode::Unsplit => scheme.credit_fn(stake),
        };
        voters.push(VoterCredit {
            voter_id: b.voter_id.clone(),
            credit_used,
        });
    }
    let scores = score(ballots, m)?;
    let vscores = vscore(scheme, ballots, m)?;
    let proposals = scores
        .into_iter()
        .zip(vscores)
        .enumerate()
        .map(|(i, (score, vscore))| ProposalTally {
            index: i + 1,
            score,
            vscore,
        })
        .collect();
    Ok(TallyResult {
        scheme: scheme.label(),
        proposals,
        voters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ballot(id: &str, b: &[f64]) -> BallotProfile {
        BallotProfile::new(id, b.to_vec())
    }

    #[test]
    fn scheme_construction_rules() {
        assert!(SchemeSpec::new(SchemeFamily::Qv3, StakeMode::Split, Polarity::YesAbstain).is_err());
        assert!(SchemeSpec::new(SchemeFamily::Qv1, StakeMode::Unsplit, Polarity::YesAbstain).is_err());
        assert!(SchemeSpec::new(SchemeFamily::Linear, StakeMode::Unsplit, Polarity::YesAbstain).is_ok());
        assert_eq!(SchemeSpec::gpv(1.0), Err(SchemeError::GammaOutOfRange(1.0)));
        assert_eq!(SchemeSpec::gpv(0.0), Err(SchemeError::GammaOutOfRange(0.0)));
        assert_eq!(SchemeSpec::qv3().mode(), StakeMode::Unsplit);
        assert_eq!(SchemeSpec::qv1().polarity(), Polarity::YesAbstain);
    }

    #[test]
    fn voting_credit_examples() {
        assert_eq!(voting_credit(&SchemeSpec::qv2(), 9.0).unwrap(), 3.0);
        assert_eq!(voting_credit(&SchemeSpec::linear(), 7.0).unwrap(), 7.0);
        let g = voting_credit(&SchemeSpec::gpv(0.25).unwrap(), 16.0).unwrap();
        assert!((g - 2.0).abs() < 1e-15);
        assert!(voting_credit(&SchemeSpec::qv2(), 0.0).is_err());
    }

    #[test]
    fn validate_split_ballots() {
        let opts = ValidationOptions::default();
        let qv2 = SchemeSpec::qv2();
        assert_eq!(validate_ballot(&qv2, 9.0, &ballot("a", &[1.0, 2.0, 0.0]), 3, opts), Ok(()));
        assert_eq!(
            validate_ballot(&qv2, 9.0, &ballot("a", &[2.0, 2.0, 0.0]), 3, opts),
            Err(BallotViolation::CreditMismatch {
                expected: 3.0,
                actual: 4.0
            })
        );
        // under-vote is rejected unless explicitly allowed
        let under = ballot("a", &[1.0, 1.0, 0.0]);
        assert!(validate_ballot(&qv2, 9.0, &under, 3, opts).is_err());
        let relaxed = ValidationOptions {
            allow_undervote: true,
            ..opts
        };
        assert_eq!(validate_ballot(&qv2, 9.0, &under, 3, relaxed), Ok(()));
        assert!(validate_ballot(&qv2, 9.0, &ballot("a", &[4.0, 0.0, 0.0]), 3, relaxed).is_err());
    }

    #[test]
    fn validate_polarity_and_shape() {
        let opts = ValidationOptions::default();
        let qv2 = SchemeSpec::qv2();
        assert_eq!(
            validate_ballot(&qv2, 9.0, &ballot("a", &[4.0, -1.0]), 2, opts),
            Err(BallotViolation::NegativeUnderYesAbstain { index: 1 })
        );
        let signed = qv2.with_polarity(Polarity::YesNoAbstain);
        assert_eq!(validate_ballot(&signed, 9.0, &ballot("a", &[2.0, -1.0]), 2, opts), Ok(()));
        // negative votes consume credit
        assert!(validate_ballot(&signed, 9.0, &ballot("a", &[3.0, -1.0]), 2, opts).is_err());
        assert_eq!(
            validate_ballot(&qv2, 9.0, &ballot("a", &[3.0]), 2, opts),
            Err(BallotViolation::LengthMismatch { expected: 2, actual: 1 })
        );
        assert_eq!(
            validate_ballot(&qv2, 9.0, &ballot("a", &[f64::NAN, 3.0]), 2, opts),
            Err(BallotViolation::NonFinite { index: 0 })
        );
    }

    #[test]
    fn validate_unsplit_ballots() {
        let opts = ValidationOptions::default();
        let qv3 = SchemeSpec::qv3();
        assert_eq!(validate_ballot(&qv3, 9.0, &ballot("a", &[3.0, 0.0, 3.0]), 3, opts), Ok(()));
        assert_eq!(
            validate_ballot(&qv3, 9.0, &ballot("a", &[3.0, 1.0, 0.0]), 3, opts),
            Err(BallotViolation::IllegalEntry { index: 1, value: 1.0 })
        );
        assert_eq!(
            validate_ballot(&qv3, 9.0, &ballot("a", &[3.0, -3.0]), 2, opts),
            Err(BallotViolation::NegativeUnderYesAbstain { index: 1 })
        );
        let signed = qv3.with_polarity(Polarity::YesNoAbstain);
        assert_eq!(validate_ballot(&signed, 9.0, &ballot("a", &[3.0, -3.0]), 2, opts), Ok(()));
    }

    #[test]
    fn all_on_one_is_always_valid_split() {
        let opts = ValidationOptions::default();
        for scheme in [
            SchemeSpec::linear(),
            SchemeSpec::qv1(),
            SchemeSpec::qv2(),
            SchemeSpec::gpv(0.3).unwrap(),
        ] {
            for stake in [0.01, 1.0, 7.5, 1e6] {
                let b = ballot("a", &[scheme.credit_fn(stake), 0.0, 0.0]);
                assert_eq!(validate_ballot(&scheme, stake, &b, 3, opts), Ok(()), "{scheme} {stake}");
            }
        }
    }

    #[test]
    fn score_examples() {
        assert_eq!(score(&[ballot("a", &[1.0, 0.0]), ballot("b", &[2.0, 0.0])], 2).unwrap(), [3.0, 0.0]);
        assert_eq!(score(&[], 3).unwrap(), [0.0; 3]);
        assert_eq!(score(&[ballot("a", &[1.0, -1.0]), ballot("b", &[0.0, 1.0])], 2).unwrap(), [1.0, 0.0]);
        assert!(matches!(
            score(&[ballot("a", &[1.0])], 2),
            Err(SchemeError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn vscore_qv1_examples() {
        let qv1 = SchemeSpec::qv1();
        let v = vscore(&qv1, &[ballot("a", &[3.0, 0.0, 0.0])], 3).unwrap();
        assert_eq!(v, [3f64.sqrt(), 0.0, 0.0]);

        let spread: Vec<_> = ["a", "b", "c"].iter().map(|id| ballot(id, &[1.0, 1.0, 1.0])).collect();
        assert_eq!(vscore(&qv1, &spread, 3).unwrap(), [3.0, 3.0, 3.0]);

        let signed = qv1.with_polarity(Polarity::YesNoAbstain);
        assert_eq!(vscore(&signed, &[ballot("a", &[-4.0, 0.0])], 2).unwrap(), [-2.0, 0.0]);
        assert!(matches!(
            vscore(&qv1, &[ballot("a", &[-4.0, 0.0])], 2),
            Err(SchemeError::InvalidBallot { .. })
        ));
    }

    #[test]
    fn tally_examples() {
        let opts = ValidationOptions::default();
        let d = StakeDistribution::canonicalize([("a", 1.0), ("b", 2.0)]).unwrap();
        let t = tally(
            &SchemeSpec::linear(),
            &d,
            &[ballot("a", &[1.0, 0.0]), ballot("b", &[0.0, 2.0])],
            2,
            opts,
        )
        .unwrap();
        assert_eq!(t.scores(), [1.0, 2.0]);
        assert_eq!(t.vscores(), [1.0, 2.0]);

        let d = StakeDistribution::canonicalize([("a", 4.0), ("b", 9.0)]).unwrap();
        let t = tally(
            &SchemeSpec::qv3(),
            &d,
            &[ballot("a", &[2.0, 2.0]), ballot("b", &[3.0, 0.0])],
            2,
            opts,
        )
        .unwrap();
        assert_eq!(t.vscores(), [5.0, 2.0]);
        assert_eq!(t.voters[0].credit_used, 2.0);
        assert_eq!(t.voters[1].credit_used, 3.0);

        let err = tally(&SchemeSpec::qv3(), &d, &[ballot("z", &[0.0, 0.0])], 2, opts).unwrap_err();
        assert_eq!(err, SchemeError::UnknownVoter("z".into()));

        let err = tally(
            &SchemeSpec::qv3(),
            &d,
            &[ballot("a", &[2.0, 0.0]), ballot("a", &[2.0, 0.0])],
            2,
            opts,
        )
        .unwrap_err();
        assert_eq!(err, SchemeError::DuplicateBallot("a".into()));

        let err = tally(&SchemeSpec::qv2(), &d, &[ballot("b", &[2.0, 2.0])], 2, opts).unwrap_err();
        assert!(matches!(err, SchemeError::InvalidBallot { ref voter_id, .. } if voter_id == "b"));
    }
}
