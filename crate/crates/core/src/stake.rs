//! Stake distributions: validation, canonical ordering, normalization, CSV I/O
//! and seeded synthetic populations.
//!
//! A [`StakeDistribution`] is always sorted ascending by stake with ties broken
//! by voter id, so index `i` in every derived vector (relative voting ratios,
//! Lorenz points, ...) refers to the `i`-th smallest stakeholder.

use std::collections::HashSet;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Pareto, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::compensated_sum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StakeError {
    #[error("stake of voter {voter_id:?} must be positive, got {stake}")]
    NonPositiveStake { voter_id: String, stake: f64 },
    #[error("stake of voter {voter_id:?} is not finite")]
    NonFiniteStake { voter_id: String },
    #[error("voter {0:?} appears more than once")]
    DuplicateVoter(String),
    #[error("stake distribution is empty")]
    Empty,
    #[error("invalid distribution spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected header `voter_id,stake`, found `{found}`")]
    Header { line: u64, found: String },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: {source}")]
    Domain { line: u64, source: StakeError },
}

impl CsvError {
    pub fn line(&self) -> Option<u64> {
        match self {
            CsvError::Io(_) => None,
            CsvError::Header { line, .. }
            | CsvError::Parse { line, .. }
            | CsvError::Domain { line, .. } => Some(*line),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StakeEntry {
    pub voter_id: String,
    pub stake: f64,
}

impl StakeEntry {
    pub fn new(voter_id: impl Into<String>, stake: f64) -> Self {
        StakeEntry {
            voter_id: voter_id.into(),
            stake,
        }
    }
}

/// Validated stakes sorted ascending (ties by voter id).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StakeDistribution {
    entries: Vec<StakeEntry>,
}

impl StakeDistribution {
    /// Validates raw `(voter_id, stake)` pairs and sorts them canonically.
    pub fn canonicalize<I, S>(raw: I) -> Result<Self, StakeError>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let entries = raw
            .into_iter()
            .map(|(id, stake)| StakeEntry::new(id, stake))
            .collect();
        Self::from_entries(entries)
    }

    pub fn from_entries(mut entries: Vec<StakeEntry>) -> Result<Self, StakeError> {
        if entries.is_empty() {
            return Err(StakeError::Empty);
        }
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            check_stake(&e.voter_id, e.stake)?;
            if !seen.insert(e.voter_id.as_str()) {
                return Err(StakeError::DuplicateVoter(e.voter_id.clone()));
            }
        }
        entries.sort_by(|a, b| {
            a.stake
                .total_cmp(&b.stake)
                .then_with(|| a.voter_id.cmp(&b.voter_id))
        });
        Ok(StakeDistribution { entries })
    }

    /// Anonymous distribution; voters are named `v0`, `v1`, ... in input order.
    pub fn from_stakes(stakes: &[f64]) -> Result<Self, StakeError> {
        Self::canonicalize(
            stakes
                .iter()
                .enumerate()
                .map(|(i, &s)| (format!("v{i}"), s)),
        )
    }

    pub fn entries(&self) -> &[StakeEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn stakes(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.stake).collect()
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.entries.iter().map(|e| e.stake))
    }

    pub fn stake_of(&self, voter_id: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.voter_id == voter_id)
            .map(|e| e.stake)
    }

    /// True when no two voters hold exactly the same stake.
    pub fn is_tie_free(&self) -> bool {
        self.entries.windows(2).all(|w| w[0].stake < w[1].stake)
    }

    /// Relative stakes `s_i / s`, in canonical order.
    pub fn normalize(&self) -> Vec<f64> {
        let total = self.total();
        self.entries.iter().map(|e| e.stake / total).collect()
    }

    /// Same voters with every stake replaced by `map(stake)`. The caller must
    /// pass a nondecreasing map; the result is re-validated and re-sorted.
    pub fn map_stakes<F>(&self, map: F) -> Result<Self, StakeError>
    where
        F: Fn(f64) -> f64,
    {
        Self::from_entries(
            self.entries
                .iter()
                .map(|e| StakeEntry::new(e.voter_id.clone(), map(e.stake)))
                .collect(),
        )
    }

    /// Reads a `voter_id,stake` CSV file. Line numbers in errors are 1-based
    /// and count the header as line 1.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, CsvError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| csv_parse_error(e, 1))?.clone();
        if headers.len() != 2 || &headers[0] != "voter_id" || &headers[1] != "stake" {
            return Err(CsvError::Header {
                line: 1,
                found: headers.iter().collect::<Vec<_>>().join(","),
            });
        }
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for record in rdr.records() {
            let record = record.map_err(|e| csv_parse_error(e, 0))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let voter_id = record[0].to_string();
            let stake: f64 = record[1].parse().map_err(|_| CsvError::Parse {
                line,
                message: format!("cannot parse stake `{}` as a decimal number", &record[1]),
            })?;
            check_stake(&voter_id, stake).map_err(|source| CsvError::Domain { line, source })?;
            if !seen.insert(voter_id.clone()) {
                return Err(CsvError::Domain {
                    line,
                    source: StakeError::DuplicateVoter(voter_id),
                });
            }
            entries.push(StakeEntry { voter_id, stake });
        }
        Self::from_entries(entries).map_err(|source| CsvError::Domain { line: 1, source })
    }

    /// Writes the distribution as `voter_id,stake` CSV. Stakes use the
    /// shortest representation that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CsvError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| CsvError::Io(std::io::Error::other(e));
        wtr.write_record(["voter_id", "stake"]).map_err(io)?;
        for e in &self.entries {
            wtr.write_record([e.voter_id.as_str(), &e.stake.to_string()])
                .map_err(io)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn check_stake(voter_id: &str, stake: f64) -> Result<(), StakeError> {
    if stake.is_nan() || stake <= 0.0 {
        return Err(StakeError::NonPositiveStake {
            voter_id: voter_id.to_string(),
            stake,
        });
    }
    if !stake.is_finite() {
        return Err(StakeError::NonFiniteStake {
            voter_id: voter_id.to_string(),
        });
    }
    Ok(())
}

fn csv_parse_error(e: csv::Error, fallback_line: u64) -> CsvError {
    let line = e
        .position()
        .map(|p| p.line())
        .unwrap_or(fallback_line);
    CsvError::Parse {
        line,
        message: e.to_string(),
    }
}

/// Shape of a synthetic population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DistributionKind {
    Constant { value: f64 },
    UniformRange { lo: f64, hi: f64 },
    Pareto { shape: f64, scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub kind: DistributionKind,
    pub n: usize,
    pub seed: u64,
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<(), StakeError> {
        if self.n == 0 {
            return Err(StakeError::InvalidSpec("n must be at least 1".into()));
        }
        let ok = |c: bool, msg: &str| {
            if c {
                Ok(())
            } else {
                Err(StakeError::InvalidSpec(msg.into()))
            }
        };
        match self.kind {
            DistributionKind::Constant { value } => {
                ok(value.is_finite() && value > 0.0, "constant value must be positive")
            }
            DistributionKind::UniformRange { lo, hi } => {
                ok(lo.is_finite() && hi.is_finite(), "bounds must be finite")?;
                ok(lo > 0.0, "lo must be positive")?;
                ok(lo < hi, "lo must be smaller than hi")
            }
            DistributionKind::Pareto { shape, scale } => {
                ok(shape.is_finite() && shape > 0.0, "shape must be positive")?;
                ok(scale.is_finite() && scale > 0.0, "scale must be positive")
            }
        }
    }
}

/// Seeded synthetic population.
///
/// The stream is ChaCha8 (`rand_chacha`) seeded with `seed_from_u64`, so the
/// output is a pure function of the spec. Voter ids are `v` followed by the
/// zero-padded draw index.
pub fn generate(spec: &DistributionSpec) -> Result<StakeDistribution, StakeError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let stakes: Vec<f64> = match spec.kind {
        DistributionKind::Constant { value } => vec![value; spec.n],
        DistributionKind::UniformRange { lo, hi } => {
            let dist = Uniform::new(lo, hi).map_err(|e| StakeError::InvalidSpec(e.to_string()))?;
            (0..spec.n).map(|_| dist.sample(&mut rng)).collect()
        }
        DistributionKind::Pareto { shape, scale } => {
            let dist =
                Pareto::new(scale, shape).map_err(|e| StakeError::InvalidSpec(e.to_string()))?;
            (0..spec.n).map(|_| dist.sample(&mut rng)).collect()
        }
    };
    let width = spec.n.to_string().len();
    StakeDistribution::canonicalize(
        stakes
            .into_iter()
            .enumerate()
            .map(|(i, s)| (format!("v{i:0width$}"), s)),
    )
}
