//! Expected utility of a voter who splits credit across proposals, and the
//! constrained maximizers for QV-1 and QV-2.
//!
//! A proposal `r` succeeds with probability `(s_r + a_r) / (s_r + b_r)` where
//! `s_r` is the voter's own allocation, `b_r` the external vote mass on the
//! proposal and `a_r ≤ b_r` the part of it aligned with the voter. Utility is
//! `U(s) = Σ π_r (s_r + a_r)/(s_r + b_r)`; `∂U/∂s_r = c_r / (s_r + b_r)²` with
//! `c_r = π_r (b_r − a_r)`.
//!
//! Feasible sets (allocations are nonnegative):
//! * QV-1: `Σ s_r² = s` (sphere),
//! * QV-2: `Σ s_r = √s` (scaled simplex).
//!
//! Multipliers use the `2λ` convention in both cases: stationarity reads
//! `c_r/(s_r+b_r)² = 2λ s_r` for QV-1 and `c_r/(s_r+b_r)² = 2λ` for QV-2.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{bisect_bracket, compensated_sum};

/// Stationarity tolerance used when the caller gives none.
pub const DEFAULT_KKT_TOL: f64 = 1e-8;
/// Constraint tolerance on returned allocations.
pub const CONSTRAINT_TOL: f64 = 1e-9;
pub const MAX_ORACLE_DIM: usize = 4;
pub const MIN_ORACLE_RESOLUTION: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UtilityScheme {
    Qv1,
    Qv2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    AnalyticLagrange,
    Oracle,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UtilityError {
    #[error("expected {expected} entries for {field}, got {actual}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("problem has no proposals")]
    NoProposals,
    #[error("aligned mass exceeds total mass (or is negative) at proposal {index}")]
    AlignedExceedsTotal { index: usize },
    #[error("profit at proposal {index} is negative")]
    NegativeProfit { index: usize },
    #[error("{field}[{index}] is not finite")]
    NonFinite { field: &'static str, index: usize },
    #[error("own stake must be positive, got {0}")]
    NonPositiveStake(f64),
    #[error("allocation and external mass are both zero at proposal {index}")]
    DegenerateDenominator { index: usize },
    #[error("allocation entry {index} is negative")]
    NegativeAllocation { index: usize },
    #[error("objective does not depend on the allocation; any feasible point is optimal")]
    FlatObjective { canonical: Box<AllocationSolution> },
    #[error("solver stopped with KKT residual {residual} above tolerance {tol}")]
    NoConvergence { residual: f64, tol: f64 },
    #[error("oracle supports at most {MAX_ORACLE_DIM} proposals, got {0}")]
    DimensionTooLarge(usize),
    #[error("oracle resolution must be at least {MIN_ORACLE_RESOLUTION}, got {0}")]
    ResolutionTooSmall(usize),
    #[error("solution violates its constraint by {violation}")]
    InfeasibleSolution { violation: f64 },
    #[error("problem is for {problem:?} but {requested:?} was requested")]
    SchemeMismatch {
        problem: UtilityScheme,
        requested: UtilityScheme,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityProblem {
    pub profits: Vec<f64>,
    pub aligned: Vec<f64>,
    pub total: Vec<f64>,
    pub stake: f64,
    pub scheme: UtilityScheme,
}

impl UtilityProblem {
    pub fn new(
        scheme: UtilityScheme,
        profits: Vec<f64>,
        aligned: Vec<f64>,
        total: Vec<f64>,
        stake: f64,
    ) -> Result<Self, UtilityError> {
        let p = UtilityProblem {
            profits,
            aligned,
            total,
            stake,
            scheme,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn m(&self) -> usize {
        self.profits.len()
    }

    pub fn validate(&self) -> Result<(), UtilityError> {
        let m = self.profits.len();
        if m == 0 {
            return Err(UtilityError::NoProposals);
        }
        for (field, v) in [("aligned", &self.aligned), ("total", &self.total)] {
            if v.len() != m {
                return Err(UtilityError::LengthMismatch {
                    field,
                    expected: m,
                    actual: v.len(),
                });
            }
        }
        for (field, v) in [
            ("profits", &self.profits),
            ("aligned", &self.aligned),
            ("total", &self.total),
        ] {
            if let Some(index) = v.iter().position(|x| !x.is_finite()) {
                return Err(UtilityError::NonFinite { field, index });
            }
        }
        if let Some(index) = self.profits.iter().position(|&p| p < 0.0) {
            return Err(UtilityError::NegativeProfit { index });
        }
        for index in 0..m {
            if self.aligned[index] < 0.0 || self.aligned[index] > self.total[index] {
                return Err(UtilityError::AlignedExceedsTotal { index });
            }
        }
        if !(self.stake.is_finite() && self.stake > 0.0) {
            return Err(UtilityError::NonPositiveStake(self.stake));
        }
        Ok(())
    }

    /// `c_r = π_r (b_r − a_r)`, the numerator of every partial derivative.
    pub fn gradient_weights(&self) -> Vec<f64> {
        (0..self.m())
            .map(|r| self.profits[r] * (self.total[r] - self.aligned[r]))
            .collect()
    }

    /// Right-hand side of the constraint: `s` for QV-1, `√s` for QV-2.
    pub fn budget(&self) -> f64 {
        match self.scheme {
            UtilityScheme::Qv1 => self.stake,
            UtilityScheme::Qv2 => self.stake.sqrt(),
        }
    }

    /// Left-hand side of the constraint for `allocation`.
    pub fn constraint_value(&self, allocation: &[f64]) -> f64 {
        match self.scheme {
            UtilityScheme::Qv1 => compensated_sum(allocation.iter().map(|x| x * x)),
            UtilityScheme::Qv2 => compensated_sum(allocation.iter().copied()),
        }
    }

    /// The point that puts the whole budget on proposal 1.
    fn canonical_point(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.m()];
        x[0] = self.stake.sqrt();
        x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationSolution {
    pub scheme: UtilityScheme,
    pub allocation: Vec<f64>,
    pub multiplier: f64,
    pub utility: f64,
    pub kkt_residual: f64,
    pub method: SolveMethod,
}

/// `(s_r + a_r) / (s_r + b_r)`.
pub fn success_probability(s_r: f64, a_r: f64, b_r: f64) -> Result<f64, UtilityError> {
    success_probability_at(0, s_r, a_r, b_r)
}

fn success_probability_at(index: usize, s_r: f64, a_r: f64, b_r: f64) -> Result<f64, UtilityError> {
    if a_r < 0.0 || a_r > b_r {
        return Err(UtilityError::AlignedExceedsTotal { index });
    }
    if s_r < 0.0 {
        return Err(UtilityError::NegativeAllocation { index });
    }
    let denom = s_r + b_r;
    if denom <= 0.0 {
        return Err(UtilityError::DegenerateDenominator { index });
    }
    Ok((s_r + a_r) / denom)
}

fn check_allocation(problem: &UtilityProblem, allocation: &[f64]) -> Result<(), UtilityError> {
    if allocation.len() != problem.m() {
        return Err(UtilityError::LengthMismatch {
            field: "allocation",
            expected: problem.m(),
            actual: allocation.len(),
        });
    }
    if let Some(index) = allocation.iter().position(|x| !x.is_finite()) {
        return Err(UtilityError::NonFinite {
            field: "allocation",
            index,
        });
    }
    if let Some(index) = allocation.iter().position(|&x| x < 0.0) {
        return Err(UtilityError::NegativeAllocation { index });
    }
    Ok(())
}

/// `Σ π_r (s_r + a_r)/(s_r + b_r)`. The budget constraint is not checked.
pub fn utility(problem: &UtilityProblem, allocation: &[f64]) -> Result<f64, UtilityError> {
    check_allocation(problem, allocation)?;
    let terms = (0..problem.m())
        .map(|r| {
            success_probability_at(r, allocation[r], problem.aligned[r], problem.total[r])
                .map(|p| problem.profits[r] * p)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(compensated_sum(terms))
}

/// `∂U/∂s_r = π_r (b_r − a_r)/(s_r + b_r)²`.
pub fn utility_gradient(problem: &UtilityProblem, allocation: &[f64]) -> Result<Vec<f64>, UtilityError> {
    check_allocation(problem, allocation)?;
    let c = problem.gradient_weights();
    (0..problem.m())
        .map(|r| {
            let d = allocation[r] + problem.total[r];
            if d <= 0.0 {
                Err(UtilityError::DegenerateDenominator { index: r })
            } else {
                Ok(c[r] / (d * d))
            }
        })
        .collect()
}

/// Common front half of both solvers: validation, degenerate problems and
/// the single-proposal case.
fn prepare(problem: &UtilityProblem, requested: UtilityScheme) -> Result<Option<AllocationSolution>, UtilityError> {
    problem.validate()?;
    if problem.scheme != requested {
        return Err(UtilityError::SchemeMismatch {
            problem: problem.scheme,
            requested,
        });
    }
    let m = problem.m();
    if m > 1 {
        if let Some(index) = problem.total.iter().position(|&b| b <= 0.0) {
            return Err(UtilityError::DegenerateDenominator { index });
        }
    }
    let flat = problem.gradient_weights().iter().all(|&c| c <= 0.0);
    if flat || m == 1 {
        let allocation = problem.canonical_point();
        let utility = utility(problem, &allocation)?;
        let solution = AllocationSolution {
            scheme: problem.scheme,
            multiplier: fitted_multiplier(problem, &allocation),
            utility,
            kkt_residual: 0.0,
            allocation,
            method: SolveMethod::AnalyticLagrange,
        };
        if flat && m > 1 {
            return Err(UtilityError::FlatObjective {
                canonical: Box::new(solution),
            });
        }
        let mut solution = solution;
        solution.kkt_residual = kkt_residual(problem, &solution)?;
        return Ok(Some(solution));
    }
    Ok(None)
}

fn finish(problem: &UtilityProblem, allocation: Vec<f64>, multiplier: f64, tol: f64) -> Result<AllocationSolution, UtilityError> {
    let mut solution = AllocationSolution {
        scheme: problem.scheme,
        utility: utility(problem, &allocation)?,
        allocation,
        multiplier,
        kkt_residual: 0.0,
        method: SolveMethod::AnalyticLagrange,
    };
    solution.kkt_residual = kkt_residual(problem, &solution)?;
    if solution.kkt_residual > tol {
        return Err(UtilityError::NoConvergence {
            residual: solution.kkt_residual,
            tol,
        });
    }
    Ok(solution)
}

/// Maximizes utility on the QV-1 sphere `Σ s_r² = s`.
///
/// For a fixed `λ > 0` each stationarity equation `c_r/(s_r+b_r)² = 2λ s_r`
/// has exactly one root in `[0, c_r/(2λ b_r²)]` (left side falls, right side
/// rises), found by bisection. `Σ s_r(λ)²` falls as `λ` grows, so an outer
/// bisection on `λ` (in log scale) meets the constraint; the result is then
/// rescaled onto the sphere exactly.
pub fn maximize_qv1(problem: &UtilityProblem, tol: f64) -> Result<AllocationSolution, UtilityError> {
    if let Some(forced) = prepare(problem, UtilityScheme::Qv1)? {
        return Ok(forced);
    }
    let c = problem.gradient_weights();
    let b = &problem.total;
    let budget = problem.budget();
    let coordinate = |r: usize, lambda: f64| -> f64 {
        if c[r] <= 0.0 {
            return 0.0;
        }
        let upper = c[r] / (2.0 * lambda * b[r] * b[r]);
        let (lo, hi) = bisect_bracket(0.0, upper, 200, |s| {
            c[r] / ((s + b[r]) * (s + b[r])) <= 2.0 * lambda * s
        });
        0.5 * (lo + hi)
    };
    let allocation_at = |lambda: f64| -> Vec<f64> { (0..c.len()).map(|r| coordinate(r, lambda)).collect() };
    let mass = |lambda: f64| compensated_sum(allocation_at(lambda).iter().map(|x| x * x));

    let (ln_lo, ln_hi) = bracket_log_lambda(|lambda| mass(lambda) <= budget);
    let (ln_lo, ln_hi) = bisect_bracket(ln_lo, ln_hi, 200, |ln_l| mass(ln_l.exp()) <= budget);
    let lambda = (0.5 * (ln_lo + ln_hi)).exp();
    let mut allocation = allocation_at(lambda);
    let scale = (budget / compensated_sum(allocation.iter().map(|x| x * x))).sqrt();
    for x in &mut allocation {
        *x *= scale;
    }
    finish(problem, allocation, lambda, tol)
}

/// Finds `ln λ` values on both sides of the point where `below(λ)` flips
/// from `false` to `true` (`below` must be monotone in `λ`).
fn bracket_log_lambda<F: Fn(f64) -> bool>(below: F) -> (f64, f64) {
    let mut lo = 0.0_f64;
    let mut hi = 0.0_f64;
    while !below(hi.exp()) && hi < 700.0 {
        hi += 2.0;
    }
    while below(lo.exp()) && lo > -700.0 {
        lo -= 2.0;
    }
    (lo, hi)
}

/// Maximizes utility on the QV-2 simplex `Σ s_r = √s`.
///
/// Stationarity gives `s_r(λ) = max(0, μ√c_r − b_r)` with `μ = 1/√(2λ)`. A
/// proposal is active once `μ` exceeds `b_r/√c_r`, so sorting proposals by
/// that threshold and growing the active set until the budget equation
/// `Σ_active (μ√c_r − b_r) = √s` is consistent yields the exact `μ` (water
/// filling). Clamped proposals satisfy `c_r/b_r² ≤ 2λ`.
pub fn maximize_qv2(problem: &UtilityProblem, tol: f64) -> Result<AllocationSolution, UtilityError> {
    if let Some(forced) = prepare(problem, UtilityScheme::Qv2)? {
        return Ok(forced);
    }
    let c = problem.gradient_weights();
    let b = &problem.total;
    let budget = problem.budget();
    let mut order: Vec<usize> = (0..c.len()).filter(|&r| c[r] > 0.0).collect();
    let threshold = |r: usize| b[r] / c[r].sqrt();
    order.sort_by(|&x, &y| threshold(x).total_cmp(&threshold(y)).then(x.cmp(&y)));

    let mut mu = 0.0;
    let mut sum_b = 0.0;
    let mut sum_root = 0.0;
    for (j, &r) in order.iter().enumerate() {
        sum_b += b[r];
        sum_root += c[r].sqrt();
        let candidate = (budget + sum_b) / sum_root;
        // next proposal would enter only if the level rises past its threshold
        let next_enters = order.get(j + 1).is_some_and(|&nr| candidate > threshold(nr));
        mu = candidate;
        if !next_enters {
            break;
        }
    }
    let allocation: Vec<f64> = (0..c.len())
        .map(|r| if c[r] > 0.0 { (mu * c[r].sqrt() - b[r]).max(0.0) } else { 0.0 })
        .collect();
    let lambda = 1.0 / (2.0 * mu * mu);
    finish(problem, allocation, lambda, tol)
}

/// Dispatches on `problem.scheme`.
pub fn maximize(problem: &UtilityProblem, tol: f64) -> Result<AllocationSolution, UtilityError> {
    match problem.scheme {
        UtilityScheme::Qv1 => maximize_qv1(problem, tol),
        UtilityScheme::Qv2 => maximize_qv2(problem, tol),
    }
}

/// Least-squares multiplier for an arbitrary feasible point.
fn fitted_multiplier(problem: &UtilityProblem, allocation: &[f64]) -> f64 {
    let grad = match utility_gradient(problem, allocation) {
        Ok(g) => g,
        Err(_) => return 0.0,
    };
    match problem.scheme {
        UtilityScheme::Qv1 => {
            let num = compensated_sum((0..grad.len()).map(|r| grad[r] * allocation[r]));
            let den = compensated_sum(allocation.iter().map(|x| x * x));
            if den > 0.0 { num / (2.0 * den) } else { 0.0 }
        }
        UtilityScheme::Qv2 => {
            let active: Vec<f64> = (0..grad.len())
                .filter(|&r| allocation[r] > 0.0)
                .map(|r| grad[r])
                .collect();
            if active.is_empty() {
                0.0
            } else {
                compensated_sum(active.iter().copied()) / (2.0 * active.len() as f64)
            }
        }
    }
}

/// Exhaustive grid search over the feasible set, refined once around the
/// best cell. Independent of the Lagrange machinery; used to check solvers.
///
/// QV-1 points are generated from hyperspherical angles in `[0, π/2]^(m−1)`,
/// QV-2 points from integer compositions of `resolution` into `m` parts.
pub fn brute_force_oracle(problem: &UtilityProblem, resolution: usize) -> Result<AllocationSolution, UtilityError> {
    problem.validate()?;
    let m = problem.m();
    if m > MAX_ORACLE_DIM {
        return Err(UtilityError::DimensionTooLarge(m));
    }
    if resolution < MIN_ORACLE_RESOLUTION {
        return Err(UtilityError::ResolutionTooSmall(resolution));
    }
    let eval = |x: &[f64]| utility(problem, x).unwrap_or(f64::NEG_INFINITY);
    let best = if m == 1 {
        problem.canonical_point()
    } else {
        match problem.scheme {
            UtilityScheme::Qv1 => oracle_sphere(problem, resolution, &eval),
            UtilityScheme::Qv2 => oracle_simplex(problem, resolution, &eval),
        }
    };
    let mut solution = AllocationSolution {
        scheme: problem.scheme,
        utility: eval(&best),
        multiplier: fitted_multiplier(problem, &best),
        kkt_residual: 0.0,
        allocation: best,
        method: SolveMethod::Oracle,
    };
    solution.kkt_residual = kkt_residual(problem, &solution).unwrap_or(f64::INFINITY);
    Ok(solution)
}

/// Points per axis for the refinement pass, capped so the pass stays near
/// four million evaluations.
fn refine_points(resolution: usize, dims: usize) -> usize {
    let cap = (4.0e6_f64).powf(1.0 / dims as f64).floor() as usize;
    resolution.min(cap).max(10)
}

/// Calls `visit` for every point of the grid `lo[d] + i·step[d]`, `i ∈ 0..=count`.
fn for_each_grid_point<F: FnMut(&[f64])>(lo: &[f64], step: &[f64], count: usize, mut visit: F) {
    let dims = lo.len();
    let mut idx = vec![0usize; dims];
    let mut point = lo.to_vec();
    loop {
        for d in 0..dims {
            point[d] = lo[d] + idx[d] as f64 * step[d];
        }
        visit(&point);
        let mut d = 0;
        loop {
            if d == dims {
                return;
            }
            idx[d] += 1;
            if idx[d] <= count {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

fn sphere_point(angles: &[f64], radius: f64) -> Vec<f64> {
    let mut x = Vec::with_capacity(angles.len() + 1);
    let mut sin_prod = radius;
    for &theta in angles {
        let theta = theta.clamp(0.0, FRAC_PI_2);
        x.push(sin_prod * theta.cos());
        sin_prod *= theta.sin();
    }
    x.push(sin_prod);
    x.iter().map(|v| v.max(0.0)).collect()
}

/// Best grid coordinates seen so far, with their utility.
struct GridBest {
    coords: Vec<f64>,
    utility: f64,
}

impl GridBest {
    fn scan<M, F>(&mut self, lo: &[f64], step: &[f64], count: usize, to_point: &M, eval: &F)
    where
        M: Fn(&[f64]) -> Option<Vec<f64>>,
        F: Fn(&[f64]) -> f64,
    {
        for_each_grid_point(lo, step, count, |coords| {
            if let Some(x) = to_point(coords) {
                let u = eval(&x);
                if u > self.utility {
                    self.utility = u;
                    self.coords.copy_from_slice(coords);
                }
            }
        });
    }

    /// Coarse pass over `[0, coarse·resolution]^dims`, then a finer pass over
    /// the neighbouring cells of the best coarse point.
    fn search<M, F>(&mut self, coarse: f64, resolution: usize, to_point: &M, eval: &F)
    where
        M: Fn(&[f64]) -> Option<Vec<f64>>,
        F: Fn(&[f64]) -> f64,
    {
        let dims = self.coords.len();
        self.scan(&vec![0.0; dims], &vec![coarse; dims], resolution, to_point, eval);
        let count = refine_points(resolution, dims);
        let lo: Vec<f64> = self.coords.iter().map(|c| c - coarse).collect();
        let step = vec![2.0 * coarse / count as f64; dims];
        self.scan(&lo, &step, count, to_point, eval);
    }
}

fn oracle_sphere<F: Fn(&[f64]) -> f64>(problem: &UtilityProblem, resolution: usize, eval: &F) -> Vec<f64> {
    let dims = problem.m() - 1;
    let radius = problem.stake.sqrt();
    let to_point = |angles: &[f64]| Some(sphere_point(angles, radius));
    let mut best = GridBest {
        coords: vec![0.0; dims],
        utility: f64::NEG_INFINITY,
    };
    best.search(FRAC_PI_2 / resolution as f64, resolution, &to_point, eval);
    sphere_point(&best.coords, radius)
}

fn oracle_simplex<F: Fn(&[f64]) -> f64>(problem: &UtilityProblem, resolution: usize, eval: &F) -> Vec<f64> {
    let dims = problem.m() - 1;
    let budget = problem.budget();
    // free coordinates are the first m-1; the last takes the remainder
    let to_point = |free: &[f64]| -> Option<Vec<f64>> {
        if free.iter().any(|&x| x < 0.0) {
            return None;
        }
        let last = budget - free.iter().sum::<f64>();
        if last < -1e-15 * budget {
            return None;
        }
        let mut x = free.to_vec();
        x.push(last.max(0.0));
        Some(x)
    };
    let mut best = GridBest {
        coords: vec![0.0; dims],
        utility: f64::NEG_INFINITY,
    };
    best.search(budget / resolution as f64, resolution, &to_point, eval);
    to_point(&best.coords).unwrap_or_else(|| problem.canonical_point())
}

/// First- and second-order optimality certificate of a feasible allocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktCertificate {
    /// `stationarity + constraint_violation`.
    pub residual: f64,
    /// Largest stationarity error: `|∂L/∂s_r|` at positive coordinates, the
    /// positive part of `∂L/∂s_r` at coordinates clamped to zero.
    pub stationarity: f64,
    pub constraint_violation: f64,
    /// Most positive diagonal entry of the Lagrangian Hessian over the
    /// positive coordinates; negative for a strict local maximum.
    pub max_hessian_diagonal: f64,
    /// Whether every border entry (`−2 s_r` for QV-1, `−2` for QV-2) over the
    /// positive coordinates is negative.
    pub border_negative: bool,
}

impl KktCertificate {
    /// The bordered Hessian has the negative-diagonal, negative-border sign
    /// pattern that certifies a maximum.
    pub fn second_order_ok(&self) -> bool {
        self.max_hessian_diagonal < 0.0 && self.border_negative
    }
}

/// Full certificate for `solution` (uses `solution.multiplier` as `λ`).
pub fn kkt_certificate(problem: &UtilityProblem, solution: &AllocationSolution) -> Result<KktCertificate, UtilityError> {
    problem.validate()?;
    let x = &solution.allocation;
    check_allocation(problem, x)?;
    let budget = problem.budget();
    let violation = (problem.constraint_value(x) - budget).abs();
    if violation > 1e-6 * (1.0 + budget) {
        return Err(UtilityError::InfeasibleSolution { violation });
    }
    let c = problem.gradient_weights();
    let lambda = solution.multiplier;
    let mut stationarity = 0.0_f64;
    let mut max_diag = f64::NEG_INFINITY;
    let mut border_negative = true;
    for r in 0..problem.m() {
        let d = x[r] + problem.total[r];
        if d <= 0.0 {
            // only reachable for m = 1 with b = 0, where the point is forced
            continue;
        }
        let grad = c[r] / (d * d);
        let (penalty, diag, border) = match problem.scheme {
            UtilityScheme::Qv1 => (
                2.0 * lambda * x[r],
                -2.0 * c[r] / (d * d * d) - 2.0 * lambda,
                -2.0 * x[r],
            ),
            UtilityScheme::Qv2 => (2.0 * lambda, -2.0 * c[r] / (d * d * d), -2.0),
        };
        let err = if x[r] > 0.0 {
            max_diag = max_diag.max(diag);
            border_negative &= border < 0.0;
            (grad - penalty).abs()
        } else {
            (grad - penalty).max(0.0)
        };
        stationarity = stationarity.max(err);
    }
    if problem.m() == 1 {
        // a single coordinate is pinned by the constraint, so stationarity
        // carries no information
        stationarity = 0.0;
    }
    Ok(KktCertificate {
        residual: stationarity + violation,
        stationarity,
        constraint_violation: violation,
        max_hessian_diagonal: max_diag,
        border_negative,
    })
}

/// `stationarity + constraint violation` of `solution`.
pub fn kkt_residual(problem: &UtilityProblem, solution: &AllocationSolution) -> Result<f64, UtilityError> {
    Ok(kkt_certificate(problem, solution)?.residual)
}
