//! Power transformation `T_γ(s) = s^γ` of a stake distribution and the
//! bisection search for the `γ` that caps the combined relative impact of the
//! `k` largest stakeholders at a target `α`.
//!
//! Throughout, `k` counts the *largest* stakeholders: `top_share(dist, 1, γ)`
//! is the share of the single biggest voter.

use serde::Serialize;
use thiserror::Error;

use crate::metrics::{self, MetricsError};
use crate::numeric::{compensated_sum, scaled_powers};
use crate::stake::{StakeDistribution, StakeError};

pub const DEFAULT_SEARCH_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 200;
pub const DEFAULT_BRACKET: (f64, f64) = (1e-9, 1.0);

/// Nakamoto thresholds checked by [`verify_transform_properties`].
pub const PROPERTY_THRESHOLDS: [f64; 4] = [0.33, 0.51, 0.67, 0.9];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("gamma must lie in (0, 1], got {0}")]
    GammaOutOfRange(f64),
    #[error("k = {k} is outside 1..={n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("target {alpha} is not above the floor k/n = {floor}; no gamma in (0, 1] reaches it")]
    TargetBelowFloor { alpha: f64, floor: f64 },
    #[error("target {alpha} exceeds the untransformed top share {current}")]
    TargetAboveCurrent { alpha: f64, current: f64 },
    #[error("search did not converge in {} iterations (best gamma {}, share {})", .best.iterations, .best.gamma, .best.achieved_share)]
    NoConvergence { best: GammaSearchResult },
    #[error("invalid search parameters: {0}")]
    InvalidParameters(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Stake(#[from] StakeError),
}

fn check_gamma(gamma: f64) -> Result<(), TransformError> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(TransformError::GammaOutOfRange(gamma))
    }
}

fn check_k(dist: &StakeDistribution, k: usize) -> Result<(), TransformError> {
    if k >= 1 && k <= dist.len() {
        Ok(())
    } else {
        Err(TransformError::KOutOfRange { k, n: dist.len() })
    }
}

/// Every stake replaced by `stake^γ`; voter ranking is unchanged.
pub fn apply_gamma(dist: &StakeDistribution, gamma: f64) -> Result<StakeDistribution, TransformError> {
    check_gamma(gamma)?;
    if gamma == 1.0 {
        return Ok(dist.clone());
    }
    Ok(dist.map_stakes(|s| s.powf(gamma))?)
}

/// Share of the transformed total held by the `k` largest stakeholders.
pub fn top_share(dist: &StakeDistribution, k: usize, gamma: f64) -> Result<f64, TransformError> {
    check_gamma(gamma)?;
    check_k(dist, k)?;
    Ok(top_share_unchecked(&dist.stakes(), k, gamma))
}

fn top_share_unchecked(stakes: &[f64], k: usize, gamma: f64) -> f64 {
    let n = stakes.len();
    if k == n {
        return 1.0;
    }
    let w = scaled_powers(stakes, gamma);
    let top = compensated_sum(w[n - k..].iter().copied());
    let rest = compensated_sum(w[..n - k].iter().copied());
    top / (top + rest)
}

/// Analytic `d/dγ` of [`top_share`].
///
/// With weights `w_i = s_i^γ`, `t = W_top / W` and the derivative is
/// `(Σ_top w_i ln s_i · W − W_top · Σ w_i ln s_i) / W²`. It is positive
/// whenever the stakes are not all equal and `k < n`.
pub fn top_share_derivative(dist: &StakeDistribution, k: usize, gamma: f64) -> Result<f64, TransformError> {
    check_gamma(gamma)?;
    check_k(dist, k)?;
    let stakes = dist.stakes();
    let n = stakes.len();
    let w = scaled_powers(&stakes, gamma);
    // logs relative to the max cancel in the difference and keep terms small
    let ln_max = stakes[n - 1].ln();
    let lw: Vec<f64> = stakes.iter().zip(&w).map(|(s, w)| w * (s.ln() - ln_max)).collect();
    let total = compensated_sum(w.iter().copied());
    let top = compensated_sum(w[n - k..].iter().copied());
    let total_l = compensated_sum(lw.iter().copied());
    let top_l = compensated_sum(lw[n - k..].iter().copied());
    Ok((top_l * total - top * total_l) / (total * total))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaSearchParams {
    /// Tolerance on the achieved share; the `γ` bracket is also narrowed to it.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial `(γ_lo, γ_hi)` bracket inside `(0, 1]`.
    pub bracket: (f64, f64),
    /// Reject targets above the untransformed share instead of returning `γ = 1`.
    pub strict_input: bool,
}

impl Default for GammaSearchParams {
    fn default() -> Self {
        GammaSearchParams {
            tol: DEFAULT_SEARCH_TOL,
            max_iter: DEFAULT_MAX_ITER,
            bracket: DEFAULT_BRACKET,
            strict_input: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaSearchResult {
    pub gamma: f64,
    pub achieved_share: f64,
    pub target: f64,
    pub k: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Finds `γ` with `top_share(dist, k, γ) ≈ alpha` by bisection.
///
/// The share is strictly increasing in `γ` and tends to `k/n` as `γ → 0`, so
/// targets at or below `k/n` are unreachable. Targets at or above the
/// untransformed share need no transformation and return `γ = 1` unless
/// `strict_input` is set.
///
/// Iteration stops once the share is within `tol` of the target and the
/// bracket is narrower than `tol`, so two runs from different brackets agree
/// on `γ` and not just on the share.
pub fn gamma_search(
    dist: &StakeDistribution,
    k: usize,
    alpha: f64,
    params: &GammaSearchParams,
) -> Result<GammaSearchResult, TransformError> {
    check_k(dist, k)?;
    let (mut lo, mut hi) = params.bracket;
    let bracket_ok = lo > 0.0 && lo < hi && hi <= 1.0;
    if params.tol.is_nan() || params.tol <= 0.0 || !bracket_ok || !alpha.is_finite() {
        return Err(TransformError::InvalidParameters(format!(
            "tol {} bracket ({lo}, {hi}) alpha {alpha}",
            params.tol
        )));
    }
    let stakes = dist.stakes();
    let n = stakes.len();
    let floor = k as f64 / n as f64;
    let current = top_share_unchecked(&stakes, k, 1.0);
    let result = |gamma: f64, share: f64, iterations: usize, converged: bool| GammaSearchResult {
        gamma,
        achieved_share: share,
        target: alpha,
        k,
        iterations,
        converged,
    };

    if params.strict_input && alpha > current {
        return Err(TransformError::TargetAboveCurrent { alpha, current });
    }
    if alpha >= current {
        return Ok(result(1.0, current, 0, true));
    }
    if alpha <= floor {
        return Err(TransformError::TargetBelowFloor { alpha, floor });
    }

    let share = |g: f64| top_share_unchecked(&stakes, k, g);
    let mut best = result(hi, share(hi), 0, false);
    for iter in 1..=params.max_iter {
        let mid = 0.5 * (lo + hi);
        // bracket exhausted in floating point
        let stalled = mid <= lo || mid >= hi;
        let t = share(mid);
        if (t - alpha).abs() < (best.achieved_share - alpha).abs() {
            best = result(mid, t, iter, false);
        }
        if t > alpha {
            hi = mid;
        } else {
            lo = mid;
        }
        if (t - alpha).abs() <= params.tol && (hi - lo <= params.tol || stalled) {
            return Ok(result(mid, t, iter, true));
        }
        if stalled {
            break;
        }
    }
    best.iterations = params.max_iter;
    if (best.achieved_share - alpha).abs() <= params.tol {
        best.converged = true;
        return Ok(best);
    }
    Err(TransformError::NoConvergence { best })
}

/// Outcome of one transformation property check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropertyStatus {
    Pass,
    Fail,
    /// The strict statement cannot hold because of tied stakes (for example
    /// all stakes equal, where every ratio is exactly 1).
    TieDegenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub property: u8,
    pub name: &'static str,
    pub status: PropertyStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformPropertyReport {
    pub gamma: f64,
    pub alpha: f64,
    pub checks: Vec<PropertyCheck>,
}

impl TransformPropertyReport {
    pub fn status(&self, property: u8) -> PropertyStatus {
        self.checks
            .iter()
            .find(|c| c.property == property)
            .map(|c| c.status)
            .expect("properties 1..=6 are always reported")
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status == PropertyStatus::Pass)
    }
}

/// Checks the six transformation properties for `T_γ` on `dist`:
///
/// 1. relative impacts keep the stake order;
/// 2. the smallest stakeholder gains and the largest loses;
/// 3. gainers form a prefix of the ascending order;
/// 4. losers form a suffix;
/// 5. Gini strictly improves and no Nakamoto coefficient (thresholds in
///    [`PROPERTY_THRESHOLDS`]) gets worse;
/// 6. every relative transformed impact is at most `alpha` (plus
///    [`DEFAULT_SEARCH_TOL`] slack, the search tolerance).
pub fn verify_transform_properties(
    dist: &StakeDistribution,
    gamma: f64,
    alpha: f64,
) -> Result<TransformPropertyReport, TransformError> {
    check_gamma(gamma)?;
    let stakes = dist.stakes();
    let n = stakes.len();
    let before = dist.normalize();
    let after = metrics::rvr_split(dist, gamma)?;
    let tie_free = dist.is_tie_free();
    let all_equal = stakes.first() == stakes.last();
    let degenerate = |ok: bool| match (ok, tie_free) {
        (true, _) => PropertyStatus::Pass,
        (false, false) => PropertyStatus::TieDegenerate,
        (false, true) => PropertyStatus::Fail,
    };
    let mut checks = Vec::with_capacity(6);

    // 1
    let order_ok = (1..n).all(|i| {
        if stakes[i - 1] < stakes[i] {
            after[i - 1] < after[i]
        } else {
            after[i - 1] == after[i]
        }
    });
    checks.push(PropertyCheck {
        property: 1,
        name: "order-preservation",
        status: if order_ok { PropertyStatus::Pass } else { PropertyStatus::Fail },
        detail: format!("{n} voters"),
    });

    // 2
    let gain = |i: usize| after[i] - before[i];
    let ends_ok = n >= 2 && gain(0) > 0.0 && gain(n - 1) < 0.0;
    checks.push(PropertyCheck {
        property: 2,
        name: "smallest-gains-largest-loses",
        status: if all_equal || n < 2 {
            if ends_ok { PropertyStatus::Pass } else { PropertyStatus::TieDegenerate }
        } else {
            degenerate(ends_ok)
        },
        detail: format!(
            "smallest {:+e}, largest {:+e}",
            gain(0),
            gain(n.saturating_sub(1))
        ),
    });

    // 3 and 4: sign pattern of the gains over ascending stakes
    let signs: Vec<i8> = (0..n)
        .map(|i| match gain(i) {
            g if g > 0.0 => 1,
            g if g < 0.0 => -1,
            _ => 0,
        })
        .collect();
    let prefix_ok = signs
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == 1)
        .all(|(k, _)| signs[..k].iter().all(|&s| s == 1));
    let suffix_ok = signs
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == -1)
        .all(|(k, _)| signs[k..].iter().all(|&s| s == -1));
    let gainers = signs.iter().filter(|&&s| s == 1).count();
    let losers = signs.iter().filter(|&&s| s == -1).count();
    checks.push(PropertyCheck {
        property: 3,
        name: "gainers-prefix",
        status: degenerate(prefix_ok),
        detail: format!("{gainers} gainers"),
    });
    checks.push(PropertyCheck {
        property: 4,
        name: "losers-suffix",
        status: degenerate(suffix_ok),
        detail: format!("{losers} losers"),
    });

    // 5
    let lin_credits = metrics::gamma_credits(dist, 1.0);
    let new_credits = metrics::gamma_credits(dist, gamma);
    let g_lin = metrics::gini(&lin_credits)?;
    let g_new = metrics::gini(&new_credits)?;
    let mut nakamoto_ok = true;
    for a in PROPERTY_THRESHOLDS {
        nakamoto_ok &= metrics::nakamoto(&new_credits, a)? >= metrics::nakamoto(&lin_credits, a)?;
    }
    let gini_ok = g_new < g_lin;
    checks.push(PropertyCheck {
        property: 5,
        name: "gini-and-nakamoto-improve",
        status: if all_equal {
            if nakamoto_ok && g_new <= g_lin {
                PropertyStatus::TieDegenerate
            } else {
                PropertyStatus::Fail
            }
        } else if gini_ok && nakamoto_ok {
            PropertyStatus::Pass
        } else {
            PropertyStatus::Fail
        },
        detail: format!("gini {g_lin} -> {g_new}"),
    });

    // 6
    let max_share = after.iter().cloned().fold(0.0, f64::max);
    checks.push(PropertyCheck {
        property: 6,
        name: "max-impact-capped",
        status: if max_share <= alpha + DEFAULT_SEARCH_TOL {
            PropertyStatus::Pass
        } else {
            PropertyStatus::Fail
        },
        detail: format!("max relative impact {max_share}"),
    });

    Ok(TransformPropertyReport { gamma, alpha, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(stakes: &[f64]) -> StakeDistribution {
        StakeDistribution::from_stakes(stakes).unwrap()
    }

    #[test]
    fn apply_gamma_examples() {
        let d = dist(&[3.0, 7.0]);
        assert_eq!(apply_gamma(&d, 1.0).unwrap(), d);
        assert_eq!(apply_gamma(&dist(&[4.0, 16.0]), 0.5).unwrap().stakes(), [2.0, 4.0]);
        let cubes = apply_gamma(&dist(&[1.0, 8.0]), 1.0 / 3.0).unwrap().stakes();
        assert_eq!(cubes[0], 1.0);
        assert!((cubes[1] - 2.0).abs() < 1e-15);
        assert_eq!(apply_gamma(&d, 0.0), Err(TransformError::GammaOutOfRange(0.0)));
    }

    #[test]
    fn apply_gamma_keeps_voter_order() {
        let d = StakeDistribution::canonicalize([("x", 5.0), ("y", 2.0), ("z", 90.0)]).unwrap();
        let t = apply_gamma(&d, 0.2).unwrap();
        let ids: Vec<_> = t.entries().iter().map(|e| e.voter_id.as_str()).collect();
        assert_eq!(ids, ["y", "x", "z"]);
    }

    #[test]
    fn top_share_examples() {
        let d = dist(&[1.0, 99.0]);
        assert!((top_share(&d, 1, 1.0).unwrap() - 0.99).abs() < 1e-15);
        assert_eq!(top_share(&d, 2, 0.3).unwrap(), 1.0);
        assert!((top_share(&d, 1, 1e-12).unwrap() - 0.5).abs() < 1e-10);
        assert_eq!(top_share(&d, 0, 0.5), Err(TransformError::KOutOfRange { k: 0, n: 2 }));
        assert_eq!(top_share(&d, 3, 0.5), Err(TransformError::KOutOfRange { k: 3, n: 2 }));
    }

    #[test]
    fn gamma_search_two_voters_closed_form() {
        let d = dist(&[1.0, 99.0]);
        let r = gamma_search(&d, 1, 0.6, &GammaSearchParams::default()).unwrap();
        assert!(r.converged);
        // 99^γ / (1 + 99^γ) = 0.6  ⇔  γ = ln 1.5 / ln 99
        let expected = 1.5_f64.ln() / 99_f64.ln();
        assert!((r.gamma - expected).abs() < 1e-8, "{} vs {expected}", r.gamma);
        assert!((r.achieved_share - 0.6).abs() <= 1e-9);
        assert!(r.iterations <= DEFAULT_MAX_ITER);
    }

    #[test]
    fn gamma_search_already_satisfied() {
        let d = dist(&[1.0, 99.0]);
        let r = gamma_search(&d, 1, 0.995, &GammaSearchParams::default()).unwrap();
        assert_eq!(r.gamma, 1.0);
        assert!(r.converged);
        assert!((r.achieved_share - 0.99).abs() < 1e-15);

        let strict = GammaSearchParams {
            strict_input: true,
            ..Default::default()
        };
        assert!(matches!(
            gamma_search(&d, 1, 0.995, &strict),
            Err(TransformError::TargetAboveCurrent { .. })
        ));
    }

    #[test]
    fn gamma_search_below_floor() {
        let d = dist(&[1.0, 99.0]);
        assert_eq!(
            gamma_search(&d, 1, 0.4, &GammaSearchParams::default()),
            Err(TransformError::TargetBelowFloor { alpha: 0.4, floor: 0.5 })
        );
        assert!(matches!(
            gamma_search(&d, 1, 0.5, &GammaSearchParams::default()),
            Err(TransformError::TargetBelowFloor { .. })
        ));
    }

    #[test]
    fn gamma_search_reports_no_convergence() {
        let d = dist(&[1.0, 2.0, 50.0, 400.0]);
        let params = GammaSearchParams {
            max_iter: 3,
            ..Default::default()
        };
        match gamma_search(&d, 1, 0.4, &params) {
            Err(TransformError::NoConvergence { best }) => {
                assert!(!best.converged);
                assert_eq!(best.iterations, 3);
                assert!(best.gamma > 0.0 && best.gamma <= 1.0);
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn gamma_search_rejects_bad_params() {
        let d = dist(&[1.0, 99.0]);
        for params in [
            GammaSearchParams { tol: 0.0, ..Default::default() },
            GammaSearchParams { bracket: (0.5, 0.2), ..Default::default() },
            GammaSearchParams { bracket: (0.0, 1.0), ..Default::default() },
        ] {
            assert!(matches!(
                gamma_search(&d, 1, 0.6, &params),
                Err(TransformError::InvalidParameters(_))
            ));
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let d = dist(&[0.5, 2.0, 3.0, 40.0, 900.0]);
        for k in 1..=4 {
            for gamma in [0.1, 0.35, 0.6, 0.95] {
                let h = 1e-6;
                let fd = (top_share(&d, k, gamma + h).unwrap() - top_share(&d, k, gamma - h).unwrap())
                    / (2.0 * h);
                let an = top_share_derivative(&d, k, gamma).unwrap();
                assert!(an > 0.0);
                assert!(((fd - an) / an).abs() < 1e-4, "k={k} γ={gamma}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn properties_on_small_example() {
        let d = dist(&[1.0, 4.0, 9.0]);
        let report = verify_transform_properties(&d, 0.5, 0.5).unwrap();
        for p in 1..=6 {
            assert_eq!(report.status(p), PropertyStatus::Pass, "property {p}");
        }
        let tight = verify_transform_properties(&d, 0.5, 0.3).unwrap();
        assert_eq!(tight.status(6), PropertyStatus::Fail);
    }

    #[test]
    fn properties_on_equal_stakes() {
        let d = dist(&[2.0; 4]);
        let report = verify_transform_properties(&d, 0.5, 0.9).unwrap();
        assert_eq!(report.status(1), PropertyStatus::Pass);
        assert_eq!(report.status(2), PropertyStatus::TieDegenerate);
        assert_eq!(report.status(5), PropertyStatus::TieDegenerate);
    }

    #[test]
    fn property_six_holds_at_searched_gamma() {
        let d = dist(&[1.0, 3.0, 10.0, 30.0, 200.0]);
        let alpha = 0.4;
        let r = gamma_search(&d, 1, alpha, &GammaSearchParams::default()).unwrap();
        let report = verify_transform_properties(&d, r.gamma, alpha).unwrap();
        assert!(report.all_pass(), "{report:?}");
    }
}
