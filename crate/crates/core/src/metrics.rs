//! Decentralization metrics: relative voting ratios, η ratios, Gini and
//! Nakamoto coefficients, and the aggregated [`DecentralizationReport`].
//!
//! Metrics that take a credit vector expect it sorted ascending; they do not
//! sort silently because the Gini formula weights entries by rank.

use serde::Serialize;
use thiserror::Error;

use crate::numeric::{compensated_sum, scaled_powers};
use crate::stake::StakeDistribution;

/// Nakamoto threshold used when the caller gives none.
pub const DEFAULT_NAKAMOTO_THRESHOLD: f64 = 0.51;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("gamma {0} is outside the allowed range")]
    GammaOutOfRange(f64),
    #[error("expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("vote count at position {index} must be at least 1")]
    NonPositiveCount { index: usize },
    #[error("credits are not sorted ascending at position {index}")]
    Unsorted { index: usize },
    #[error("credit at position {index} is negative or not finite")]
    InvalidCredit { index: usize },
    #[error("all credits are zero")]
    AllZero,
    #[error("credit vector is empty")]
    Empty,
    #[error("threshold {0} must lie in (0, 1)")]
    ThresholdOutOfRange(f64),
}

fn check_gamma_closed(gamma: f64) -> Result<(), MetricsError> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(MetricsError::GammaOutOfRange(gamma))
    }
}

fn check_gamma_open(gamma: f64) -> Result<(), MetricsError> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(MetricsError::GammaOutOfRange(gamma))
    }
}

fn normalized(weights: Vec<f64>) -> Vec<f64> {
    let total = compensated_sum(weights.iter().copied());
    weights.into_iter().map(|w| w / total).collect()
}

/// Split-stake relative voting ratio `s_i^γ / Σ s_j^γ` for `γ ∈ (0, 1]`.
/// `γ = 1` is linear voting, `γ = 0.5` is QV-2.
pub fn rvr_split(dist: &StakeDistribution, gamma: f64) -> Result<Vec<f64>, MetricsError> {
    check_gamma_closed(gamma)?;
    Ok(normalized(scaled_powers(&dist.stakes(), gamma)))
}

/// Unsplit-stake relative voting ratio `c_i·s_i^γ / Σ c_j·s_j^γ` where `c_i`
/// is the number of proposals voter `i` supports.
pub fn rvr_unsplit(dist: &StakeDistribution, counts: &[u32], gamma: f64) -> Result<Vec<f64>, MetricsError> {
    check_gamma_closed(gamma)?;
    if counts.len() != dist.len() {
        return Err(MetricsError::LengthMismatch {
            expected: dist.len(),
            actual: counts.len(),
        });
    }
    if let Some(index) = counts.iter().position(|&c| c == 0) {
        return Err(MetricsError::NonPositiveCount { index });
    }
    let weights = scaled_powers(&dist.stakes(), gamma)
        .into_iter()
        .zip(counts)
        .map(|(w, &c)| w * f64::from(c))
        .collect();
    Ok(normalized(weights))
}

/// `η_i = r_γ,i / r_LV,i` for `γ ∈ (0, 1)`.
pub fn eta(dist: &StakeDistribution, gamma: f64) -> Result<Vec<f64>, MetricsError> {
    check_gamma_open(gamma)?;
    Ok(eta_unchecked(dist, gamma))
}

fn eta_unchecked(dist: &StakeDistribution, gamma: f64) -> Vec<f64> {
    let quad = normalized(scaled_powers(&dist.stakes(), gamma));
    let lin = dist.normalize();
    quad.iter().zip(&lin).map(|(q, l)| q / l).collect()
}

/// Unsplit analogue of [`eta`]: `u_γ,i / u_LV,i`.
pub fn eta_unsplit(dist: &StakeDistribution, counts: &[u32], gamma: f64) -> Result<Vec<f64>, MetricsError> {
    check_gamma_open(gamma)?;
    let quad = rvr_unsplit(dist, counts, gamma)?;
    let lin = rvr_unsplit(dist, counts, 1.0)?;
    Ok(quad.iter().zip(&lin).map(|(q, l)| q / l).collect())
}

/// QV threshold `t = Σ s_j / Σ √s_j`: `η_i > 1` exactly when `√s_i < t`.
pub fn eta_threshold(dist: &StakeDistribution) -> f64 {
    eta_threshold_for(dist, 0.5).expect("0.5 is a valid gamma")
}

/// Threshold for general `γ`: `η_i > 1` exactly when `s_i^(1-γ) < Σ s_j / Σ s_j^γ`.
pub fn eta_threshold_for(dist: &StakeDistribution, gamma: f64) -> Result<f64, MetricsError> {
    check_gamma_open(gamma)?;
    let stakes = dist.stakes();
    let linear = compensated_sum(stakes.iter().copied());
    let powered = compensated_sum(stakes.iter().map(|s| s.powf(gamma)));
    Ok(linear / powered)
}

fn check_credits(credits: &[f64]) -> Result<f64, MetricsError> {
    if credits.is_empty() {
        return Err(MetricsError::Empty);
    }
    for (index, &c) in credits.iter().enumerate() {
        if !(c.is_finite() && c >= 0.0) {
            return Err(MetricsError::InvalidCredit { index });
        }
    }
    if let Some(i) = credits.windows(2).position(|w| w[1] < w[0]) {
        return Err(MetricsError::Unsorted { index: i + 1 });
    }
    let total = compensated_sum(credits.iter().copied());
    if total <= 0.0 {
        return Err(MetricsError::AllZero);
    }
    Ok(total)
}

/// Gini coefficient of ascending credits:
/// `(2·Σ i·vc_i − (n+1)·vc) / (n·vc)`, with 1-based rank `i`.
///
/// Evaluated as `Σ (2i − n − 1)·vc_i / (n·vc)`, which is the same expression
/// without the cancellation between its two large terms. The result lies in
/// `[0, (n−1)/n]`.
pub fn gini(credits: &[f64]) -> Result<f64, MetricsError> {
    let total = check_credits(credits)?;
    let n = credits.len() as f64;
    let weighted = compensated_sum(
        credits
            .iter()
            .enumerate()
            .map(|(i, &c)| (2.0 * (i as f64 + 1.0) - n - 1.0) * c),
    );
    Ok((weighted / (n * total)).max(0.0))
}

/// Lorenz points `(i, S_i / vc)` for `i = 1..n`.
pub fn lorenz_points(credits: &[f64]) -> Result<Vec<LorenzPoint>, MetricsError> {
    let total = check_credits(credits)?;
    let mut running = 0.0;
    let mut carry = 0.0;
    let mut out = Vec::with_capacity(credits.len());
    for (i, &c) in credits.iter().enumerate() {
        // Neumaier step, kept inline so every prefix is compensated
        let t = running + c;
        if running.abs() >= c.abs() {
            carry += (running - t) + c;
        } else {
            carry += (c - t) + running;
        }
        running = t;
        out.push(LorenzPoint {
            index: i + 1,
            cumulative_share: ((running + carry) / total).min(1.0),
        });
    }
    if let Some(last) = out.last_mut() {
        last.cumulative_share = 1.0;
    }
    Ok(out)
}

/// Gini as `A / (A + B)` from the polygonal Lorenz curve.
///
/// Works in normalized shares: the equality line encloses `B + A = n/2`, the
/// area under the Lorenz polygon is the trapezoid sum over the segments
/// `(i-1, S_{i-1}) → (i, S_i)`, and `A` is the difference.
pub fn gini_from_lorenz(credits: &[f64]) -> Result<f64, MetricsError> {
    let points = lorenz_points(credits)?;
    let n = credits.len() as f64;
    let mut prev = 0.0;
    let under = compensated_sum(points.iter().map(|p| {
        let area = 0.5 * (prev + p.cumulative_share);
        prev = p.cumulative_share;
        area
    }));
    // gap between equality line i/n and the curve, integrated the same way
    let mut prev_gap = 0.0;
    let area_a = compensated_sum(points.iter().map(|p| {
        let gap = p.index as f64 / n - p.cumulative_share;
        let area = 0.5 * (prev_gap + gap);
        prev_gap = gap;
        area
    }));
    let total_area = 0.5 * n;
    debug_assert!((area_a + under - total_area).abs() <= 1e-9 * total_area);
    Ok((area_a / total_area).max(0.0))
}

/// Smallest `k` such that the `k` largest credits hold at least `a` of the total.
pub fn nakamoto(credits: &[f64], a: f64) -> Result<usize, MetricsError> {
    if !(a > 0.0 && a < 1.0) {
        return Err(MetricsError::ThresholdOutOfRange(a));
    }
    check_credits(credits)?;
    // prefix sums from the top; the last one doubles as the total so that
    // k = n always qualifies
    let mut tops = Vec::with_capacity(credits.len());
    let mut running = 0.0;
    let mut carry = 0.0;
    for &c in credits.iter().rev() {
        let t = running + c;
        if running.abs() >= c.abs() {
            carry += (running - t) + c;
        } else {
            carry += (c - t) + running;
        }
        running = t;
        tops.push(running + carry);
    }
    let total = *tops.last().unwrap();
    let target = a * total;
    Ok(tops
        .iter()
        .position(|&top| top >= target)
        .map_or(credits.len(), |k| k + 1))
}

/// `nakamoto(credits, a) / n`.
pub fn nakamoto_normalized(credits: &[f64], a: f64) -> Result<f64, MetricsError> {
    Ok(nakamoto(credits, a)? as f64 / credits.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LorenzPoint {
    pub index: usize,
    pub cumulative_share: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NakamotoEntry {
    pub threshold: f64,
    pub classical: usize,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecentralizationReport {
    pub gamma: f64,
    pub n: usize,
    pub rvr: Vec<f64>,
    pub eta: Vec<f64>,
    pub gini: f64,
    pub nakamoto: Vec<NakamotoEntry>,
    pub lorenz: Vec<LorenzPoint>,
}

/// Every metric of `dist` under credits `g(s) = s^γ`, `γ ∈ (0, 1]`.
pub fn report(dist: &StakeDistribution, gamma: f64, thresholds: &[f64]) -> Result<DecentralizationReport, MetricsError> {
    check_gamma_closed(gamma)?;
    let credits = gamma_credits(dist, gamma);
    let rvr = rvr_split(dist, gamma)?;
    let eta = if gamma == 1.0 {
        vec![1.0; dist.len()]
    } else {
        eta_unchecked(dist, gamma)
    };
    let nakamoto = thresholds
        .iter()
        .map(|&a| {
            let classical = nakamoto(&credits, a)?;
            Ok(NakamotoEntry {
                threshold: a,
                classical,
                normalized: classical as f64 / credits.len() as f64,
            })
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;
    Ok(DecentralizationReport {
        gamma,
        n: dist.len(),
        rvr,
        eta,
        gini: gini(&credits)?,
        nakamoto,
        lorenz: lorenz_points(&credits)?,
    })
}

/// Credits `s_i^γ` in canonical (ascending) order.
///
/// `powf` is monotone on positive inputs, so the result stays sorted; the
/// running max below only guards against a last-ulp inversion.
pub fn gamma_credits(dist: &StakeDistribution, gamma: f64) -> Vec<f64> {
    let mut prev = 0.0_f64;
    dist.entries()
        .iter()
        .map(|e| {
            let c = if gamma == 1.0 { e.stake } else { e.stake.powf(gamma) };
            prev = prev.max(c);
            prev
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(stakes: &[f64]) -> StakeDistribution {
        StakeDistribution::from_stakes(stakes).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn rvr_split_examples() {
        let d = dist(&[1.0, 4.0, 9.0]);
        close(&rvr_split(&d, 0.5).unwrap(), &[1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0], 1e-15);
        close(&rvr_split(&d, 1.0).unwrap(), &[1.0 / 14.0, 4.0 / 14.0, 9.0 / 14.0], 1e-15);
        close(&rvr_split(&dist(&[3.0; 4]), 0.3).unwrap(), &[0.25; 4], 1e-15);
        assert_eq!(rvr_split(&d, 0.0), Err(MetricsError::GammaOutOfRange(0.0)));
        assert_eq!(rvr_split(&d, 1.5), Err(MetricsError::GammaOutOfRange(1.5)));
    }

    #[test]
    fn rvr_unsplit_examples() {
        let d = dist(&[1.0, 9.0]);
        close(&rvr_unsplit(&d, &[3, 1], 0.5).unwrap(), &[0.5, 0.5], 1e-15);
        close(&rvr_unsplit(&d, &[1, 1], 0.5).unwrap(), &[0.25, 0.75], 1e-15);
        let d3 = dist(&[1.0, 4.0, 9.0]);
        close(
            &rvr_unsplit(&d3, &[1, 1, 1], 0.7).unwrap(),
            &rvr_split(&d3, 0.7).unwrap(),
            1e-15,
        );
        assert_eq!(
            rvr_unsplit(&d, &[1], 0.5),
            Err(MetricsError::LengthMismatch { expected: 2, actual: 1 })
        );
        assert_eq!(
            rvr_unsplit(&d, &[1, 0], 0.5),
            Err(MetricsError::NonPositiveCount { index: 1 })
        );
    }

    #[test]
    fn eta_examples() {
        let d = dist(&[1.0, 4.0, 9.0]);
        close(&eta(&d, 0.5).unwrap(), &[14.0 / 6.0, 7.0 / 6.0, 7.0 / 9.0], 1e-14);
        close(&eta(&dist(&[5.0; 3]), 0.5).unwrap(), &[1.0; 3], 1e-15);
        assert!(eta(&d, 1.0).is_err());
    }

    #[test]
    fn eta_threshold_examples() {
        let t = eta_threshold(&dist(&[1.0, 4.0, 9.0]));
        assert!((t - 14.0 / 6.0).abs() < 1e-15);
        let e = eta(&dist(&[1.0, 4.0, 9.0]), 0.5).unwrap();
        for (root, eta) in [1.0_f64, 2.0, 3.0].iter().zip(e) {
            assert_eq!(*root < t, eta > 1.0);
        }

        let t = eta_threshold(&dist(&[4.0, 4.0]));
        assert!((t - 2.0).abs() < 1e-15);

        let t = eta_threshold(&dist(&[1.0, 1e6]));
        assert!((t - (1.0 + 1e6) / 1001.0).abs() < 1e-9);
        assert!(1000.0 > t);
    }

    #[test]
    fn gini_examples() {
        let g = gini(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert!((g - 20.0 / 75.0).abs() < 1e-15);
        assert_eq!(gini(&[2.0; 6]).unwrap(), 0.0);
        let g = gini(&[0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((g - 0.8).abs() < 1e-15);
        assert_eq!(gini(&[7.0]).unwrap(), 0.0);
    }

    #[test]
    fn gini_errors() {
        assert_eq!(gini(&[2.0, 1.0]), Err(MetricsError::Unsorted { index: 1 }));
        assert_eq!(gini(&[0.0, 0.0]), Err(MetricsError::AllZero));
        assert_eq!(gini(&[]), Err(MetricsError::Empty));
        assert_eq!(gini(&[-1.0, 1.0]), Err(MetricsError::InvalidCredit { index: 0 }));
    }

    #[test]
    fn lorenz_matches_formula() {
        for credits in [
            vec![1.0, 2.0, 3.0, 4.0, 5.0],
            vec![1.0, 1.0, 1.0, 1.0, 96.0],
            vec![0.0, 0.0, 3.0],
        ] {
            let a = gini(&credits).unwrap();
            let b = gini_from_lorenz(&credits).unwrap();
            assert!(crate::numeric::rel_close(a, b, 1e-12), "{a} vs {b}");
        }
        assert!(gini_from_lorenz(&[3.0; 4]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn lorenz_points_shape() {
        let pts = lorenz_points(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[0].index, 1);
        assert!((pts[0].cumulative_share - 1.0 / 6.0).abs() < 1e-15);
        assert!((pts[1].cumulative_share - 0.5).abs() < 1e-15);
        assert_eq!(pts[2].cumulative_share, 1.0);
    }

    #[test]
    fn nakamoto_examples() {
        let lin = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(nakamoto(&lin, 0.51).unwrap(), 2);
        let roots: Vec<f64> = lin.iter().map(|x: &f64| x.sqrt()).collect();
        assert_eq!(nakamoto(&roots, 0.51).unwrap(), 3);
        assert_eq!(nakamoto(&lin, 1e-12).unwrap(), 1);
        assert_eq!(nakamoto(&lin, 1.0 - 1e-16).unwrap(), 5);
        assert!((nakamoto_normalized(&lin, 0.51).unwrap() - 0.4).abs() < 1e-15);
        assert!((nakamoto_normalized(&roots, 0.51).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(nakamoto_normalized(&[3.0], 0.51).unwrap(), 1.0);
        assert_eq!(nakamoto(&lin, 1.0), Err(MetricsError::ThresholdOutOfRange(1.0)));
        assert_eq!(nakamoto(&lin, 0.0), Err(MetricsError::ThresholdOutOfRange(0.0)));
        assert_eq!(nakamoto(&[5.0, 1.0], 0.5), Err(MetricsError::Unsorted { index: 1 }));
    }

    #[test]
    fn nakamoto_strictness_counterexample() {
        let d = dist(&[1.0, 100.0]);
        let lin = gamma_credits(&d, 1.0);
        let quad = gamma_credits(&d, 0.5);
        assert_eq!(nakamoto(&lin, 0.9).unwrap(), 1);
        assert_eq!(nakamoto(&quad, 0.9).unwrap(), 1);
    }

    #[test]
    fn report_examples() {
        let d = dist(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let r = report(&d, 0.5, &[0.51]).unwrap();
        assert!((r.gini - 0.14592226916699352).abs() < 1e-12);
        assert_eq!(r.nakamoto[0].classical, 3);
        assert!((r.nakamoto[0].normalized - 0.6).abs() < 1e-15);
        assert_eq!(r.lorenz.len(), 5);

        let r = report(&d, 1.0, &[0.51]).unwrap();
        assert!((r.gini - 20.0 / 75.0).abs() < 1e-15);
        assert_eq!(r.nakamoto[0].classical, 2);
        assert_eq!(r.eta, [1.0; 5]);

        let r = report(&dist(&[2.0; 4]), 0.5, &[0.51]).unwrap();
        assert_eq!(r.gini, 0.0);
        for e in r.eta {
            assert!((e - 1.0).abs() < 1e-15);
        }
    }
}
