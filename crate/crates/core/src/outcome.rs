//! Joint binary efficacy/safety outcome model and utility scores.
//!
//! Outcomes are indexed in the fixed order
//!
//! | k | efficacy X | safety Y | meaning               |
//! |---|------------|----------|-----------------------|
//! | 1 | 1          | 1        | response, no AE       |
//! | 2 | 1          | 0        | response, AE          |
//! | 3 | 0          | 1        | no response, no AE    |
//! | 4 | 0          | 0        | no response, AE       |
//!
//! and every four-element array in this crate follows that order.

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, domain, Error, Result};

/// Efficacy indicator of each outcome category.
pub const EFFICACY: [f64; 4] = [1.0, 1.0, 0.0, 0.0];
/// Safety (no-AE) indicator of each outcome category.
pub const SAFETY: [f64; 4] = [1.0, 0.0, 1.0, 0.0];

const BOUND_TOL: f64 = 1e-12;

/// Four ordered utility scores, optionally derived from clinical margins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    pub scores: [f64; 4],
    /// Trade-off ratio `delta / d` when the scores came from margins.
    pub ratio: Option<f64>,
    /// Set when `ratio > 1` forced `u2` and `u3` to be exchanged.
    pub swapped: bool,
}

impl UtilitySpec {
    /// Raw scores; they must lie in `[0, 1]` and be non-increasing.
    pub fn new(scores: [f64; 4]) -> Result<Self> {
        if scores.iter().any(|u| !u.is_finite() || *u < 0.0 || *u > 1.0) {
            return domain(format!("utility scores {scores:?} must lie in [0, 1]"));
        }
        if !(scores[0] >= scores[1] && scores[1] >= scores[2] && scores[2] >= scores[3]) {
            return domain(format!("utility scores {scores:?} must satisfy u1 >= u2 >= u3 >= u4"));
        }
        Ok(Self { scores, ratio: None, swapped: false })
    }

    /// Margin-based scores `(1, 1/(1+r), r/(1+r), 0)` with `r = delta / d`.
    pub fn from_margins(delta: f64, d: f64) -> Result<Self> {
        for (name, v) in [("delta", delta), ("d", d)] {
            if !(v.is_finite() && v > 0.0 && v <= 1.0) {
                return domain(format!("margin {name} = {v} must lie in (0, 1]"));
            }
        }
        let r = delta / d;
        let (mut u2, mut u3) = (1.0 / (1.0 + r), r / (1.0 + r));
        let swapped = r > 1.0;
        if swapped {
            std::mem::swap(&mut u2, &mut u3);
        }
        Ok(Self { scores: [1.0, u2, u3, 0.0], ratio: Some(r), swapped })
    }

    /// Efficacy-only utility `(1, 1, 0, 0)`.
    pub fn response_only() -> Self {
        Self { scores: [1.0, 1.0, 0.0, 0.0], ratio: None, swapped: false }
    }

    /// Interaction term `eta = u1 - u2 - u3 + u4`.
    pub fn interaction(&self) -> f64 {
        let u = self.scores;
        u[0] - u[1] - u[2] + u[3]
    }

    /// Range `u1 - u4`, the largest possible per-patient utility gap.
    pub fn range(&self) -> f64 {
        self.scores[0] - self.scores[3]
    }
}

/// Joint distribution of (X, Y) parameterised by marginals and correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointOutcomeModel {
    pub p: f64,
    pub q: f64,
    pub phi: f64,
    pub pi: [f64; 4],
}

/// How `joint_probs_with` treats a correlation outside the Fréchet bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhiPolicy {
    #[default]
    Reject,
    Truncate,
}

/// Fréchet–Hoeffding range of the Pearson correlation for marginals `(p, q)`.
pub fn phi_bounds(p: f64, q: f64) -> Result<(f64, f64)> {
    check_probability("p", p)?;
    check_probability("q", q)?;
    let scale = (p * (1.0 - p) * q * (1.0 - q)).sqrt();
    let lo = ((p + q - 1.0).max(0.0) - p * q) / scale;
    let hi = (p.min(q) - p * q) / scale;
    Ok((lo, hi))
}

/// Outcome probabilities for `(p, q, phi)`; out-of-range `phi` is rejected.
pub fn joint_probs(p: f64, q: f64, phi: f64) -> Result<JointOutcomeModel> {
    joint_probs_with(p, q, phi, PhiPolicy::Reject)
}

pub fn joint_probs_with(p: f64, q: f64, phi: f64, policy: PhiPolicy) -> Result<JointOutcomeModel> {
    let (lo, hi) = phi_bounds(p, q)?;
    if !phi.is_finite() {
        return domain(format!("phi = {phi} is not finite"));
    }
    let phi = if phi < lo - BOUND_TOL || phi > hi + BOUND_TOL {
        match policy {
            PhiPolicy::Reject => {
                return domain(format!(
                    "phi = {phi} outside Fréchet bounds [{lo:.4}, {hi:.4}] for (p = {p}, q = {q})"
                ))
            }
            PhiPolicy::Truncate => phi.clamp(lo, hi),
        }
    } else {
        phi.clamp(lo, hi)
    };
    Ok(from_correlation(p, q, phi))
}

fn from_correlation(p: f64, q: f64, phi: f64) -> JointOutcomeModel {
    let scale = (p * (1.0 - p) * q * (1.0 - q)).sqrt();
    let pi1 = p * q + phi * scale;
    // Rounding at a Fréchet boundary can leave -1e-17 in a cell.
    let pi = [pi1, p - pi1, q - pi1, 1.0 - p - q + pi1].map(|v| v.max(0.0));
    JointOutcomeModel { p, q, phi, pi }
}

impl JointOutcomeModel {
    /// Model from raw cell probabilities (used for degenerate marginals).
    pub fn from_cells(pi: [f64; 4]) -> Result<Self> {
        let total: f64 = pi.iter().sum();
        if pi.iter().any(|v| !v.is_finite() || *v < 0.0) || (total - 1.0).abs() > 1e-9 {
            return domain(format!("cell probabilities {pi:?} are not a distribution"));
        }
        let p = pi[0] + pi[1];
        let q = pi[0] + pi[2];
        let denom = (p * (1.0 - p) * q * (1.0 - q)).sqrt();
        let phi = if denom > 0.0 { (pi[0] - p * q) / denom } else { 0.0 };
        Ok(Self { p, q, phi, pi })
    }
}

/// Observed counts of the four outcome categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CountTable {
    pub n11: u64,
    pub n10: u64,
    pub n01: u64,
    pub n00: u64,
}

impl CountTable {
    pub fn new(n11: u64, n10: u64, n01: u64, n00: u64) -> Self {
        Self { n11, n10, n01, n00 }
    }

    pub fn total(&self) -> u64 {
        self.n11 + self.n10 + self.n01 + self.n00
    }

    pub fn as_array(&self) -> [u64; 4] {
        [self.n11, self.n10, self.n01, self.n00]
    }
}

/// Result of estimating `(p, q, phi)` from a count table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelEstimate {
    pub model: JointOutcomeModel,
    /// A marginal was 0 or 1, so the correlation is undefined and set to 0.
    pub degenerate: bool,
    /// The raw correlation estimate was pulled back into the Fréchet range.
    pub truncated: bool,
}

pub fn estimate_model(counts: CountTable) -> Result<ModelEstimate> {
    let n = counts.total();
    if n == 0 {
        return domain("count table is empty");
    }
    let nf = n as f64;
    let [n11, n10, n01, n00] = counts.as_array().map(|c| c as f64);
    let (x1, y1) = (n11 + n10, n11 + n01);
    let (x0, y0) = (n01 + n00, n10 + n00);
    let p = x1 / nf;
    let q = y1 / nf;
    let cells = [n11 / nf, n10 / nf, n01 / nf, n00 / nf];
    let denom = (x1 * y1 * x0 * y0).sqrt();
    if denom == 0.0 {
        let model = JointOutcomeModel { p, q, phi: 0.0, pi: cells };
        return Ok(ModelEstimate { model, degenerate: true, truncated: false });
    }
    let raw = (nf * n11 - x1 * y1) / denom;
    let (lo, hi) = phi_bounds(p, q)?;
    let phi = raw.clamp(lo, hi);
    let truncated = raw < lo - BOUND_TOL || raw > hi + BOUND_TOL;
    // The empirical cells already satisfy the bounds; keep them exactly.
    let model = JointOutcomeModel { p, q, phi, pi: cells };
    Ok(ModelEstimate { model, degenerate: false, truncated })
}

/// Mean and variance of a single patient's utility, and its covariance with
/// the efficacy indicator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityMoments {
    pub mu: f64,
    pub sigma2: f64,
    pub cov_xu: f64,
}

impl UtilityMoments {
    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

pub fn utility_moments(u: &UtilitySpec, m: &JointOutcomeModel) -> UtilityMoments {
    let (s, pi) = (u.scores, m.pi);
    let mu: f64 = (0..4).map(|k| s[k] * pi[k]).sum();
    // u' (diag(pi) - pi pi') u, evaluated in centred form so that a
    // constant utility gives exactly zero.
    let sigma2: f64 = (0..4).map(|k| pi[k] * (s[k] - mu).powi(2)).sum();
    let p = pi[0] + pi[1];
    let cov_xu = s[0] * pi[0] + s[1] * pi[1] - p * mu;
    UtilityMoments { mu, sigma2: sigma2.max(0.0), cov_xu }
}

/// Mean utility via the additive decomposition, returned with `eta`.
pub fn mean_utility_decomposed(u: &UtilitySpec, p: f64, q: f64, phi: f64) -> (f64, f64) {
    let s = u.scores;
    let eta = u.interaction();
    let pi1 = p * q + phi * (p * (1.0 - p) * q * (1.0 - q)).sqrt();
    let mu = eta * pi1 + (s[1] - s[3]) * p + (s[2] - s[3]) * q + s[3];
    (mu, eta)
}

/// Analytic partial derivatives `(dmu/dp, dmu/dq)` of the mean utility.
pub fn mean_utility_gradient(u: &UtilitySpec, p: f64, q: f64, phi: f64) -> (f64, f64) {
    let s = u.scores;
    let eta = u.interaction();
    let vp = p * (1.0 - p);
    let vq = q * (1.0 - q);
    let dp = eta * (q + phi * 0.5 * (vq / vp).sqrt() * (1.0 - 2.0 * p)) + (s[1] - s[3]);
    let dq = eta * (p + phi * 0.5 * (vp / vq).sqrt() * (1.0 - 2.0 * q)) + (s[2] - s[3]);
    (dp, dq)
}

/// Efficacy gain needed per unit of safety loss at constant mean utility.
pub fn marginal_rate_of_substitution(u: &UtilitySpec, p: f64, q: f64, phi: f64) -> Result<f64> {
    check_probability("p", p)?;
    check_probability("q", q)?;
    let (dp, dq) = mean_utility_gradient(u, p, q, phi);
    if dp.abs() < 1e-15 {
        return Err(Error::Domain(format!(
            "d mu / d p vanishes at (p = {p}, q = {q}, phi = {phi}); MRS undefined"
        )));
    }
    Ok(dq / dp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Pearson correlation of the 0/1 pair implied by four cell masses.
    fn cell_correlation(pi: [f64; 4]) -> f64 {
        let p = pi[0] + pi[1];
        let q = pi[0] + pi[2];
        (pi[0] - p * q) / (p * (1.0 - p) * q * (1.0 - q)).sqrt()
    }

    #[test]
    fn margins_to_scores() {
        let u = UtilitySpec::from_margins(0.15, 0.15).unwrap();
        assert_eq!(u.scores, [1.0, 0.5, 0.5, 0.0]);
        let u = UtilitySpec::from_margins(0.10, 0.15).unwrap();
        assert!(close(u.scores[1], 0.6, 1e-15) && close(u.scores[2], 0.4, 1e-15));
        assert!(!u.swapped);
        let u = UtilitySpec::from_margins(0.30, 0.15).unwrap();
        assert!(u.swapped);
        assert!(close(u.scores[1], 2.0 / 3.0, 1e-15) && close(u.scores[2], 1.0 / 3.0, 1e-15));
        assert_eq!(u.ratio, Some(2.0));
    }

    #[test]
    fn margin_domain_errors() {
        assert!(UtilitySpec::from_margins(0.0, 0.1).is_err());
        assert!(UtilitySpec::from_margins(0.1, 1.5).is_err());
        assert!(UtilitySpec::from_margins(-0.1, 0.1).is_err());
        assert!(UtilitySpec::new([0.2, 0.5, 0.1, 0.0]).is_err());
    }

    /// Exhaustive scan of feasible pi1 values; the correlation range is the
    /// image of the feasible segment.
    fn grid_phi_bounds(p: f64, q: f64) -> (f64, f64) {
        let steps = 200_000;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..=steps {
            let pi1 = i as f64 / steps as f64;
            let cells = [pi1, p - pi1, q - pi1, 1.0 - p - q + pi1];
            if cells.iter().all(|c| *c >= -1e-15) {
                let r = cell_correlation(cells);
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        (lo, hi)
    }

    #[test]
    fn phi_bounds_against_grid() {
        assert_eq!(phi_bounds(0.5, 0.5).unwrap(), (-1.0, 1.0));
        for &(p, q) in &[(0.3, 0.5), (0.9, 0.9)] {
            let (lo, hi) = phi_bounds(p, q).unwrap();
            let (glo, ghi) = grid_phi_bounds(p, q);
            assert!(close(lo, glo, 1e-4) && close(hi, ghi, 1e-4), "{p} {q}");
        }
        let (lo, hi) = phi_bounds(0.3, 0.5).unwrap();
        assert!(close(lo, -0.65465, 1e-5) && close(hi, 0.65465, 1e-5));
        let (lo, hi) = phi_bounds(0.9, 0.9).unwrap();
        assert!(close(lo, -1.0 / 9.0, 1e-12) && close(hi, 1.0, 1e-12));
        assert!(phi_bounds(0.0, 0.5).is_err());
        assert!(phi_bounds(0.5, 1.0).is_err());
    }

    #[test]
    fn joint_probabilities() {
        let m = joint_probs(0.3, 0.5, 0.0).unwrap();
        for (a, b) in m.pi.iter().zip([0.15, 0.15, 0.35, 0.35]) {
            assert!(close(*a, b, 1e-15));
        }
        let m = joint_probs(0.3, 0.5, 0.2).unwrap();
        for (a, b) in m.pi.iter().zip([0.19583, 0.10417, 0.30417, 0.39583]) {
            assert!(close(*a, b, 5e-6));
        }
        assert!(close(cell_correlation(m.pi), 0.2, 1e-12));
        assert!(close(m.pi[0] + m.pi[1], 0.3, 1e-15) && close(m.pi[0] + m.pi[2], 0.5, 1e-15));
        let m = joint_probs(0.5, 0.5, 1.0).unwrap();
        assert_eq!(m.pi, [0.5, 0.0, 0.0, 0.5]);
        assert!(joint_probs(0.3, 0.5, 0.9).is_err());
        let t = joint_probs_with(0.3, 0.5, 0.9, PhiPolicy::Truncate).unwrap();
        assert!(close(t.phi, 0.65465, 1e-5));
        assert!(t.pi.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn estimation_from_counts() {
        let e = estimate_model(CountTable::new(25, 25, 25, 25)).unwrap();
        assert_eq!((e.model.p, e.model.q, e.model.phi), (0.5, 0.5, 0.0));
        let e = estimate_model(CountTable::new(30, 0, 0, 70)).unwrap();
        assert!(close(e.model.p, 0.3, 1e-15) && close(e.model.phi, 1.0, 1e-12));
        let e = estimate_model(CountTable::new(20, 10, 30, 40)).unwrap();
        // Pearson correlation computed on the expanded 0/1 data.
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (c, x, y) in [(20, 1.0, 1.0), (10, 1.0, 0.0), (30, 0.0, 1.0), (40, 0.0, 0.0)] {
            for _ in 0..c {
                xs.push(x);
                ys.push(y);
            }
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        let r = sxy / (sxx * syy).sqrt();
        assert!(close(e.model.phi, r, 1e-12));
        assert!(close(e.model.phi, 0.21822, 1e-5));
        assert!(!e.degenerate);
    }

    #[test]
    fn degenerate_counts_flagged() {
        let e = estimate_model(CountTable::new(10, 5, 0, 0)).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.model.phi, 0.0);
        assert!(estimate_model(CountTable::default()).is_err());
    }

    #[test]
    fn moments_against_brute_force() {
        let u = UtilitySpec::new([1.0, 0.6, 0.4, 0.0]).unwrap();
        let m = joint_probs(0.3, 0.5, 0.0).unwrap();
        let mo = utility_moments(&u, &m);
        // Direct expectation over the four outcomes.
        let e_u: f64 = (0..4).map(|k| u.scores[k] * m.pi[k]).sum();
        let e_u2: f64 = (0..4).map(|k| u.scores[k].powi(2) * m.pi[k]).sum();
        let e_xu: f64 = (0..4).map(|k| EFFICACY[k] * u.scores[k] * m.pi[k]).sum();
        assert!(close(mo.mu, e_u, 1e-15) && close(mo.mu, 0.38, 1e-15));
        assert!(close(mo.sigma2, e_u2 - e_u * e_u, 1e-15) && close(mo.sigma2, 0.1156, 1e-14));
        assert!(close(mo.cov_xu, e_xu - 0.3 * e_u, 1e-15) && close(mo.cov_xu, 0.126, 1e-14));

        let ro = UtilitySpec::response_only();
        let m = joint_probs(0.4, 0.7, -0.1).unwrap();
        let mo = utility_moments(&ro, &m);
        assert!(close(mo.mu, 0.4, 1e-15));
        assert!(close(mo.sigma2, 0.24, 1e-15) && close(mo.cov_xu, 0.24, 1e-15));

        let c = UtilitySpec::new([0.3; 4]).unwrap();
        let mo = utility_moments(&c, &m);
        assert!(mo.sigma2.abs() < 1e-16 && mo.cov_xu.abs() < 1e-16);
    }

    #[test]
    fn decomposition_and_mrs() {
        let ind = UtilitySpec::from_margins(0.1, 0.15).unwrap();
        assert!(ind.interaction().abs() < 1e-15);
        let u = UtilitySpec::new([1.0, 0.4, 0.4, 0.0]).unwrap();
        assert!(close(u.interaction(), 0.2, 1e-15));

        let (mu, eta) = mean_utility_decomposed(&ind, 0.3, 0.5, 0.2);
        assert!(eta.abs() < 1e-15 && close(mu, 0.38, 1e-15));
        let m = joint_probs(0.3, 0.5, 0.2).unwrap();
        assert!(close(utility_moments(&ind, &m).mu, mu, 1e-15));

        let mrs = marginal_rate_of_substitution(&UtilitySpec::from_margins(0.1, 0.15).unwrap(), 0.3, 0.5, 0.1)
            .unwrap();
        assert!(close(mrs, 2.0 / 3.0, 1e-14));
        let half = UtilitySpec::new([1.0, 0.5, 0.5, 0.0]).unwrap();
        assert!(close(marginal_rate_of_substitution(&half, 0.7, 0.2, 0.1).unwrap(), 1.0, 1e-14));

        // Finite-difference oracle for a non-independent utility.
        let h = 1e-6;
        let f = |p: f64, q: f64| mean_utility_decomposed(&u, p, q, 0.0).0;
        let dp = (f(0.3 + h, 0.5) - f(0.3 - h, 0.5)) / (2.0 * h);
        let dq = (f(0.3, 0.5 + h) - f(0.3, 0.5 - h)) / (2.0 * h);
        let mrs = marginal_rate_of_substitution(&u, 0.3, 0.5, 0.0).unwrap();
        assert!(close(mrs, dq / dp, 1e-6));

        let flat = UtilitySpec::new([1.0, 0.0, 1.0, 0.0]);
        assert!(flat.is_err());
        let zero_dp = UtilitySpec::new([0.5, 0.5, 0.5, 0.5]).unwrap();
        assert!(marginal_rate_of_substitution(&zero_dp, 0.3, 0.5, 0.0).is_err());
    }
}
