//! Selection-induced bias of the chosen dose and the Type I error of a
//! pooled two-stage confirmatory test of its response rate.

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, domain, Error, Result};
use crate::outcome::UtilityMoments;
use crate::stats::{binom_sf, norm_quantile, norm_sf};

const INV_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// `E[Z_H 1{Z_H - Z_L > k} + Z_L 1{Z_H - Z_L <= k}]` for independent
/// standard normals, which equals `exp(-k^2 / 4) / sqrt(pi)`.
pub fn truncated_selection_expectation(k: f64) -> f64 {
    INV_SQRT_PI * (-0.25 * k * k).exp()
}

/// Expected Stage-1 bias of an endpoint `W` of the selected dose under the
/// null (both doses equal), given `Cov(W, U)` per patient.
///
/// `cov` defaults to `moments.cov_xu`, i.e. `W` is the response indicator.
pub fn selection_bias(moments: &UtilityMoments, n1: u64, lambda_u: f64, cov: Option<f64>) -> Result<f64> {
    if !(moments.sigma2 > 0.0) {
        return domain("utility variance is zero; selection carries no information");
    }
    if n1 == 0 {
        return domain("n1 must be at least 1");
    }
    let sigma = moments.sigma();
    let root_n = (n1 as f64).sqrt();
    let cov = cov.unwrap_or(moments.cov_xu);
    Ok(cov / (sigma * root_n) * truncated_selection_expectation(lambda_u * root_n / sigma))
}

/// Cauchy–Schwarz bound on the response-rate bias: `Cov(X, U)` replaced by
/// `sd(X) * sd(U)`. The threshold factor needs `sigma_u` when `lambda_u != 0`.
pub fn max_bias(p0: f64, n1: u64, lambda_u: f64, sigma_u: Option<f64>) -> Result<f64> {
    check_probability("p0", p0)?;
    bernoulli_bound(p0, n1, lambda_u, sigma_u)
}

pub(crate) fn bernoulli_bound(p0: f64, n1: u64, lambda_u: f64, sigma_u: Option<f64>) -> Result<f64> {
    if n1 == 0 {
        return domain("n1 must be at least 1");
    }
    let n = n1 as f64;
    let base = (p0 * (1.0 - p0)).sqrt() / (n * std::f64::consts::PI).sqrt();
    if lambda_u == 0.0 {
        return Ok(base);
    }
    match sigma_u {
        Some(s) if s > 0.0 => Ok(base * (-lambda_u * lambda_u * n / (4.0 * s * s)).exp()),
        Some(s) => domain(format!("sigma_u = {s} must be positive")),
        None => Err(Error::Contract("a nonzero lambda_u needs sigma_u for the threshold factor".into())),
    }
}

/// Stage-1 weight `n1 / (n1 + n2)` in the pooled estimate.
pub fn dilution(n1: u64, n2: u64) -> f64 {
    n1 as f64 / (n1 + n2) as f64
}

/// Bias of the pooled Stage-1 + Stage-2 estimate.
pub fn combined_bias(stage1_bias: f64, n1: u64, n2: u64) -> f64 {
    stage1_bias * dilution(n1, n2)
}

/// Selection followed by a one-sample confirmatory test on the selected dose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoStagePlan {
    pub n1: u64,
    pub n2: u64,
    pub lambda_u: f64,
    pub p0: f64,
    pub alpha: f64,
}

impl TwoStagePlan {
    pub fn new(n1: u64, n2: u64, lambda_u: f64, p0: f64, alpha: f64) -> Result<Self> {
        let plan = Self { n1, n2, lambda_u, p0, alpha };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 {
            return domain("n1 must be at least 1");
        }
        check_probability("p0", self.p0)?;
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return domain(format!("alpha = {} must lie in (0, 0.5)", self.alpha));
        }
        if !self.lambda_u.is_finite() {
            return domain("lambda_u must be finite");
        }
        Ok(())
    }

    pub fn n_total(&self) -> u64 {
        self.n1 + self.n2
    }

    pub fn dilution(&self) -> f64 {
        dilution(self.n1, self.n2)
    }

    /// Null standard error of the pooled response rate.
    pub fn se0(&self) -> f64 {
        (self.p0 * (1.0 - self.p0) / self.n_total() as f64).sqrt()
    }
}

/// Type I error of the one-sided Z-test when the pooled estimate carries a
/// bias of `delta_p_combined`.
pub fn z_test_type1(plan: &TwoStagePlan, delta_p_combined: f64) -> f64 {
    shifted_normal_type1(plan.alpha, delta_p_combined / plan.se0())
}

/// `1 - Phi(z_{1-alpha} - shift)`.
pub(crate) fn shifted_normal_type1(alpha: f64, shift: f64) -> f64 {
    norm_sf(norm_quantile(1.0 - alpha) - shift)
}

/// Smallest `k` with `Pr(X > k) <= alpha` for `X ~ Bin(n_total, p0)`.
pub fn binomial_critical(n_total: u64, p0: f64, alpha: f64) -> u64 {
    let (mut lo, mut hi) = (0u64, n_total);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if binom_sf(mid, n_total, p0) <= alpha {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// Rejection probability of the exact binomial test when the true pooled
/// response rate is `p0 + delta_p_combined`.
pub fn binomial_type1(plan: &TwoStagePlan, delta_p_combined: f64) -> Result<f64> {
    let p = plan.p0 + delta_p_combined;
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("shifted response rate {p} lies outside (0, 1)"));
    }
    let k_c = binomial_critical(plan.n_total(), plan.p0, plan.alpha);
    Ok(binom_sf(k_c, plan.n_total(), p))
}

/// Analytic bias and Type I predictions for one plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub stage1_bias: f64,
    pub combined_bias: f64,
    pub max_bias: f64,
    pub max_combined_bias: f64,
    pub z_type1: f64,
    pub z_type1_max: f64,
    pub binom_type1: f64,
    pub binom_type1_max: f64,
    pub binom_critical: u64,
}

/// Evaluates every binary-endpoint formula. `moments` describe one arm
/// under the null and `cov` overrides `Cov(X, U)` when given.
pub fn bias_report(plan: &TwoStagePlan, moments: &UtilityMoments, cov: Option<f64>) -> Result<BiasReport> {
    plan.validate()?;
    let stage1 = selection_bias(moments, plan.n1, plan.lambda_u, cov)?;
    let max = max_bias(plan.p0, plan.n1, plan.lambda_u, Some(moments.sigma()))?;
    let combined = combined_bias(stage1, plan.n1, plan.n2);
    let max_combined = combined_bias(max, plan.n1, plan.n2);
    Ok(BiasReport {
        stage1_bias: stage1,
        combined_bias: combined,
        max_bias: max,
        max_combined_bias: max_combined,
        z_type1: z_test_type1(plan, combined),
        z_type1_max: z_test_type1(plan, max_combined),
        binom_type1: binomial_type1(plan, combined)?,
        binom_type1_max: binomial_type1(plan, max_combined)?,
        binom_critical: binomial_critical(plan.n_total(), plan.p0, plan.alpha),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::outcome::{joint_probs, utility_moments, UtilitySpec};
    use crate::stats::binom_pmf;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn lemma_values() {
        assert!(close(truncated_selection_expectation(0.0), 0.5641896, 1e-7));
        assert!(close(truncated_selection_expectation(2.0), 0.2075537, 1e-7));
        assert!(truncated_selection_expectation(40.0) < 1e-150);
    }

    #[test]
    fn response_only_bias() {
        let m = utility_moments(&UtilitySpec::response_only(), &joint_probs(0.4, 0.8, 0.0).unwrap());
        let b = selection_bias(&m, 60, 0.0, None).unwrap();
        assert!(close(b, 0.035682, 1e-6));
        assert!(close(max_bias(0.4, 60, 0.0, None).unwrap(), b, 1e-15));
        assert_eq!(selection_bias(&m, 60, 0.0, Some(0.0)).unwrap(), 0.0);
        // lambda chosen so that lambda * sqrt(n1) / sigma = 2.
        let lambda = 2.0 * m.sigma() / 60f64.sqrt();
        let ratio = selection_bias(&m, 60, lambda, None).unwrap() / b;
        assert!(close(ratio, (-1.0f64).exp(), 1e-14));
        let flat = utility_moments(&UtilitySpec::new([0.5; 4]).unwrap(), &joint_probs(0.4, 0.8, 0.0).unwrap());
        assert!(selection_bias(&flat, 60, 0.0, None).is_err());
    }

    #[test]
    fn bounds() {
        assert!(close(max_bias(0.5, 100, 0.0, None).unwrap(), 0.0282095, 1e-7));
        let r = max_bias(0.3, 40, 0.0, None).unwrap() / max_bias(0.3, 160, 0.0, None).unwrap();
        assert!(close(r, 2.0, 1e-14));
        assert!(matches!(max_bias(0.3, 40, 0.1, None), Err(Error::Contract(_))));
        assert!(max_bias(0.3, 40, 0.1, Some(0.4)).unwrap() < max_bias(0.3, 40, 0.0, None).unwrap());
    }

    #[test]
    fn dilution_and_z_test() {
        assert!(close(combined_bias(0.035682, 60, 140), 0.0107046, 1e-7));
        assert_eq!(combined_bias(0.03, 60, 0), 0.03);
        assert!(combined_bias(0.03, 60, u32::MAX as u64) < 1e-9);
        let plan = TwoStagePlan::new(60, 140, 0.0, 0.4, 0.025).unwrap();
        assert!(close(z_test_type1(&plan, 0.0), 0.025, 1e-15));
        assert!(close(z_test_type1(&plan, 0.0107046), 0.0494, 5e-5));
        assert!(z_test_type1(&plan, -0.01) < 0.025);
    }

    #[test]
    fn binomial_critical_values() {
        assert_eq!(binomial_critical(5, 0.5, 0.025), 5);
        assert_eq!(binomial_critical(1, 0.5, 0.6), 0);
        let k = binomial_critical(200, 0.4, 0.025);
        let tail = |k: u64| -> f64 { ((k + 1)..=200).map(|j| binom_pmf(j, 200, 0.4)).sum() };
        assert!(tail(k) <= 0.025 && tail(k - 1) > 0.025);
    }

    #[test]
    fn binomial_type1_behaviour() {
        let plan = TwoStagePlan::new(60, 140, 0.0, 0.4, 0.025).unwrap();
        let size = binomial_type1(&plan, 0.0).unwrap();
        assert!(size <= 0.025);
        let mut prev = size;
        for i in 1..20 {
            let t = binomial_type1(&plan, i as f64 * 0.002).unwrap();
            assert!(t > prev);
            prev = t;
        }
        assert!(binomial_type1(&plan, 0.7).is_err());
    }

    #[test]
    fn report_consistency() {
        let u = UtilitySpec::new([1.0, 0.8, 0.2, 0.0]).unwrap();
        let m = utility_moments(&u, &joint_probs(0.4, 0.8, 0.0).unwrap());
        let plan = TwoStagePlan::new(60, 140, 0.0, 0.4, 0.025).unwrap();
        let r = bias_report(&plan, &m, None).unwrap();
        assert!(close(r.stage1_bias, 0.034962, 1e-6));
        assert!(close(r.combined_bias, r.stage1_bias * 0.3, 1e-15));
        assert!(r.max_bias >= r.stage1_bias && r.z_type1_max >= r.z_type1);
        assert!(r.binom_type1_max >= r.binom_type1);
    }
}
