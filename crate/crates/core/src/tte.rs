//! Selection bias carried into time-to-event confirmatory analyses.
//!
//! Three tests are covered: a landmark survival Z-test (upper tail), a
//! one-sample exponential log-hazard test against a historical rate and a
//! two-sample Cox test against a concurrent control (both lower tail).
//! All share the stage-1 mean-time bias `B` driven by `Cov(T, U)`.

use serde::{Deserialize, Serialize};

use crate::bias::{bernoulli_bound, dilution, shifted_normal_type1, truncated_selection_expectation};
use crate::error::{check_probability, domain, Result};
use crate::stats::{norm_cdf, norm_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TtePlan {
    /// Null hazard per unit time.
    pub lambda0: f64,
    /// Landmark time.
    pub tau: f64,
    pub n1: u64,
    pub n2: u64,
    pub lambda_u: f64,
    pub alpha: f64,
    /// Events on the selected dose (one-sample test).
    pub d_events: f64,
    /// Events on both arms (two-sample test).
    pub d_total: f64,
}

impl TtePlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0 > 0.0 && self.tau > 0.0) {
            return domain(format!("lambda0 = {} and tau = {} must be positive", self.lambda0, self.tau));
        }
        if self.n1 == 0 {
            return domain("n1 must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return domain(format!("alpha = {} must lie in (0, 0.5)", self.alpha));
        }
        if !(self.d_events >= 1.0 && self.d_total >= 1.0) {
            return domain(format!(
                "event counts must be at least 1 (d_events = {}, d_total = {})",
                self.d_events, self.d_total
            ));
        }
        Ok(())
    }

    pub fn w1(&self) -> f64 {
        dilution(self.n1, self.n2)
    }

    /// Null landmark survival `exp(-lambda0 * tau)`.
    pub fn s0(&self) -> f64 {
        (-self.lambda0 * self.tau).exp()
    }
}

fn stage1_factor(sigma_u: f64, n1: u64, lambda_u: f64) -> Result<f64> {
    if !(sigma_u > 0.0) {
        return domain(format!("sigma_u = {sigma_u} must be positive"));
    }
    if n1 == 0 {
        return domain("n1 must be at least 1");
    }
    let root_n = (n1 as f64).sqrt();
    Ok(truncated_selection_expectation(lambda_u * root_n / sigma_u) / (sigma_u * root_n))
}

/// Combined-stage landmark survival bias, `w1` times the stage-1 bias with
/// `Cov(S(tau), U)` as the driving covariance.
pub fn landmark_bias(cov_su: f64, sigma_u: f64, n1: u64, lambda_u: f64, w1: f64) -> Result<f64> {
    Ok(w1 * cov_su * stage1_factor(sigma_u, n1, lambda_u)?)
}

/// Stage-1 upper bound on the landmark bias.
pub fn landmark_bias_max(s0_tau: f64, n1: u64, lambda_u: f64, sigma_u: Option<f64>) -> Result<f64> {
    check_probability("S0(tau)", s0_tau)?;
    bernoulli_bound(s0_tau, n1, lambda_u, sigma_u)
}

pub fn landmark_type1(plan: &TtePlan, landmark_bias_combined: f64, s0: f64) -> f64 {
    let se0 = (s0 * (1.0 - s0) / (plan.n1 + plan.n2) as f64).sqrt();
    shifted_normal_type1(plan.alpha, landmark_bias_combined / se0)
}

/// Stage-1 bias `B` of the mean survival time of the selected dose.
pub fn mean_time_bias(cov_tu: f64, sigma_u: f64, n1: u64, lambda_u: f64) -> Result<f64> {
    Ok(cov_tu * stage1_factor(sigma_u, n1, lambda_u)?)
}

/// `Phi(-z_{1-alpha} - shift)` for lower-tail tests.
fn lower_tail_type1(alpha: f64, shift: f64) -> f64 {
    norm_cdf(-norm_quantile(1.0 - alpha) - shift)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpTestPrediction {
    /// Stage-1 hazard bias `-lambda0^2 B`.
    pub hazard_bias: f64,
    /// Combined log-hazard bias `-lambda0 w1 B`.
    pub log_hazard_bias_combined: f64,
    pub bias_z: f64,
    pub type1: f64,
}

pub fn exp_test_type1(plan: &TtePlan, mean_time_bias_b: f64) -> ExpTestPrediction {
    let l0 = plan.lambda0;
    let log_hazard = -l0 * plan.w1() * mean_time_bias_b;
    let bias_z = log_hazard * plan.d_events.sqrt();
    ExpTestPrediction {
        hazard_bias: -l0 * l0 * mean_time_bias_b,
        log_hazard_bias_combined: log_hazard,
        bias_z,
        type1: lower_tail_type1(plan.alpha, bias_z),
    }
}

/// Prediction for the two-sample Cox test; used for both the Wald and the
/// score statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoxPrediction {
    pub beta_bias: f64,
    pub bias_z: f64,
    pub type1: f64,
}

pub fn cox_type1(plan: &TtePlan, mean_time_bias_b: f64) -> CoxPrediction {
    let beta_bias = -plan.lambda0 * plan.w1() * mean_time_bias_b;
    cox_from_beta(plan, beta_bias)
}

fn cox_from_beta(plan: &TtePlan, beta_bias: f64) -> CoxPrediction {
    let bias_z = beta_bias * (plan.d_total / 4.0).sqrt();
    CoxPrediction { beta_bias, bias_z, type1: lower_tail_type1(plan.alpha, bias_z) }
}

/// Conservative hazard and combined log-hazard bias obtained from a landmark
/// bias bound through `lambda = -ln S(tau) / tau`.
pub fn landmark_hazard_bridge(
    s0_tau: f64,
    tau: f64,
    lambda0: f64,
    landmark_bias_max_value: f64,
    w1: f64,
) -> Result<(f64, f64)> {
    check_probability("S0(tau)", s0_tau)?;
    if !(tau > 0.0 && lambda0 > 0.0) {
        return domain("tau and lambda0 must be positive");
    }
    let hazard_upper = -landmark_bias_max_value / (tau * s0_tau);
    Ok((hazard_upper, w1 * hazard_upper / lambda0))
}

/// Type I predictions from the bridge bound: `(exp_type1, cox_type1)`.
pub fn bridge_type1(plan: &TtePlan, beta_bias_upper: f64) -> (f64, f64) {
    let exp = lower_tail_type1(plan.alpha, beta_bias_upper * plan.d_events.sqrt());
    (exp, cox_from_beta(plan, beta_bias_upper).type1)
}

/// Expected events among `n` patients with exponential survival, uniform
/// entry over `[0, t_entry]` and analysis at calendar time `t_admin`.
pub fn expected_events(n: f64, lambda: f64, t_entry: f64, t_admin: f64) -> Result<f64> {
    if !(lambda > 0.0 && t_entry > 0.0 && t_admin >= t_entry) {
        return domain("need lambda > 0, t_entry > 0 and t_admin >= t_entry");
    }
    let tail = ((-lambda * (t_admin - t_entry)).exp() - (-lambda * t_admin).exp()) / (lambda * t_entry);
    Ok(n * (1.0 - tail))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TteBiasReport {
    pub landmark_bias: f64,
    pub landmark_bias_max: f64,
    pub landmark_type1: f64,
    pub mean_time_bias: f64,
    pub hazard_bias: f64,
    pub log_hazard_bias_combined: f64,
    pub exp_type1: f64,
    pub beta_bias_combined: f64,
    pub cox_type1: f64,
    pub bridge_hazard_bias_upper: f64,
    pub bridge_beta_bias_upper: f64,
    pub bridge_exp_type1: f64,
    pub bridge_cox_type1: f64,
}

/// Inputs describing the per-patient joint behaviour of survival and utility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TteCovariances {
    pub sigma_u: f64,
    pub cov_su: f64,
    pub cov_tu: f64,
}

pub fn tte_bias_report(plan: &TtePlan, cov: &TteCovariances) -> Result<TteBiasReport> {
    plan.validate()?;
    let s0 = plan.s0();
    let w1 = plan.w1();
    let lb = landmark_bias(cov.cov_su, cov.sigma_u, plan.n1, plan.lambda_u, w1)?;
    let lb_max = landmark_bias_max(s0, plan.n1, plan.lambda_u, Some(cov.sigma_u))?;
    let b = mean_time_bias(cov.cov_tu, cov.sigma_u, plan.n1, plan.lambda_u)?;
    let exp = exp_test_type1(plan, b);
    let cox = cox_type1(plan, b);
    let (h_up, beta_up) = landmark_hazard_bridge(s0, plan.tau, plan.lambda0, lb_max, w1)?;
    let (bridge_exp, bridge_cox) = bridge_type1(plan, beta_up);
    Ok(TteBiasReport {
        landmark_bias: lb,
        landmark_bias_max: lb_max,
        landmark_type1: landmark_type1(plan, lb, s0),
        mean_time_bias: b,
        hazard_bias: exp.hazard_bias,
        log_hazard_bias_combined: exp.log_hazard_bias_combined,
        exp_type1: exp.type1,
        beta_bias_combined: cox.beta_bias,
        cox_type1: cox.type1,
        bridge_hazard_bias_upper: h_up,
        bridge_beta_bias_upper: beta_up,
        bridge_exp_type1: bridge_exp,
        bridge_cox_type1: bridge_cox,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan() -> TtePlan {
        TtePlan {
            lambda0: 0.1,
            tau: 24.0,
            n1: 60,
            n2: 140,
            lambda_u: 0.0,
            alpha: 0.025,
            d_events: 196.0,
            d_total: 392.0,
        }
    }

    #[test]
    fn landmark_values() {
        assert_eq!(landmark_bias(0.0, 0.4, 60, 0.0, 0.3).unwrap(), 0.0);
        let s0 = (-2.4f64).exp();
        assert!((s0 - 0.090718).abs() < 1e-6);
        let bound = landmark_bias_max(s0, 60, 0.0, None).unwrap();
        assert!((bound - 0.020920).abs() < 1e-5);
        assert!((0.3 * bound - 0.006275).abs() < 2e-6);
        // Saturated covariance reproduces the bound.
        let sd_s = (s0 * (1.0 - s0)).sqrt();
        let sat = landmark_bias(sd_s * 0.4, 0.4, 60, 0.0, 1.0).unwrap();
        assert!((sat - bound).abs() < 1e-15);
        assert!(landmark_bias_max(0.5, 60, 0.0, None).unwrap() > landmark_bias_max(0.4, 60, 0.0, None).unwrap());
        assert!((landmark_type1(&plan(), 0.0, s0) - 0.025).abs() < 1e-15);
    }

    #[test]
    fn hazard_scale_tests() {
        let p = plan();
        assert!((exp_test_type1(&p, 0.0).type1 - 0.025).abs() < 1e-15);
        assert!((cox_type1(&p, 0.0).type1 - 0.025).abs() < 1e-15);
        let e = exp_test_type1(&p, 0.3);
        let c = cox_type1(&p, 0.3);
        assert!(e.type1 > 0.025 && c.type1 > 0.025);
        assert_eq!(e.log_hazard_bias_combined, c.beta_bias);
        assert!((e.hazard_bias + 0.01 * 0.3).abs() < 1e-15);
        assert!(e.log_hazard_bias_combined < 0.0);
    }

    #[test]
    fn bridge_magnitudes() {
        let s0 = (-2.4f64).exp();
        let (h, beta) = landmark_hazard_bridge(s0, 24.0, 0.1, 0.020917, 0.3).unwrap();
        assert!((h + 0.009607).abs() < 1e-6);
        assert!((beta - 0.3 * h / 0.1).abs() < 1e-15);
        assert_eq!(landmark_hazard_bridge(s0, 24.0, 0.1, 0.0, 0.3).unwrap(), (-0.0, -0.0));
    }

    #[test]
    fn expected_event_count() {
        let e = expected_events(200.0, 0.1, 52.0, 76.0).unwrap();
        let tail = ((-2.4f64).exp() - (-7.6f64).exp()) / 5.2;
        assert!((e - 200.0 * (1.0 - tail)).abs() < 1e-12);
        assert!(expected_events(200.0, 0.1, 52.0, 40.0).is_err());
    }

    #[test]
    fn report_signs() {
        let r = tte_bias_report(&plan(), &TteCovariances { sigma_u: 0.4, cov_su: 0.05, cov_tu: 2.0 }).unwrap();
        assert!(r.landmark_bias > 0.0 && r.hazard_bias < 0.0 && r.beta_bias_combined < 0.0);
        assert!(r.landmark_type1 > 0.025 && r.exp_type1 > 0.025 && r.cox_type1 > 0.025);
        assert!(r.bridge_beta_bias_upper < 0.0);
    }
}
