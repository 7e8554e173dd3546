//! CSV column layouts. Names follow the published table headers.

use doseopt_core::{ScenarioSummary, SimConfig};

use crate::common::fmt;
use crate::config::Layout;

pub const TABLE2: &[&str] = &["p", "phi", "n1", "n_total", "Observed", "Est", "Est_max", "phi_hat"];
pub const TABLE3: &[&str] = &[
    "p", "phi", "n1", "n_total", "Z_Observed", "Z_Est", "Z_Est_max", "Binom_Observed", "Binom_Est", "Binom_Est_max",
];
pub const TABLE4: &[&str] = &[
    "p", "rho_c", "n1", "n_total", "Landmark_Obs", "Landmark_Est", "Exp_Obs", "Exp_Est", "LR_Obs", "LR_Est", "Cox_Obs",
    "Cox_Est", "rho_tx",
];
pub const SUMMARY: &[&str] = &[
    "p_L", "p_H", "q_L", "q_H", "phi", "lambda_u", "n1", "n2", "replications", "select_H", "select_H_se", "Observed",
    "Observed_se", "Est", "Est_max", "phi_hat", "Z_Observed", "Z_Observed_se", "Z_Est", "Z_Est_max", "Binom_Observed",
    "Binom_Observed_se", "Binom_Est", "Binom_Est_max", "k_c", "rho_c", "Landmark_Obs", "Landmark_Obs_se",
    "Landmark_Est", "Exp_Obs", "Exp_Obs_se", "Exp_Est", "LR_Obs", "LR_Obs_se", "LR_Est", "Cox_Obs", "Cox_Obs_se",
    "Cox_Est", "rho_tx", "mean_events", "exp_indeterminate", "plugin_degenerate",
];

pub fn header(layout: Layout) -> &'static [&'static str] {
    match layout {
        Layout::Summary => SUMMARY,
        Layout::Table2 => TABLE2,
        Layout::Table3 => TABLE3,
        Layout::Table4 => TABLE4,
    }
}

const D: usize = 6;

pub fn row(layout: Layout, c: &SimConfig, s: &ScenarioSummary) -> Vec<String> {
    let n_total = (c.n1 + c.n2).to_string();
    let f = |x: f64| fmt(x, D);
    match layout {
        Layout::Table2 => vec![
            c.p_l.to_string(),
            c.phi.to_string(),
            c.n1.to_string(),
            n_total,
            f(s.bias_observed.value),
            f(s.bias_est.value),
            f(s.bias_est_max.value),
            f(s.phi_hat),
        ],
        Layout::Table3 => vec![
            c.p_l.to_string(),
            c.phi.to_string(),
            c.n1.to_string(),
            n_total,
            f(s.z_observed.value),
            f(s.z_est.value),
            f(s.z_est_max.value),
            f(s.binom_observed.value),
            f(s.binom_est.value),
            f(s.binom_est_max.value),
        ],
        Layout::Table4 => {
            let t = s.tte.as_ref().expect("table4 layout requires survival results");
            vec![
                c.p_l.to_string(),
                c.tte.map_or(String::new(), |t| t.rho_c.to_string()),
                c.n1.to_string(),
                n_total,
                f(t.landmark_observed.value),
                f(t.landmark_est.value),
                f(t.exp_observed.value),
                f(t.exp_est.value),
                f(t.logrank_observed.value),
                f(t.logrank_est.value),
                f(t.cox_observed.value),
                f(t.cox_est.value),
                f(t.rho_tx),
            ]
        }
        Layout::Summary => {
            let mut v = vec![
                c.p_l.to_string(),
                c.p_h.to_string(),
                c.q_l.to_string(),
                c.q_h.to_string(),
                c.phi.to_string(),
                c.lambda_u.to_string(),
                c.n1.to_string(),
                c.n2.to_string(),
                s.replications.to_string(),
                f(s.select_high.value),
                f(s.select_high.se),
                f(s.bias_observed.value),
                f(s.bias_observed.se),
                f(s.bias_est.value),
                f(s.bias_est_max.value),
                f(s.phi_hat),
                f(s.z_observed.value),
                f(s.z_observed.se),
                f(s.z_est.value),
                f(s.z_est_max.value),
                f(s.binom_observed.value),
                f(s.binom_observed.se),
                f(s.binom_est.value),
                f(s.binom_est_max.value),
                s.binom_critical.to_string(),
            ];
            match (&s.tte, c.tte) {
                (Some(t), Some(tc)) => v.extend([
                    tc.rho_c.to_string(),
                    f(t.landmark_observed.value),
                    f(t.landmark_observed.se),
                    f(t.landmark_est.value),
                    f(t.exp_observed.value),
                    f(t.exp_observed.se),
                    f(t.exp_est.value),
                    f(t.logrank_observed.value),
                    f(t.logrank_observed.se),
                    f(t.logrank_est.value),
                    f(t.cox_observed.value),
                    f(t.cox_observed.se),
                    f(t.cox_est.value),
                    f(t.rho_tx),
                    f(t.mean_events),
                    t.exp_indeterminate.to_string(),
                ]),
                _ => v.extend(std::iter::repeat(String::new()).take(16)),
            }
            v.push(s.plugin_degenerate.to_string());
            v
        }
    }
}
