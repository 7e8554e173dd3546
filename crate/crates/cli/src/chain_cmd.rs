//! `bias` and `type1`: the analytic plugin chain.

use doseopt_core::bias::{binomial_critical, binomial_type1, combined_bias, max_bias, selection_bias, z_test_type1};
use doseopt_core::tte::{
    bridge_type1, expected_events, landmark_bias_max, landmark_hazard_bridge, landmark_type1, tte_bias_report,
};
use doseopt_core::{joint_probs, utility_moments, TtePlan, TteCovariances, TwoStagePlan, UtilityMoments, UtilitySpec};

use crate::args::{ChainArgs, TestArg};
use crate::common::{fmt, parse_utilities};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Report {
    Bias,
    Type1,
}

struct Inputs {
    plan: TwoStagePlan,
    moments: Option<UtilityMoments>,
    tte: Option<TtePlan>,
}

fn utilities(args: &ChainArgs) -> CliResult<Option<UtilitySpec>> {
    let given = [args.response_only, args.utilities.is_some(), args.delta.is_some() || args.d.is_some()];
    if given.iter().filter(|&&g| g).count() > 1 {
        return Err(CliError::usage("give only one of --response-only, --utilities, or --delta/--d"));
    }
    if args.response_only {
        return Ok(Some(UtilitySpec::response_only()));
    }
    if let Some(text) = &args.utilities {
        return Ok(Some(parse_utilities(text)?));
    }
    match (args.delta, args.d) {
        (Some(delta), Some(d)) => Ok(Some(UtilitySpec::from_margins(delta, d)?)),
        (None, None) => Ok(None),
        _ => Err(CliError::usage("--delta and --d must be given together")),
    }
}

fn inputs(args: &ChainArgs) -> CliResult<Inputs> {
    let (p, p0) = match (args.p, args.p0) {
        (None, None) => return Err(CliError::usage("give --p or --p0")),
        (p, p0) => (p.or(p0).unwrap(), p0.or(p).unwrap()),
    };
    if args.n1 == 0 {
        return Err(CliError::usage("--n1 must be at least 1"));
    }
    let n2 = match args.n2 {
        Some(n2) => n2,
        None if args.n_total >= args.n1 => args.n_total - args.n1,
        None => return Err(CliError::usage(format!("--n1 {} exceeds --n-total {}", args.n1, args.n_total))),
    };
    let plan = TwoStagePlan::new(args.n1, n2, args.lambda_u, p0, args.alpha)?;

    let mut moments = match utilities(args)? {
        Some(u) => {
            let q = match args.q {
                Some(q) => Some(q),
                None if u.scores[0] == u.scores[1] && u.scores[2] == u.scores[3] => Some(0.5),
                None => None,
            };
            match q {
                Some(q) => Some(utility_moments(&u, &joint_probs(p, q, args.phi)?)),
                None => return Err(CliError::usage("--q is required when the utilities depend on safety")),
            }
        }
        None => match (args.sigma_u, args.cov_xu) {
            (Some(s), Some(c)) => Some(UtilityMoments { mu: f64::NAN, sigma2: s * s, cov_xu: c }),
            _ => None,
        },
    };
    if let Some(m) = moments.as_mut() {
        if let Some(s) = args.sigma_u {
            m.sigma2 = s * s;
        }
        if let Some(c) = args.cov_xu {
            m.cov_xu = c;
        }
    }

    let tte = if args.tte || args.bridge {
        let n_total = (plan.n1 + plan.n2) as f64;
        let d_events = match args.d_events {
            Some(d) => d,
            None => expected_events(n_total, args.lambda0, args.t_entry, args.t_admin)?,
        };
        let plan = TtePlan {
            lambda0: args.lambda0,
            tau: args.tau,
            n1: plan.n1,
            n2: plan.n2,
            lambda_u: args.lambda_u,
            alpha: args.alpha,
            d_events,
            d_total: args.d_total.unwrap_or(2.0 * d_events),
        };
        plan.validate()?;
        Some(plan)
    } else {
        None
    };
    Ok(Inputs { plan, moments, tte })
}

fn missing(what: &str) -> CliError {
    CliError::usage(format!("missing covariance inputs: {what}; or use --max for the conservative bounds"))
}

struct Lines(String);

impl Lines {
    fn add(&mut self, name: &str, value: f64, note: &str) {
        self.0.push_str(&format!("{name:<28} {}", fmt(value, 6)));
        if !note.is_empty() {
            self.0.push_str("  ");
            self.0.push_str(note);
        }
        self.0.push('\n');
    }
}

pub fn run(args: &ChainArgs, report: Report) -> CliResult<String> {
    let inp = inputs(args)?;
    let plan = &inp.plan;
    let mut out = Lines(String::new());
    let sigma = inp.moments.map(|m| m.sigma());
    let wants = |t: TestArg| report == Report::Bias || args.test == TestArg::All || args.test == t;
    let binary_wanted = wants(TestArg::Z) || wants(TestArg::Binomial);
    let tte_wanted = wants(TestArg::Landmark) || wants(TestArg::Exp) || wants(TestArg::Cox);
    if report == Report::Type1 && !binary_wanted && inp.tte.is_none() {
        return Err(CliError::usage("time-to-event tests need --tte"));
    }

    let label = if args.max { "max" } else { "plugin" };
    if binary_wanted {
        let stage1 = if args.max {
            max_bias(plan.p0, plan.n1, plan.lambda_u, sigma)?
        } else {
            let m = inp.moments.ok_or_else(|| missing("give utilities (and --q) or --sigma-u with --cov-xu"))?;
            selection_bias(&m, plan.n1, plan.lambda_u, None)?
        };
        let combined = combined_bias(stage1, plan.n1, plan.n2);
        match report {
            Report::Bias => {
                out.add("stage1_bias", stage1, label);
                out.add("dilution", plan.dilution(), "");
                out.add("combined_bias", combined, label);
                if !args.max {
                    if let Ok(mx) = max_bias(plan.p0, plan.n1, plan.lambda_u, sigma) {
                        out.add("max_stage1_bias", mx, "max");
                        out.add("max_combined_bias", combined_bias(mx, plan.n1, plan.n2), "max");
                    }
                }
            }
            Report::Type1 => {
                if wants(TestArg::Z) {
                    out.add("z_type1", z_test_type1(plan, combined), label);
                }
                if wants(TestArg::Binomial) {
                    let k = binomial_critical(plan.n_total(), plan.p0, plan.alpha);
                    out.add("binomial_type1", binomial_type1(plan, combined)?, &format!("{label}, k_c = {k}"));
                }
            }
        }
    }

    if let (Some(tp), true) = (inp.tte.as_ref(), tte_wanted) {
        let s0 = tp.s0();
        let w1 = tp.w1();
        if args.max || args.bridge {
            let lb_max = landmark_bias_max(s0, tp.n1, tp.lambda_u, sigma)?;
            let (h_up, beta_up) = landmark_hazard_bridge(s0, tp.tau, tp.lambda0, lb_max, w1)?;
            let (exp_t1, cox_t1) = bridge_type1(tp, beta_up);
            match report {
                Report::Bias => {
                    out.add("landmark_stage1_bias", lb_max, "max");
                    out.add("landmark_combined_bias", w1 * lb_max, "max");
                    out.add("hazard_stage1_bias", h_up, "bridge");
                    out.add("log_hazard_combined_bias", beta_up, "bridge");
                }
                Report::Type1 => {
                    if wants(TestArg::Landmark) {
                        out.add("landmark_type1", landmark_type1(tp, w1 * lb_max, s0), "max");
                    }
                    if wants(TestArg::Exp) {
                        out.add("exp_type1", exp_t1, "bridge");
                    }
                    if wants(TestArg::Cox) {
                        out.add("cox_type1", cox_t1, "bridge");
                    }
                }
            }
        } else {
            let sigma_u = sigma.ok_or_else(|| missing("give utilities (and --q) or --sigma-u"))?;
            let (cov_su, cov_tu) = match (args.cov_su, args.cov_tu) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(missing("--cov-su and --cov-tu are required for the survival endpoints")),
            };
            let r = tte_bias_report(tp, &TteCovariances { sigma_u, cov_su, cov_tu })?;
            match report {
                Report::Bias => {
                    out.add("landmark_combined_bias", r.landmark_bias, "plugin");
                    out.add("mean_time_stage1_bias", r.mean_time_bias, "plugin, weeks");
                    out.add("hazard_stage1_bias", r.hazard_bias, "plugin, per week");
                    out.add("log_hazard_combined_bias", r.log_hazard_bias_combined, "plugin");
                    out.add("cox_beta_combined_bias", r.beta_bias_combined, "plugin");
                }
                Report::Type1 => {
                    if wants(TestArg::Landmark) {
                        out.add("landmark_type1", r.landmark_type1, "plugin");
                    }
                    if wants(TestArg::Exp) {
                        out.add("exp_type1", r.exp_type1, "plugin");
                    }
                    if wants(TestArg::Cox) {
                        out.add("cox_type1", r.cox_type1, "plugin");
                    }
                }
            }
        }
        if report == Report::Bias {
            out.add("events_selected", tp.d_events, "");
            out.add("events_total", tp.d_total, "");
        }
    }
    Ok(out.0)
}
