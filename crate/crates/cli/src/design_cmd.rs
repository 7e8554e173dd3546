use doseopt_core::{
    empirical_pcs, optimal_design_approx, optimal_design_exact, Binding, DesignResult, DesignScenario, ExactOptions,
    LambdaChoice, Method, UtilitySpec,
};

use crate::args::{ChoiceArg, DesignArgs, MethodArg};
use crate::common::{fmt, fmt_utilities, parse_utilities, run_options};
use crate::error::{CliError, CliResult};

fn scenario(args: &DesignArgs) -> CliResult<DesignScenario> {
    let alpha_l = args.alpha_l.unwrap_or(args.alpha);
    let alpha_h = args.alpha_h.unwrap_or(args.alpha);
    if args.rose {
        if args.utilities.is_some() {
            return Err(CliError::usage("--rose fixes the utilities; drop --utilities"));
        }
        let mut s = DesignScenario::rose(args.p, args.delta, args.alpha)?;
        s.alpha_l = alpha_l;
        s.alpha_h = alpha_h;
        s.validate()?;
        return Ok(s);
    }
    let (q, d) = match (args.q, args.d) {
        (Some(q), Some(d)) => (q, d),
        _ => return Err(CliError::usage("--q and --d are required unless --rose is given")),
    };
    let u = match &args.utilities {
        Some(text) => parse_utilities(text)?,
        None => UtilitySpec::from_margins(args.delta, d)?,
    };
    Ok(DesignScenario::new(args.p, q, args.delta, d, args.phi, u, alpha_l, alpha_h)?)
}

pub fn binding_label(b: Binding) -> &'static str {
    match b {
        Binding::Low => "S_L",
        Binding::High => "S_H",
        Binding::Both => "both",
    }
}

pub fn solve(s: &DesignScenario, method: MethodArg, choice: ChoiceArg, n_cap: u64) -> CliResult<DesignResult> {
    Ok(match method {
        MethodArg::Approx => optimal_design_approx(s)?,
        MethodArg::Exact => {
            let opts = ExactOptions {
                choice: match choice {
                    ChoiceArg::Smallest => LambdaChoice::Smallest,
                    ChoiceArg::Largest => LambdaChoice::Largest,
                },
                n_cap,
                ..ExactOptions::default()
            };
            optimal_design_exact(s, &opts)?
        }
    })
}

pub fn run(args: &DesignArgs, workers: Option<usize>) -> CliResult<String> {
    let s = scenario(args)?;
    let r = solve(&s, args.method, args.lambda_choice, args.n_cap)?;
    let kind = match r.method {
        Method::Approx => "analytic",
        Method::Exact => "exact",
    };
    let mut out = String::new();
    out.push_str(&format!("design     {} ({})\n", if args.rose { "efficacy-only" } else { "utility" }, kind));
    out.push_str(&format!("utilities  {}\n", fmt_utilities(&r.utilities)));
    out.push_str(&format!("n per arm  {}\n", r.n));
    out.push_str(&format!("lambda_u   {}\n", fmt(r.lambda_u, 6)));
    out.push_str(&format!("PCS_L      {} ({kind}, target {})\n", fmt(r.pcs_l, 4), s.alpha_l));
    out.push_str(&format!("PCS_H      {} ({kind}, target {})\n", fmt(r.pcs_h, 4), s.alpha_h));
    out.push_str(&format!("binding    {}\n", binding_label(r.binding)));

    let mut header = "n,lambda_u,method,PCS_L,PCS_H,pcs_kind,binding,u1,u2,u3,u4".to_string();
    let u = r.utilities.scores;
    let mut row = format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        r.n,
        fmt(r.lambda_u, 6),
        match r.method {
            Method::Approx => "approx",
            Method::Exact => "exact",
        },
        fmt(r.pcs_l, 6),
        fmt(r.pcs_h, 6),
        kind,
        binding_label(r.binding),
        u[0],
        u[1],
        u[2],
        u[3]
    );
    if let Some(reps) = args.empirical {
        let (l, h) = empirical_pcs(&s, r.n, r.lambda_u, reps, args.seed, &run_options(workers))?;
        out.push_str(&format!("PCS_L      {} (empirical, SE {}, {reps} reps)\n", fmt(l.value, 4), fmt(l.se, 4)));
        out.push_str(&format!("PCS_H      {} (empirical, SE {}, {reps} reps)\n", fmt(h.value, 4), fmt(h.se, 4)));
        header.push_str(",PCS_L_emp,PCS_L_emp_se,PCS_H_emp,PCS_H_emp_se");
        row.push_str(&format!(",{},{},{},{}", fmt(l.value, 6), fmt(l.se, 6), fmt(h.value, 6), fmt(h.se, 6)));
    }
    out.push('\n');
    out.push_str(&header);
    out.push('\n');
    out.push_str(&row);
    out.push('\n');
    Ok(out)
}
