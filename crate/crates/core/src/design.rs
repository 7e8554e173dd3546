//! Per-arm sample size and decision threshold for the two-dose selection
//! rule, by the normal approximation and by exact lattice enumeration.

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, domain, Error, Result};
use crate::lattice::{
    rationalize_utilities, DifferenceDist, LatticePmf, PatientLattice, DEFAULT_MAX_DENOMINATOR,
    DEFAULT_MAX_SUPPORT,
};
use crate::outcome::{joint_probs, utility_moments, JointOutcomeModel, UtilitySpec};
use crate::stats::{norm_cdf, norm_quantile};

/// Largest per-arm size [`n_for_threshold`] will report.
pub const THRESHOLD_N_CAP: u64 = 10_000_000;
/// Default per-arm cap for the exact search.
pub const DEFAULT_EXACT_N_CAP: u64 = 5000;

/// Reference design inputs. The two sizing scenarios are
///
/// * `S_L`: dose L at `(p, q)`, dose H at `(p, q - d)`; L is correct.
/// * `S_H`: dose L at `(p - delta, q)`, dose H at `(p, q)`; H is correct.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignScenario {
    pub p: f64,
    pub q: f64,
    pub delta: f64,
    pub d: f64,
    pub phi: f64,
    pub utilities: UtilitySpec,
    pub alpha_l: f64,
    pub alpha_h: f64,
}

/// Outcome models of the four arms appearing in the two scenarios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioArms {
    pub sl_low: JointOutcomeModel,
    pub sl_high: JointOutcomeModel,
    pub sh_low: JointOutcomeModel,
    pub sh_high: JointOutcomeModel,
}

impl DesignScenario {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        p: f64,
        q: f64,
        delta: f64,
        d: f64,
        phi: f64,
        utilities: UtilitySpec,
        alpha_l: f64,
        alpha_h: f64,
    ) -> Result<Self> {
        let s = Self { p, q, delta, d, phi, utilities, alpha_l, alpha_h };
        s.validate()?;
        Ok(s)
    }

    /// Scenario with margin-derived utilities and a common PCS target.
    pub fn from_margins(p: f64, q: f64, delta: f64, d: f64, phi: f64, alpha: f64) -> Result<Self> {
        let u = UtilitySpec::from_margins(delta, d)?;
        Self::new(p, q, delta, d, phi, u, alpha, alpha)
    }

    /// Efficacy-only scenario. Safety does not enter the utility, so the
    /// safety inputs are fixed placeholders with no effect on any result.
    pub fn rose(p: f64, delta: f64, alpha: f64) -> Result<Self> {
        Self::new(p, 0.5, delta, 0.25, 0.0, UtilitySpec::response_only(), alpha, alpha)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("p", self.p)?;
        check_probability("q", self.q)?;
        for (name, a) in [("alpha_L", self.alpha_l), ("alpha_H", self.alpha_h)] {
            if !(a > 0.5 && a < 1.0) {
                return domain(format!("{name} = {a} must lie in (0.5, 1)"));
            }
        }
        if !(self.delta > 0.0 && self.p - self.delta > 0.0) {
            return domain(format!(
                "need delta > 0 and p - delta > 0 (p = {}, delta = {})",
                self.p, self.delta
            ));
        }
        if !(self.d > 0.0 && self.q - self.d > 0.0) {
            return domain(format!("need d > 0 and q - d > 0 (q = {}, d = {})", self.q, self.d));
        }
        let m = scenario_moments(self)?;
        if !(m.delta_mu_l <= 0.0 && m.delta_mu_h > 0.0) {
            return domain(format!(
                "utility differences must satisfy dmu(S_L) <= 0 < dmu(S_H); got {:.6} and {:.6}",
                m.delta_mu_l, m.delta_mu_h
            ));
        }
        Ok(())
    }

    pub fn arms(&self) -> Result<ScenarioArms> {
        let arm = |label: &str, p: f64, q: f64| {
            joint_probs(p, q, self.phi).map_err(|e| match e {
                Error::Domain(msg) => Error::Domain(format!("{label} arm: {msg}")),
                other => other,
            })
        };
        Ok(ScenarioArms {
            sl_low: arm("S_L dose L", self.p, self.q)?,
            sl_high: arm("S_L dose H", self.p, self.q - self.d)?,
            sh_low: arm("S_H dose L", self.p - self.delta, self.q)?,
            sh_high: arm("S_H dose H", self.p, self.q)?,
        })
    }
}

/// Mean utility difference (H minus L) and summed arm variance per scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMoments {
    pub delta_mu_l: f64,
    pub v_l: f64,
    pub delta_mu_h: f64,
    pub v_h: f64,
}

pub fn scenario_moments(s: &DesignScenario) -> Result<ScenarioMoments> {
    let arms = s.arms()?;
    let u = &s.utilities;
    let [sl_l, sl_h, sh_l, sh_h] =
        [arms.sl_low, arms.sl_high, arms.sh_low, arms.sh_high].map(|m| utility_moments(u, &m));
    Ok(ScenarioMoments {
        delta_mu_l: sl_h.mu - sl_l.mu,
        v_l: sl_h.sigma2 + sl_l.sigma2,
        delta_mu_h: sh_h.mu - sh_l.mu,
        v_h: sh_h.sigma2 + sh_l.sigma2,
    })
}

// Ceiling that ignores floating noise just above an integer.
fn ceil_size(x: f64) -> f64 {
    (x - 1e-9).ceil().max(1.0)
}

/// Per-scenario sizes for a fixed threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdSizes {
    pub n_l: u64,
    pub n_h: u64,
    pub n: u64,
}

pub fn n_for_threshold(s: &DesignScenario, lambda_u: f64) -> Result<ThresholdSizes> {
    let m = scenario_moments(s)?;
    if !(lambda_u > m.delta_mu_l && lambda_u < m.delta_mu_h) {
        return domain(format!(
            "lambda_u = {lambda_u} must lie strictly between {:.6} and {:.6}",
            m.delta_mu_l, m.delta_mu_h
        ));
    }
    let z_l = norm_quantile(s.alpha_l);
    let z_h = norm_quantile(s.alpha_h);
    let raw_l = z_l * z_l * m.v_l / (lambda_u - m.delta_mu_l).powi(2);
    let raw_h = z_h * z_h * m.v_h / (m.delta_mu_h - lambda_u).powi(2);
    let cap = THRESHOLD_N_CAP as f64;
    for (label, raw) in [("S_L", raw_l), ("S_H", raw_h)] {
        if !raw.is_finite() || raw > cap {
            return Err(Error::Resource(format!(
                "{label} needs more than {THRESHOLD_N_CAP} patients per arm at lambda_u = {lambda_u}"
            )));
        }
    }
    let (n_l, n_h) = (ceil_size(raw_l) as u64, ceil_size(raw_h) as u64);
    Ok(ThresholdSizes { n_l, n_h, n: n_l.max(n_h) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Approx,
    Exact,
}

/// Scenario whose PCS constraint is tightest at the returned design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Binding {
    #[serde(rename = "S_L")]
    Low,
    #[serde(rename = "S_H")]
    High,
    #[serde(rename = "both")]
    Both,
}

impl Binding {
    fn from_slack(slack_l: f64, slack_h: f64) -> Self {
        if (slack_l - slack_h).abs() < 1e-12 {
            Binding::Both
        } else if slack_l < slack_h {
            Binding::Low
        } else {
            Binding::High
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub n: u64,
    pub lambda_u: f64,
    pub method: Method,
    /// Normal-model PCS for [`Method::Approx`], exact PCS otherwise.
    pub pcs_l: f64,
    pub pcs_h: f64,
    pub binding: Binding,
    pub utilities: UtilitySpec,
}

/// PCS under the normal model for the mean utility difference.
pub fn analytic_pcs(s: &DesignScenario, n: u64, lambda_u: f64) -> Result<(f64, f64)> {
    let m = scenario_moments(s)?;
    let nf = n as f64;
    let pcs_l = norm_cdf((lambda_u - m.delta_mu_l) / (m.v_l / nf).sqrt());
    let pcs_h = norm_cdf((m.delta_mu_h - lambda_u) / (m.v_h / nf).sqrt());
    Ok((pcs_l, pcs_h))
}

/// Jointly optimal `n` from the normal approximation, with the threshold
/// re-evaluated at the integer `n`.
pub fn optimal_design_approx(s: &DesignScenario) -> Result<DesignResult> {
    s.validate()?;
    let m = scenario_moments(s)?;
    let z_l = norm_quantile(s.alpha_l);
    let z_h_low = norm_quantile(1.0 - s.alpha_h);
    let root = (z_l * m.v_l.sqrt() - z_h_low * m.v_h.sqrt()) / (m.delta_mu_h - m.delta_mu_l);
    let raw = root * root;
    if raw > THRESHOLD_N_CAP as f64 {
        return Err(Error::Resource(format!("approximate design needs more than {THRESHOLD_N_CAP} per arm")));
    }
    let n = ceil_size(raw) as u64;
    let lambda_u = m.delta_mu_h + z_h_low * (m.v_h / n as f64).sqrt();
    let (pcs_l, pcs_h) = analytic_pcs(s, n, lambda_u)?;
    Ok(DesignResult {
        n,
        lambda_u,
        method: Method::Approx,
        pcs_l,
        pcs_h,
        binding: Binding::from_slack(pcs_l - s.alpha_l, pcs_h - s.alpha_h),
        utilities: s.utilities,
    })
}

/// Candidate thresholds for the exact search.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum GridSpec {
    /// Every distinct decision rule: all lattice thresholds reachable by a
    /// real `lambda_u` in the open interval `(dmu(S_L), dmu(S_H))`.
    #[default]
    Lattice,
    /// `lambda_u = dmu(S_L) + i * step`, `i >= 1`, inside the open interval.
    Uniform { step: f64 },
}

/// Which feasible threshold to report when several work at the minimal n.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaChoice {
    /// Lowest feasible threshold (largest PCS under `S_H`).
    Smallest,
    /// Highest feasible threshold (largest PCS under `S_L`).
    #[default]
    Largest,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactOptions {
    pub grid: GridSpec,
    pub choice: LambdaChoice,
    pub n_cap: u64,
    /// First `n` examined; every `n` from here up to `n_cap` is scanned.
    pub n_start: u64,
    pub max_support: usize,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            grid: GridSpec::Lattice,
            choice: LambdaChoice::default(),
            n_cap: DEFAULT_EXACT_N_CAP,
            n_start: 1,
            max_support: DEFAULT_MAX_SUPPORT,
        }
    }
}

/// Incrementally grown utility-sum pmfs for the three distinct arm models.
struct ScenarioPmfs {
    base: PatientLattice,
    sl_high: PatientLattice,
    sh_low: PatientLattice,
    pmf_base: LatticePmf,
    pmf_sl_high: LatticePmf,
    pmf_sh_low: LatticePmf,
    max_support: usize,
}

impl ScenarioPmfs {
    fn new(s: &DesignScenario, max_support: usize) -> Result<Self> {
        let lattice = rationalize_utilities(&s.utilities, DEFAULT_MAX_DENOMINATOR)?;
        let arms = s.arms()?;
        let empty = LatticePmf::empty_sum(lattice.scale);
        Ok(Self {
            // (p, q) is dose L under S_L and dose H under S_H.
            base: PatientLattice::new(&lattice, arms.sl_low.pi),
            sl_high: PatientLattice::new(&lattice, arms.sl_high.pi),
            sh_low: PatientLattice::new(&lattice, arms.sh_low.pi),
            pmf_base: empty.clone(),
            pmf_sl_high: empty.clone(),
            pmf_sh_low: empty,
            max_support,
        })
    }

    fn scale(&self) -> u64 {
        self.base.scale
    }

    fn step(&mut self) -> Result<()> {
        self.pmf_base.add_patient(&self.base, self.max_support)?;
        self.pmf_sl_high.add_patient(&self.sl_high, self.max_support)?;
        self.pmf_sh_low.add_patient(&self.sh_low, self.max_support)
    }

    fn advance_to(&mut self, n: u64) -> Result<()> {
        while self.pmf_base.n() < n {
            self.step()?;
        }
        Ok(())
    }

    fn dists(&self) -> Result<(DifferenceDist<'_>, DifferenceDist<'_>)> {
        Ok((
            DifferenceDist::new(&self.pmf_sl_high, &self.pmf_base)?,
            DifferenceDist::new(&self.pmf_base, &self.pmf_sh_low)?,
        ))
    }
}

/// Exact PCS pair at threshold index `k`: `(Pr(D <= k | S_L), Pr(D > k | S_H))`.
fn pcs_at(sl: &DifferenceDist<'_>, sh: &DifferenceDist<'_>, k: i64) -> (f64, f64) {
    (1.0 - sl.prob_greater(k), sh.prob_greater(k))
}

/// Exact probabilities of correct selection at `(n, lambda_u)`.
pub fn exact_pcs(s: &DesignScenario, n: u64, lambda_u: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return domain("n must be at least 1");
    }
    let mut pmfs = ScenarioPmfs::new(s, DEFAULT_MAX_SUPPORT)?;
    pmfs.advance_to(n)?;
    let k = crate::lattice::lattice_threshold(n, pmfs.scale(), lambda_u);
    let (sl, sh) = pmfs.dists()?;
    Ok(pcs_at(&sl, &sh, k))
}

// Smallest k in [lo, hi] with pred(k) true, for pred monotone false -> true.
fn first_true(lo: i64, hi: i64, pred: impl Fn(i64) -> bool) -> Option<i64> {
    if lo > hi || !pred(hi) {
        return None;
    }
    let (mut a, mut b) = (lo, hi);
    while a < b {
        let mid = a + (b - a) / 2;
        if pred(mid) {
            b = mid;
        } else {
            a = mid + 1;
        }
    }
    Some(a)
}

struct Candidate {
    lambda_u: f64,
    pcs: (f64, f64),
}

/// Threshold value reported for lattice index `k` given the scaled open
/// interval `(a, b)`: the lattice point itself when admissible, otherwise
/// the midpoint of the admissible part of `[k, k + 1)`.
fn representative_lambda(k: i64, a: f64, b: f64, n_scale: f64) -> f64 {
    let kf = k as f64;
    if kf > a {
        kf / n_scale
    } else {
        0.5 * (a + (kf + 1.0).min(b)) / n_scale
    }
}

fn feasible_lattice(
    sl: &DifferenceDist<'_>,
    sh: &DifferenceDist<'_>,
    s: &DesignScenario,
    m: &ScenarioMoments,
    n_scale: f64,
    choice: LambdaChoice,
) -> (Option<Candidate>, (f64, f64)) {
    let a = m.delta_mu_l * n_scale;
    let b = m.delta_mu_h * n_scale;
    let lo = (a + 1e-9).floor() as i64;
    let hi = (b - 1e-9).ceil() as i64 - 1;
    // PCS_L rises and PCS_H falls with k.
    let k_l = first_true(lo, hi, |k| 1.0 - sl.prob_greater(k) >= s.alpha_l);
    let k_h = first_true(lo, hi, |k| sh.prob_greater(k) < s.alpha_h).map_or(Some(hi), |k| {
        if k > lo {
            Some(k - 1)
        } else {
            None
        }
    });
    let probe = k_l.unwrap_or(hi).clamp(lo, hi.max(lo));
    let best_effort = pcs_at(sl, sh, probe);
    match (k_l, k_h) {
        (Some(kl), Some(kh)) if kl <= kh => {
            let k = match choice {
                LambdaChoice::Smallest => kl,
                LambdaChoice::Largest => kh,
            };
            let lambda_u = representative_lambda(k, a, b, n_scale);
            (Some(Candidate { lambda_u, pcs: pcs_at(sl, sh, k) }), best_effort)
        }
        _ => (None, best_effort),
    }
}

fn feasible_uniform(
    sl: &DifferenceDist<'_>,
    sh: &DifferenceDist<'_>,
    s: &DesignScenario,
    m: &ScenarioMoments,
    n: u64,
    scale: u64,
    step: f64,
    choice: LambdaChoice,
) -> (Option<Candidate>, (f64, f64)) {
    let mut found: Option<Candidate> = None;
    let mut best = (0.0, 0.0);
    let mut best_slack = f64::NEG_INFINITY;
    let mut i = 1u64;
    loop {
        let lambda_u = m.delta_mu_l + i as f64 * step;
        if lambda_u >= m.delta_mu_h {
            break;
        }
        let k = crate::lattice::lattice_threshold(n, scale, lambda_u);
        let pcs = pcs_at(sl, sh, k);
        let slack = (pcs.0 - s.alpha_l).min(pcs.1 - s.alpha_h);
        if slack > best_slack {
            best_slack = slack;
            best = pcs;
        }
        if pcs.0 >= s.alpha_l && pcs.1 >= s.alpha_h {
            let keep = match (&found, choice) {
                (None, _) => true,
                (Some(_), LambdaChoice::Largest) => true,
                (Some(_), LambdaChoice::Smallest) => false,
            };
            if keep {
                found = Some(Candidate { lambda_u, pcs });
            }
        }
        i += 1;
    }
    (found, best)
}

/// Smallest `n` for which some threshold meets both exact PCS targets.
pub fn optimal_design_exact(s: &DesignScenario, opts: &ExactOptions) -> Result<DesignResult> {
    s.validate()?;
    if opts.n_cap == 0 || opts.n_start == 0 || opts.n_start > opts.n_cap {
        return Err(Error::Contract(format!(
            "need 1 <= n_start <= n_cap (got n_start = {}, n_cap = {})",
            opts.n_start, opts.n_cap
        )));
    }
    if let GridSpec::Uniform { step } = opts.grid {
        if !(step > 0.0 && step.is_finite()) {
            return domain(format!("grid step {step} must be positive"));
        }
    }
    let m = scenario_moments(s)?;
    let mut pmfs = ScenarioPmfs::new(s, opts.max_support)?;
    let scale = pmfs.scale();
    let mut best: Option<(u64, (f64, f64))> = None;
    let mut best_slack = f64::NEG_INFINITY;
    pmfs.advance_to(opts.n_start - 1)?;
    for n in opts.n_start..=opts.n_cap {
        pmfs.step()?;
        let (sl, sh) = pmfs.dists()?;
        let n_scale = (n * scale) as f64;
        let (found, effort) = match opts.grid {
            GridSpec::Lattice => feasible_lattice(&sl, &sh, s, &m, n_scale, opts.choice),
            GridSpec::Uniform { step } => feasible_uniform(&sl, &sh, s, &m, n, scale, step, opts.choice),
        };
        if let Some(c) = found {
            let (pcs_l, pcs_h) = c.pcs;
            return Ok(DesignResult {
                n,
                lambda_u: c.lambda_u,
                method: Method::Exact,
                pcs_l,
                pcs_h,
                binding: Binding::from_slack(pcs_l - s.alpha_l, pcs_h - s.alpha_h),
                utilities: s.utilities,
            });
        }
        let slack = (effort.0 - s.alpha_l).min(effort.1 - s.alpha_h);
        if slack > best_slack {
            best_slack = slack;
            best = Some((n, effort));
        }
    }
    let (best_n, (best_pcs_l, best_pcs_h)) = best.unwrap_or((0, (0.0, 0.0)));
    Err(Error::NoFeasibleDesign { n_cap: opts.n_cap, best_n, best_pcs_l, best_pcs_h })
}

/// Efficacy-only design.
pub fn rose_design(p: f64, delta: f64, alpha: f64, method: Method) -> Result<DesignResult> {
    let s = DesignScenario::rose(p, delta, alpha)?;
    match method {
        Method::Approx => optimal_design_approx(&s),
        Method::Exact => optimal_design_exact(&s, &ExactOptions::default()),
    }
}
