//! Monte Carlo engine for the two-stage select-then-confirm pathway.
//!
//! Replications are split into fixed-size chunks. Each chunk is simulated
//! independently with one RNG stream per replication and the chunk results
//! are folded in chunk order, so output does not depend on the worker count.

pub mod generate;
pub mod rng;
pub mod study;
pub mod survival;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::DesignScenario;
use crate::error::{domain, Error, Result};
use crate::lattice::{rationalize_utilities, DEFAULT_MAX_DENOMINATOR};
use crate::outcome::{joint_probs, UtilitySpec};

pub use generate::{gen_arm, PatientRecord};
pub use rng::replication_rng;
pub use study::{run_selection, run_tests, Arm};

use study::{Accumulator, SelectionRule, StudyKernel};

/// Default replication count.
pub const DEFAULT_REPLICATIONS: u64 = 100_000;
pub const DEFAULT_CHUNK: u64 = 1024;
/// Cap on `replications * patients per replication`.
pub const DEFAULT_MAX_PATIENT_DRAWS: u64 = 20_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryConfig {
    /// Null response rate of the confirmatory test.
    pub p0: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TteConfig {
    /// Exponential hazard per week.
    pub lambda0: f64,
    /// Gaussian copula parameter linking response and survival.
    pub rho_c: f64,
    /// Accrual window length (weeks).
    pub t_entry: f64,
    /// Calendar time of the analysis (weeks).
    pub t_admin: f64,
    /// Landmark time (weeks).
    pub tau: f64,
    /// Concurrent control size; defaults to `n1 + n2`.
    pub n_control: Option<u64>,
    pub alpha: f64,
}

impl TteConfig {
    /// Weekly setting with 52 weeks of accrual, analysis at week 76 and a
    /// 24-week landmark.
    pub fn weekly(rho_c: f64) -> Self {
        Self { lambda0: 0.1, rho_c, t_entry: 52.0, t_admin: 76.0, tau: 24.0, n_control: None, alpha: 0.025 }
    }
}

/// Which Stage-1 data feed the plugin moment estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PluginProtocol {
    /// Selected arm only, divisor `n1`.
    #[default]
    SelectedArm,
    /// Within-arm deviations pooled over both arms, divisor `2 n1 - 2`.
    PooledArms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub p_l: f64,
    pub p_h: f64,
    pub q_l: f64,
    pub q_h: f64,
    pub phi: f64,
    pub utilities: UtilitySpec,
    pub lambda_u: f64,
    pub n1: u64,
    pub n2: u64,
    pub replications: u64,
    pub seed: u64,
    /// Separates RNG streams of different scenarios sharing a seed.
    pub scenario_key: u64,
    pub binary: BinaryConfig,
    pub tte: Option<TteConfig>,
    pub plugin: PluginProtocol,
}

impl SimConfig {
    /// Null scenario with both doses at `(p, q)` and `p0 = p`.
    pub fn null(p: f64, q: f64, phi: f64, utilities: UtilitySpec, n1: u64, n2: u64) -> Self {
        Self {
            p_l: p,
            p_h: p,
            q_l: q,
            q_h: q,
            phi,
            utilities,
            lambda_u: 0.0,
            n1,
            n2,
            replications: DEFAULT_REPLICATIONS,
            seed: 0,
            scenario_key: 0,
            binary: BinaryConfig { p0: p, alpha: 0.025 },
            tte: None,
            plugin: PluginProtocol::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return domain("replications must be at least 1");
        }
        if self.n1 == 0 {
            return domain("n1 must be at least 1");
        }
        if !self.lambda_u.is_finite() {
            return domain("lambda_u must be finite");
        }
        joint_probs(self.p_l, self.q_l, self.phi).map_err(|e| prefix("low dose", e))?;
        joint_probs(self.p_h, self.q_h, self.phi).map_err(|e| prefix("high dose", e))?;
        crate::bias::TwoStagePlan::new(self.n1, self.n2, self.lambda_u, self.binary.p0, self.binary.alpha)?;
        if let Some(t) = &self.tte {
            if !(t.rho_c > -1.0 && t.rho_c < 1.0) {
                return domain(format!("rho_c = {} must lie in (-1, 1)", t.rho_c));
            }
            if !(t.lambda0 > 0.0 && t.tau > 0.0 && t.t_entry > 0.0) {
                return domain("lambda0, tau and t_entry must be positive");
            }
            if !(t.t_admin - t.t_entry >= t.tau) {
                return domain(format!(
                    "minimum follow-up t_admin - t_entry = {} is shorter than tau = {}",
                    t.t_admin - t.t_entry,
                    t.tau
                ));
            }
            if !(t.alpha > 0.0 && t.alpha < 0.5) {
                return domain(format!("alpha = {} must lie in (0, 0.5)", t.alpha));
            }
            if t.n_control == Some(0) {
                return domain("n_control must be at least 1");
            }
        }
        Ok(())
    }

    pub fn patients_per_replication(&self) -> u64 {
        let control = self.tte.map_or(0, |t| t.n_control.unwrap_or(self.n1 + self.n2));
        2 * self.n1 + self.n2 + control
    }
}

fn prefix(label: &str, e: Error) -> Error {
    match e {
        Error::Domain(m) => Error::Domain(format!("{label}: {m}")),
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
    pub chunk: u64,
    pub max_patient_draws: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { workers: None, chunk: DEFAULT_CHUNK, max_patient_draws: DEFAULT_MAX_PATIENT_DRAWS }
    }
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn proportion(count: u64, total: u64) -> Self {
        let p = count as f64 / total as f64;
        Self { value: p, se: (p * (1.0 - p) / total as f64).sqrt() }
    }

    fn mean(r: &study::Running) -> Self {
        Self { value: r.mean(), se: r.se() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TteSummary {
    pub landmark_observed: Estimate,
    pub landmark_est: Estimate,
    pub exp_observed: Estimate,
    pub exp_est: Estimate,
    pub logrank_observed: Estimate,
    /// Shares the Cox plugin prediction.
    pub logrank_est: Estimate,
    pub cox_observed: Estimate,
    pub cox_est: Estimate,
    pub rho_tx: f64,
    /// Replications with no treated-arm events, excluded from `exp_observed`.
    pub exp_indeterminate: u64,
    pub mean_events: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub replications: u64,
    pub select_high: Estimate,
    /// Mean of pooled response rate minus the selected dose's true rate.
    pub bias_observed: Estimate,
    /// Averaged Stage-1 plugin estimate of the combined bias.
    pub bias_est: Estimate,
    pub bias_est_max: Estimate,
    pub phi_hat: f64,
    pub z_observed: Estimate,
    pub z_est: Estimate,
    pub z_est_max: Estimate,
    pub binom_observed: Estimate,
    pub binom_est: Estimate,
    pub binom_est_max: Estimate,
    pub binom_critical: u64,
    /// Replications whose Stage-1 utilities had zero spread.
    pub plugin_degenerate: u64,
    pub tte: Option<TteSummary>,
}

fn phi_from_cells(c: &[u64; 4]) -> f64 {
    let n = c.iter().sum::<u64>() as f64;
    let p = (c[0] + c[1]) as f64 / n;
    let q = (c[0] + c[2]) as f64 / n;
    let p11 = c[0] as f64 / n;
    let denom = (p * (1.0 - p) * q * (1.0 - q)).sqrt();
    if denom > 0.0 {
        (p11 - p * q) / denom
    } else {
        0.0
    }
}

/// Runs `replications` work items in fixed chunks and folds them in order.
fn run_chunks<A, F>(replications: u64, opts: &RunOptions, work: F) -> Result<A>
where
    A: Default + Send,
    F: Fn(u64, u64) -> A + Sync,
    A: Merge,
{
    let chunk = opts.chunk.max(1);
    let n_chunks = replications.div_ceil(chunk);
    let exec = || -> Vec<A> {
        (0..n_chunks)
            .into_par_iter()
            .map(|c| work(c * chunk, ((c + 1) * chunk).min(replications)))
            .collect()
    };
    let parts = match opts.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Resource(format!("cannot start worker pool: {e}")))?
            .install(exec),
        None => exec(),
    };
    let mut total = A::default();
    for p in &parts {
        total.merge_from(p);
    }
    Ok(total)
}

trait Merge {
    fn merge_from(&mut self, other: &Self);
}

impl Merge for Accumulator {
    fn merge_from(&mut self, other: &Self) {
        self.merge(other);
    }
}

impl Merge for u64 {
    fn merge_from(&mut self, other: &Self) {
        *self += *other;
    }
}

pub fn run_study(cfg: &SimConfig) -> Result<ScenarioSummary> {
    run_study_with(cfg, &RunOptions::default())
}

pub fn run_study_with(cfg: &SimConfig, opts: &RunOptions) -> Result<ScenarioSummary> {
    cfg.validate()?;
    let draws = cfg.replications.checked_mul(cfg.patients_per_replication());
    if draws.map_or(true, |d| d > opts.max_patient_draws) {
        return Err(Error::Resource(format!(
            "{} replications of {} patients exceed the cap of {} patient draws",
            cfg.replications,
            cfg.patients_per_replication(),
            opts.max_patient_draws
        )));
    }
    let lattice = rationalize_utilities(&cfg.utilities, DEFAULT_MAX_DENOMINATOR)?;
    let kernel = StudyKernel::new(cfg, lattice)?;
    let acc: Accumulator = run_chunks(cfg.replications, opts, |start, end| {
        let mut acc = Accumulator::default();
        for rep in start..end {
            let mut rng = replication_rng(cfg.seed, cfg.scenario_key, rep);
            kernel.replicate(&mut rng, &mut acc);
        }
        acc
    })?;
    Ok(summarize(&acc, &kernel))
}

fn summarize(acc: &Accumulator, kernel: &StudyKernel) -> ScenarioSummary {
    let r = acc.replications;
    let tte = acc.tte.as_ref().map(|t| {
        let cox_est = Estimate::mean(&t.cox_est);
        TteSummary {
            landmark_observed: Estimate::proportion(t.landmark, r),
            landmark_est: Estimate::mean(&t.landmark_est),
            exp_observed: Estimate::proportion(t.exponential, r - t.exp_indeterminate),
            exp_est: Estimate::mean(&t.exp_est),
            logrank_observed: Estimate::proportion(t.logrank, r),
            logrank_est: cox_est,
            cox_observed: Estimate::proportion(t.cox, r),
            cox_est,
            rho_tx: t.rho_tx(),
            exp_indeterminate: t.exp_indeterminate,
            mean_events: t.events.mean(),
        }
    });
    ScenarioSummary {
        replications: r,
        select_high: Estimate::proportion(acc.select_high, r),
        bias_observed: Estimate::mean(&acc.bias_observed),
        bias_est: Estimate::mean(&acc.bias_est),
        bias_est_max: Estimate::mean(&acc.bias_est_max),
        phi_hat: phi_from_cells(&acc.cells),
        z_observed: Estimate::proportion(acc.z, r),
        z_est: Estimate::mean(&acc.z_est),
        z_est_max: Estimate::mean(&acc.z_est_max),
        binom_observed: Estimate::proportion(acc.binomial, r),
        binom_est: Estimate::mean(&acc.binom_est),
        binom_est_max: Estimate::mean(&acc.binom_est_max),
        binom_critical: kernel.ctx.k_crit,
        plugin_degenerate: acc.plugin_degenerate,
        tte,
    }
}

/// Empirical probabilities of correct selection at a fixed design:
/// the low dose under `S_L` and the high dose under `S_H`.
pub fn empirical_pcs(
    scenario: &DesignScenario,
    n: u64,
    lambda_u: f64,
    replications: u64,
    seed: u64,
    opts: &RunOptions,
) -> Result<(Estimate, Estimate)> {
    scenario.validate()?;
    if n == 0 || replications == 0 {
        return domain("n and replications must be at least 1");
    }
    if replications.checked_mul(2 * n).map_or(true, |d| d > opts.max_patient_draws / 2) {
        return Err(Error::Resource(format!("{replications} replications at n = {n} exceed the draw cap")));
    }
    let arms = scenario.arms()?;
    let lattice = rationalize_utilities(&scenario.utilities, DEFAULT_MAX_DENOMINATOR)?;
    let rule = SelectionRule::new(n, &lattice, lambda_u);
    let mut out = [0u64; 2];
    for (i, (low, high)) in [(arms.sl_low, arms.sl_high), (arms.sh_low, arms.sh_high)].into_iter().enumerate() {
        let key = i as u64 + 1;
        out[i] = run_chunks(replications, opts, |start, end| {
            let mut hits = 0u64;
            for rep in start..end {
                let mut rng = replication_rng(seed, key, rep);
                hits += study::select_once(n, &low.pi, &high.pi, &lattice, &rule, &mut rng) as u64;
            }
            hits
        })?;
    }
    Ok((Estimate::proportion(replications - out[0], replications), Estimate::proportion(out[1], replications)))
}
