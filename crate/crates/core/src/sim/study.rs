//! One replication of the select-then-confirm pathway and its accumulators.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::bias::{binomial_type1, combined_bias, max_bias, selection_bias, z_test_type1, TwoStagePlan};
use crate::error::Result;
use crate::lattice::{lattice_threshold, IntegerUtilities};
use crate::outcome::{UtilityMoments, UtilitySpec};
use crate::stats::{norm_quantile, CompensatedSum};
use crate::tte::{cox_type1, exp_test_type1, landmark_bias, landmark_type1, mean_time_bias, TtePlan};

use super::generate::{fill_control, multinomial_counts, ArmGenerator, PatientRecord, SurvivalFrame};
use super::survival::{exponential_z, two_sample_scores, Observation};
use super::{PluginProtocol, SimConfig};

const X_OF: [f64; 4] = [1.0, 1.0, 0.0, 0.0];

/// Strict selection rule on integer lattice sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionRule {
    pub threshold: i64,
}

impl SelectionRule {
    pub fn new(n1: u64, lattice: &IntegerUtilities, lambda_u: f64) -> Self {
        Self { threshold: lattice_threshold(n1, lattice.scale, lambda_u) }
    }

    /// High is chosen only when its sum beats the low sum by more than the
    /// threshold; ties go to the low dose.
    pub fn selects_high(&self, low_sum: i64, high_sum: i64) -> bool {
        high_sum - low_sum > self.threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Low,
    High,
}

/// Stage-1 outcome of one arm.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ArmSummary {
    pub counts: [u64; 4],
    pub score_sum: i64,
}

impl ArmSummary {
    pub fn from_counts(counts: [u64; 4], lattice: &IntegerUtilities) -> Self {
        let score_sum = (0..4).map(|k| counts[k] as i64 * lattice.scores[k]).sum();
        Self { counts, score_sum }
    }

    pub fn from_records(recs: &[PatientRecord]) -> Self {
        let mut s = Self::default();
        for r in recs {
            s.counts[r.category()] += 1;
            s.score_sum += r.score;
        }
        s
    }

    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn responders(&self) -> u64 {
        self.counts[0] + self.counts[1]
    }
}

/// Centred Stage-1 cross-products feeding the plugin estimates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PluginMoments {
    pub suu: f64,
    pub sxu: f64,
    pub ssu: f64,
    pub svu: f64,
    pub df: f64,
}

impl PluginMoments {
    pub fn sigma_u(&self) -> f64 {
        (self.suu / self.df).sqrt()
    }

    pub fn cov(&self, cross: f64) -> f64 {
        cross / self.df
    }
}

fn add_count_moments(m: &mut PluginMoments, arm: &ArmSummary, u: &[f64; 4], df_loss: f64) {
    let n = arm.n() as f64;
    let ubar = (0..4).map(|k| arm.counts[k] as f64 * u[k]).sum::<f64>() / n;
    let xbar = arm.responders() as f64 / n;
    for k in 0..4 {
        let c = arm.counts[k] as f64;
        let du = u[k] - ubar;
        m.suu += c * du * du;
        m.sxu += c * (X_OF[k] - xbar) * du;
    }
    m.df += n - df_loss;
}

fn add_survival_moments(m: &mut PluginMoments, recs: &[PatientRecord], tau: f64) {
    let n = recs.len() as f64;
    let ubar = recs.iter().map(|r| r.u).sum::<f64>() / n;
    let sbar = recs.iter().filter(|r| r.survives(tau)).count() as f64 / n;
    let vbar = recs.iter().map(|r| r.v).sum::<f64>() / n;
    for r in recs {
        let du = r.u - ubar;
        let s = if r.survives(tau) { 1.0 } else { 0.0 };
        m.ssu += (s - sbar) * du;
        m.svu += (r.v - vbar) * du;
    }
}

/// Selection decision with the Stage-1 plugin inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage1 {
    pub selected: Arm,
    pub low: ArmSummary,
    pub high: ArmSummary,
    pub moments: PluginMoments,
}

impl Stage1 {
    pub fn selected_summary(&self) -> &ArmSummary {
        match self.selected {
            Arm::Low => &self.low,
            Arm::High => &self.high,
        }
    }
}

/// Applies the selection rule and computes the plugin moments under
/// `protocol`. Survival cross-products are filled when records are supplied.
pub fn run_selection(
    low: ArmSummary,
    high: ArmSummary,
    rule: &SelectionRule,
    u: &UtilitySpec,
    protocol: PluginProtocol,
    records: Option<(&[PatientRecord], &[PatientRecord], f64)>,
) -> Stage1 {
    let selected = if rule.selects_high(low.score_sum, high.score_sum) { Arm::High } else { Arm::Low };
    let mut moments = PluginMoments::default();
    match protocol {
        PluginProtocol::SelectedArm => {
            let (arm, recs) = match selected {
                Arm::Low => (&low, records.map(|r| (r.0, r.2))),
                Arm::High => (&high, records.map(|r| (r.1, r.2))),
            };
            add_count_moments(&mut moments, arm, &u.scores, 0.0);
            if let Some((recs, tau)) = recs {
                add_survival_moments(&mut moments, recs, tau);
            }
        }
        PluginProtocol::PooledArms => {
            add_count_moments(&mut moments, &low, &u.scores, 1.0);
            add_count_moments(&mut moments, &high, &u.scores, 1.0);
            if let Some((lo, hi, tau)) = records {
                add_survival_moments(&mut moments, lo, tau);
                add_survival_moments(&mut moments, hi, tau);
            }
        }
    }
    Stage1 { selected, low, high, moments }
}

/// Constants shared by every replication of one study.
#[derive(Debug, Clone)]
pub struct TestContext {
    pub plan: TwoStagePlan,
    pub z_crit: f64,
    pub k_crit: u64,
    pub tte: Option<TteContext>,
}

#[derive(Debug, Clone, Copy)]
pub struct TteContext {
    pub frame: SurvivalFrame,
    pub tau: f64,
    pub n_control: u64,
    pub alpha: f64,
    pub z_crit: f64,
    pub s0: f64,
}

impl TestContext {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        let plan = TwoStagePlan::new(cfg.n1, cfg.n2, cfg.lambda_u, cfg.binary.p0, cfg.binary.alpha)?;
        let tte = cfg.tte.map(|t| TteContext {
            frame: SurvivalFrame { lambda0: t.lambda0, rho_c: t.rho_c, t_entry: t.t_entry, t_admin: t.t_admin },
            tau: t.tau,
            n_control: t.n_control.unwrap_or(cfg.n1 + cfg.n2),
            alpha: t.alpha,
            z_crit: norm_quantile(1.0 - t.alpha),
            s0: (-t.lambda0 * t.tau).exp(),
        });
        Ok(Self {
            z_crit: norm_quantile(1.0 - plan.alpha),
            k_crit: crate::bias::binomial_critical(plan.n_total(), plan.p0, plan.alpha),
            plan,
            tte,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestDecisions {
    pub z: bool,
    pub binomial: bool,
    pub tte: Option<TteDecisions>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TteDecisions {
    pub landmark: bool,
    /// `None` when the treated arm has no events.
    pub exponential: Option<bool>,
    pub logrank: bool,
    pub cox: bool,
    pub events: u64,
    pub control_events: u64,
}

/// Confirmatory tests on the pooled selected-arm data.
pub fn run_tests(
    ctx: &TestContext,
    responders: u64,
    survival: Option<(&[PatientRecord], &[PatientRecord])>,
) -> TestDecisions {
    let n = ctx.plan.n_total();
    let p_hat = responders as f64 / n as f64;
    let z = (p_hat - ctx.plan.p0) / ctx.plan.se0();
    let tte = match (ctx.tte.as_ref(), survival) {
        (Some(t), Some((treated, control))) => Some(tte_tests(t, treated, control)),
        _ => None,
    };
    TestDecisions { z: z > ctx.z_crit, binomial: responders > ctx.k_crit, tte }
}

fn tte_tests(t: &TteContext, treated: &[PatientRecord], control: &[PatientRecord]) -> TteDecisions {
    let n = treated.len() as f64;
    let alive = treated.iter().filter(|r| r.survives(t.tau)).count() as f64;
    let z_lm = (alive / n - t.s0) / (t.s0 * (1.0 - t.s0) / n).sqrt();

    let events = treated.iter().filter(|r| r.event).count() as u64;
    let mut exposure = CompensatedSum::default();
    for r in treated {
        exposure.add(r.v);
    }
    let exponential = exponential_z(events, exposure.value(), t.frame.lambda0).map(|z| z <= -t.z_crit);

    let mut obs: Vec<Observation> = treated
        .iter()
        .map(|r| Observation { time: r.v, event: r.event, group: true })
        .chain(control.iter().map(|r| Observation { time: r.v, event: r.event, group: false }))
        .collect();
    let scores = two_sample_scores(&mut obs);
    TteDecisions {
        landmark: z_lm > t.z_crit,
        exponential,
        logrank: scores.logrank_z() <= -t.z_crit,
        cox: scores.cox_score_z() <= -t.z_crit,
        events,
        control_events: control.iter().filter(|r| r.event).count() as u64,
    }
}

/// Sum and sum of squares of a per-replication quantity.
#[derive(Debug, Clone, Copy, Default)]
pub struct Running {
    pub n: u64,
    pub sum: CompensatedSum,
    pub sumsq: CompensatedSum,
}

impl Running {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum.add(x);
        self.sumsq.add(x * x);
    }

    pub fn merge(&mut self, other: &Self) {
        self.n += other.n;
        self.sum.add(other.sum.value());
        self.sumsq.add(other.sumsq.value());
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        self.sum.value() / self.n as f64
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        let n = self.n as f64;
        let m = self.mean();
        let var = ((self.sumsq.value() - n * m * m) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TteAccumulator {
    pub landmark: u64,
    pub exponential: u64,
    pub exp_indeterminate: u64,
    pub logrank: u64,
    pub cox: u64,
    pub landmark_est: Running,
    pub exp_est: Running,
    pub cox_est: Running,
    pub events: Running,
    /// Sums for the Pearson correlation of latent `T` with `X`.
    pub n_tx: u64,
    pub sx: CompensatedSum,
    pub st: CompensatedSum,
    pub stt: CompensatedSum,
    pub sxt: CompensatedSum,
}

impl TteAccumulator {
    fn merge(&mut self, o: &Self) {
        self.landmark += o.landmark;
        self.exponential += o.exponential;
        self.exp_indeterminate += o.exp_indeterminate;
        self.logrank += o.logrank;
        self.cox += o.cox;
        self.landmark_est.merge(&o.landmark_est);
        self.exp_est.merge(&o.exp_est);
        self.cox_est.merge(&o.cox_est);
        self.events.merge(&o.events);
        self.n_tx += o.n_tx;
        self.sx.add(o.sx.value());
        self.st.add(o.st.value());
        self.stt.add(o.stt.value());
        self.sxt.add(o.sxt.value());
    }

    pub fn rho_tx(&self) -> f64 {
        let n = self.n_tx as f64;
        let (mx, mt) = (self.sx.value() / n, self.st.value() / n);
        // X is binary, so sum(x^2) = sum(x).
        let vx = self.sx.value() / n - mx * mx;
        let vt = self.stt.value() / n - mt * mt;
        (self.sxt.value() / n - mx * mt) / (vx * vt).sqrt()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Accumulator {
    pub replications: u64,
    pub select_high: u64,
    pub bias_observed: Running,
    pub bias_est: Running,
    pub bias_est_max: Running,
    pub z: u64,
    pub binomial: u64,
    pub z_est: Running,
    pub z_est_max: Running,
    pub binom_est: Running,
    pub binom_est_max: Running,
    pub plugin_degenerate: u64,
    /// Stage-1 outcome counts over both arms.
    pub cells: [u64; 4],
    pub tte: Option<TteAccumulator>,
}

impl Accumulator {
    pub fn merge(&mut self, o: &Self) {
        self.replications += o.replications;
        self.select_high += o.select_high;
        self.bias_observed.merge(&o.bias_observed);
        self.bias_est.merge(&o.bias_est);
        self.bias_est_max.merge(&o.bias_est_max);
        self.z += o.z;
        self.binomial += o.binomial;
        self.z_est.merge(&o.z_est);
        self.z_est_max.merge(&o.z_est_max);
        self.binom_est.merge(&o.binom_est);
        self.binom_est_max.merge(&o.binom_est_max);
        self.plugin_degenerate += o.plugin_degenerate;
        for k in 0..4 {
            self.cells[k] += o.cells[k];
        }
        if let Some(t) = &o.tte {
            self.tte.get_or_insert_with(TteAccumulator::default).merge(t);
        }
    }
}

/// Precomputed generators and constants for one study.
#[derive(Debug, Clone)]
pub struct StudyKernel {
    pub cfg: SimConfig,
    pub lattice: IntegerUtilities,
    pub rule: SelectionRule,
    pub ctx: TestContext,
    pi_low: [f64; 4],
    pi_high: [f64; 4],
    gen_low: ArmGenerator,
    gen_high: ArmGenerator,
}

impl StudyKernel {
    pub fn new(cfg: &SimConfig, lattice: IntegerUtilities) -> Result<Self> {
        let ctx = TestContext::new(cfg)?;
        let frame = ctx.tte.map(|t| t.frame);
        let gen_low = ArmGenerator::new(cfg.p_l, cfg.q_l, cfg.phi, &cfg.utilities, &lattice, frame)?;
        let gen_high = ArmGenerator::new(cfg.p_h, cfg.q_h, cfg.phi, &cfg.utilities, &lattice, frame)?;
        let pi_low = crate::outcome::joint_probs(cfg.p_l, cfg.q_l, cfg.phi)?.pi;
        let pi_high = crate::outcome::joint_probs(cfg.p_h, cfg.q_h, cfg.phi)?.pi;
        Ok(Self {
            rule: SelectionRule::new(cfg.n1, &lattice, cfg.lambda_u),
            cfg: cfg.clone(),
            lattice,
            ctx,
            pi_low,
            pi_high,
            gen_low,
            gen_high,
        })
    }

    pub fn replicate(&self, rng: &mut ChaCha8Rng, acc: &mut Accumulator) {
        if self.ctx.tte.is_some() {
            self.replicate_tte(rng, acc);
        } else {
            self.replicate_binary(rng, acc);
        }
    }

    fn replicate_binary(&self, rng: &mut ChaCha8Rng, acc: &mut Accumulator) {
        let cfg = &self.cfg;
        let low = ArmSummary::from_counts(multinomial_counts(cfg.n1, &self.pi_low, rng), &self.lattice);
        let high = ArmSummary::from_counts(multinomial_counts(cfg.n1, &self.pi_high, rng), &self.lattice);
        let s1 = run_selection(low, high, &self.rule, &cfg.utilities, cfg.plugin, None);
        let pi2 = match s1.selected {
            Arm::Low => &self.pi_low,
            Arm::High => &self.pi_high,
        };
        let c2 = multinomial_counts(cfg.n2, pi2, rng);
        let responders = s1.selected_summary().responders() + c2[0] + c2[1];
        let tests = run_tests(&self.ctx, responders, None);
        self.record_binary(&s1, responders, &tests, acc);
    }

    fn replicate_tte(&self, rng: &mut ChaCha8Rng, acc: &mut Accumulator) {
        let cfg = &self.cfg;
        let t = self.ctx.tte.expect("survival context");
        let mut low = Vec::with_capacity(cfg.n1 as usize);
        let mut high = Vec::with_capacity(cfg.n1 as usize);
        self.gen_low.fill(cfg.n1, rng, &mut low);
        self.gen_high.fill(cfg.n1, rng, &mut high);
        let s1 = run_selection(
            ArmSummary::from_records(&low),
            ArmSummary::from_records(&high),
            &self.rule,
            &cfg.utilities,
            cfg.plugin,
            Some((&low, &high, t.tau)),
        );
        let (mut pooled, gen2) = match s1.selected {
            Arm::Low => (low.clone(), &self.gen_low),
            Arm::High => (high.clone(), &self.gen_high),
        };
        gen2.fill(cfg.n2, rng, &mut pooled);
        let mut control = Vec::with_capacity(t.n_control as usize);
        fill_control(t.n_control, &t.frame, rng, &mut control);

        let responders = pooled.iter().filter(|r| r.x).count() as u64;
        let tests = run_tests(&self.ctx, responders, Some((&pooled, &control)));
        self.record_binary(&s1, responders, &tests, acc);

        let d = tests.tte.expect("survival decisions");
        let ta = acc.tte.get_or_insert_with(TteAccumulator::default);
        ta.landmark += d.landmark as u64;
        match d.exponential {
            Some(rej) => ta.exponential += rej as u64,
            None => ta.exp_indeterminate += 1,
        }
        ta.logrank += d.logrank as u64;
        ta.cox += d.cox as u64;
        ta.events.push(d.events as f64);
        for r in low.iter().chain(high.iter()) {
            let x = if r.x { 1.0 } else { 0.0 };
            ta.n_tx += 1;
            ta.sx.add(x);
            ta.st.add(r.t);
            ta.stt.add(r.t * r.t);
            ta.sxt.add(x * r.t);
        }

        let m = &s1.moments;
        let sigma = m.sigma_u();
        if sigma > 0.0 {
            let plan = TtePlan {
                lambda0: t.frame.lambda0,
                tau: t.tau,
                n1: cfg.n1,
                n2: cfg.n2,
                lambda_u: cfg.lambda_u,
                alpha: t.alpha,
                d_events: d.events as f64,
                d_total: (d.events + d.control_events) as f64,
            };
            let lb = landmark_bias(m.cov(m.ssu), sigma, cfg.n1, cfg.lambda_u, plan.w1()).unwrap_or(0.0);
            ta.landmark_est.push(landmark_type1(&plan, lb, t.s0));
            let b = mean_time_bias(m.cov(m.svu), sigma, cfg.n1, cfg.lambda_u).unwrap_or(0.0);
            ta.exp_est.push(exp_test_type1(&plan, b).type1);
            ta.cox_est.push(cox_type1(&plan, b).type1);
        }
    }

    fn record_binary(&self, s1: &Stage1, responders: u64, tests: &TestDecisions, acc: &mut Accumulator) {
        let cfg = &self.cfg;
        let plan = &self.ctx.plan;
        acc.replications += 1;
        for k in 0..4 {
            acc.cells[k] += s1.low.counts[k] + s1.high.counts[k];
        }
        let p_true = match s1.selected {
            Arm::Low => cfg.p_l,
            Arm::High => {
                acc.select_high += 1;
                cfg.p_h
            }
        };
        acc.bias_observed.push(responders as f64 / plan.n_total() as f64 - p_true);
        acc.z += tests.z as u64;
        acc.binomial += tests.binomial as u64;

        let m = &s1.moments;
        let sigma = m.sigma_u();
        if !(sigma > 0.0) {
            acc.plugin_degenerate += 1;
            return;
        }
        let moments = UtilityMoments { mu: f64::NAN, sigma2: sigma * sigma, cov_xu: m.cov(m.sxu) };
        let est = selection_bias(&moments, cfg.n1, cfg.lambda_u, None).map_or(0.0, |b| combined_bias(b, cfg.n1, cfg.n2));
        let sel = s1.selected_summary();
        let p_sel = sel.responders() as f64 / sel.n() as f64;
        let est_max = if p_sel > 0.0 && p_sel < 1.0 {
            max_bias(p_sel, cfg.n1, cfg.lambda_u, Some(sigma)).map_or(0.0, |b| combined_bias(b, cfg.n1, cfg.n2))
        } else {
            0.0
        };
        acc.bias_est.push(est);
        acc.bias_est_max.push(est_max);
        acc.z_est.push(z_test_type1(plan, est));
        acc.z_est_max.push(z_test_type1(plan, est_max));
        acc.binom_est.push(binomial_type1(plan, est).unwrap_or(f64::NAN));
        acc.binom_est_max.push(binomial_type1(plan, est_max).unwrap_or(f64::NAN));
    }
}

/// Draws Stage-1 selections only; returns true when the high dose is chosen.
pub fn select_once<R: Rng + ?Sized>(
    n: u64,
    pi_low: &[f64; 4],
    pi_high: &[f64; 4],
    lattice: &IntegerUtilities,
    rule: &SelectionRule,
    rng: &mut R,
) -> bool {
    let low = ArmSummary::from_counts(multinomial_counts(n, pi_low, rng), lattice);
    let high = ArmSummary::from_counts(multinomial_counts(n, pi_high, rng), lattice);
    rule.selects_high(low.score_sum, high.score_sum)
}
