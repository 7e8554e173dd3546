//! Patient-level data generation.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1, StandardNormal};

use crate::error::Result;
use crate::lattice::IntegerUtilities;
use crate::outcome::{joint_probs, UtilitySpec};
use crate::stats::{norm_cdf, norm_quantile, norm_sf};

/// Accrual and censoring frame for survival outcomes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalFrame {
    pub lambda0: f64,
    pub rho_c: f64,
    pub t_entry: f64,
    pub t_admin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatientRecord {
    pub x: bool,
    pub y: bool,
    pub u: f64,
    /// Lattice score of `u`.
    pub score: i64,
    /// Latent survival time.
    pub t: f64,
    pub enroll: f64,
    /// Observed time `min(t, t_admin - enroll)`.
    pub v: f64,
    pub event: bool,
}

impl PatientRecord {
    /// Outcome category index 0..4 (response/no-AE order).
    pub fn category(&self) -> usize {
        match (self.x, self.y) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        }
    }

    /// Alive and under observation at time `tau`; requires follow-up `>= tau`.
    pub fn survives(&self, tau: f64) -> bool {
        !(self.event && self.v <= tau)
    }
}

/// Precomputed sampler for one dose arm.
#[derive(Debug, Clone)]
pub struct ArmGenerator {
    x_cut: f64,
    y_given_x1: f64,
    y_given_x0: f64,
    utilities: [f64; 4],
    scores: [i64; 4],
    frame: Option<SurvivalFrame>,
    rho_tail: f64,
}

impl ArmGenerator {
    pub fn new(
        p: f64,
        q: f64,
        phi: f64,
        u: &UtilitySpec,
        lattice: &IntegerUtilities,
        frame: Option<SurvivalFrame>,
    ) -> Result<Self> {
        let m = joint_probs(p, q, phi)?;
        let rho = frame.map_or(0.0, |f| f.rho_c);
        Ok(Self {
            x_cut: norm_quantile(p),
            y_given_x1: m.pi[0] / p,
            y_given_x0: m.pi[2] / (1.0 - p),
            utilities: u.scores,
            scores: lattice.scores,
            frame,
            rho_tail: (1.0 - rho * rho).sqrt(),
        })
    }

    fn category(x: bool, y: bool) -> usize {
        match (x, y) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PatientRecord {
        let z1: f64 = StandardNormal.sample(rng);
        let x = z1 <= self.x_cut;
        let py = if x { self.y_given_x1 } else { self.y_given_x0 };
        let y = rng.gen::<f64>() < py;
        let k = Self::category(x, y);
        let mut rec = PatientRecord {
            x,
            y,
            u: self.utilities[k],
            score: self.scores[k],
            t: f64::INFINITY,
            enroll: 0.0,
            v: f64::INFINITY,
            event: false,
        };
        if let Some(f) = &self.frame {
            let w: f64 = StandardNormal.sample(rng);
            let z2 = f.rho_c * z1 + self.rho_tail * w;
            rec.t = neg_ln_cdf(z2) / f.lambda0;
            rec.enroll = rng.gen::<f64>() * f.t_entry;
            censor(&mut rec, f.t_admin);
        }
        rec
    }

    pub fn fill<R: Rng + ?Sized>(&self, n: u64, rng: &mut R, out: &mut Vec<PatientRecord>) {
        out.extend((0..n).map(|_| self.sample(rng)));
    }
}

// -ln(Phi(z)), accurate in both tails.
fn neg_ln_cdf(z: f64) -> f64 {
    if z > 0.0 {
        -(-norm_sf(z)).ln_1p()
    } else {
        -norm_cdf(z).ln()
    }
}

fn censor(rec: &mut PatientRecord, t_admin: f64) {
    let follow_up = t_admin - rec.enroll;
    rec.event = rec.t <= follow_up;
    rec.v = rec.t.min(follow_up);
}

/// `n` patients with correlated efficacy, safety and survival.
#[allow(clippy::too_many_arguments)]
pub fn gen_arm<R: Rng + ?Sized>(
    n: u64,
    p: f64,
    q: f64,
    phi: f64,
    rho_c: f64,
    lambda0: f64,
    t_entry: f64,
    t_admin: f64,
    u: &UtilitySpec,
    lattice: &IntegerUtilities,
    rng: &mut R,
) -> Result<Vec<PatientRecord>> {
    let frame = SurvivalFrame { lambda0, rho_c, t_entry, t_admin };
    let g = ArmGenerator::new(p, q, phi, u, lattice, Some(frame))?;
    let mut out = Vec::with_capacity(n as usize);
    g.fill(n, rng, &mut out);
    Ok(out)
}

/// Survival-only patients for a concurrent control arm.
pub fn fill_control<R: Rng + ?Sized>(n: u64, frame: &SurvivalFrame, rng: &mut R, out: &mut Vec<PatientRecord>) {
    for _ in 0..n {
        let e: f64 = Exp1.sample(rng);
        let mut rec = PatientRecord {
            x: false,
            y: false,
            u: 0.0,
            score: 0,
            t: e / frame.lambda0,
            enroll: rng.gen::<f64>() * frame.t_entry,
            v: 0.0,
            event: false,
        };
        censor(&mut rec, frame.t_admin);
        out.push(rec);
    }
}

/// Multinomial outcome counts for `n` patients, drawn by sequential
/// conditional binomials.
pub fn multinomial_counts<R: Rng + ?Sized>(n: u64, pi: &[f64; 4], rng: &mut R) -> [u64; 4] {
    let mut counts = [0u64; 4];
    let mut left = n;
    let mut mass = 1.0;
    for k in 0..3 {
        if left == 0 {
            break;
        }
        let prob = if mass > 0.0 { (pi[k] / mass).clamp(0.0, 1.0) } else { 0.0 };
        let c = if prob >= 1.0 {
            left
        } else if prob <= 0.0 {
            0
        } else {
            Binomial::new(left, prob).expect("probability in (0, 1)").sample(rng)
        };
        counts[k] = c;
        left -= c;
        mass -= pi[k];
    }
    counts[3] = left;
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::rationalize_utilities;
    use crate::sim::rng::replication_rng;

    #[test]
    fn marginals_and_correlation() {
        let u = UtilitySpec::new([1.0, 0.8, 0.2, 0.0]).unwrap();
        let lat = rationalize_utilities(&u, 100).unwrap();
        let mut rng = replication_rng(1, 1, 0);
        let recs = gen_arm(200_000, 0.3, 0.5, 0.2, 0.0, 0.1, 52.0, 76.0, &u, &lat, &mut rng).unwrap();
        let n = recs.len() as f64;
        let p = recs.iter().filter(|r| r.x).count() as f64 / n;
        let q = recs.iter().filter(|r| r.y).count() as f64 / n;
        let n11 = recs.iter().filter(|r| r.x && r.y).count() as f64 / n;
        let phi = (n11 - p * q) / (p * (1.0 - p) * q * (1.0 - q)).sqrt();
        assert!((p - 0.3).abs() < 4.0 * (0.21 / n).sqrt());
        assert!((q - 0.5).abs() < 4.0 * (0.25 / n).sqrt());
        assert!((phi - 0.2).abs() < 0.015);
        for r in &recs {
            assert!(r.v <= 76.0 - r.enroll + 1e-12 && r.v >= 24.0f64.min(r.t) - 1e-12);
            assert_eq!(r.event, r.t <= 76.0 - r.enroll);
            assert_eq!(r.score, lat.scores[r.category()]);
        }
    }

    #[test]
    fn counts_sum_to_n() {
        let mut rng = replication_rng(3, 0, 0);
        let pi = [0.32, 0.08, 0.48, 0.12];
        let mut tot = [0u64; 4];
        for _ in 0..2000 {
            let c = multinomial_counts(50, &pi, &mut rng);
            assert_eq!(c.iter().sum::<u64>(), 50);
            for k in 0..4 {
                tot[k] += c[k];
            }
        }
        for k in 0..4 {
            let f = tot[k] as f64 / 100_000.0;
            assert!((f - pi[k]).abs() < 0.006, "{k} {f}");
        }
        assert_eq!(multinomial_counts(10, &[0.5, 0.0, 0.0, 0.5], &mut rng)[1], 0);
    }
}
