use std::collections::BTreeMap;

use doseopt_core::lattice::{rationalize_utilities, utility_sum_pmf, DifferenceDist};
use doseopt_core::outcome::{joint_probs, phi_bounds, JointOutcomeModel, UtilitySpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn factorial(n: u64) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// All count vectors over four categories summing to `n`, with their
/// multinomial probabilities.
fn multinomial_table(n: u64, pi: &[f64; 4]) -> Vec<([u64; 4], f64)> {
    let mut out = Vec::new();
    for a in 0..=n {
        for b in 0..=n - a {
            for c in 0..=n - a - b {
                let d = n - a - b - c;
                let counts = [a, b, c, d];
                let coef = factorial(n) / counts.iter().map(|&k| factorial(k)).product::<f64>();
                let prob = coef * (0..4).map(|k| pi[k].powi(counts[k] as i32)).product::<f64>();
                out.push((counts, prob));
            }
        }
    }
    out
}

/// Distribution of the utility sum keyed by the sum in thousandths.
fn brute_force_sum(n: u64, pi: &[f64; 4], milli: &[i64; 4]) -> BTreeMap<i64, f64> {
    let mut dist = BTreeMap::new();
    for (counts, prob) in multinomial_table(n, pi) {
        let s: i64 = (0..4).map(|k| counts[k] as i64 * milli[k]).sum();
        *dist.entry(s).or_insert(0.0) += prob;
    }
    dist
}

fn random_case(rng: &mut ChaCha8Rng) -> (UtilitySpec, [i64; 4], JointOutcomeModel) {
    let mid1 = rng.gen_range(1..999);
    let mid2 = rng.gen_range(1..999);
    let milli = [1000, mid1.max(mid2), mid1.min(mid2), 0];
    let scores = milli.map(|m| m as f64 / 1000.0);
    let u = UtilitySpec::new(scores).unwrap();
    let p = rng.gen_range(0.05..0.95);
    let q = rng.gen_range(0.05..0.95);
    let (lo, hi) = phi_bounds(p, q).unwrap();
    let phi = lo + (hi - lo) * rng.gen_range(0.02..0.98);
    (u, milli, joint_probs(p, q, phi).unwrap())
}

#[test]
fn sum_pmf_matches_multinomial_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (u, milli, m) = random_case(&mut rng);
        let lattice = rationalize_utilities(&u, 1000).unwrap();
        for n in 1..=6 {
            let pmf = utility_sum_pmf(n, &m, &u).unwrap();
            let oracle = brute_force_sum(n, &m.pi, &milli);
            // Every lattice point must be the image of an enumerated sum.
            for (k, mass) in pmf.points() {
                let key = k * 1000 / lattice.scale as i64;
                assert_eq!(key * lattice.scale as i64, k * 1000, "lattice point off the thousandths grid");
                worst = worst.max((mass - oracle.get(&key).copied().unwrap_or(0.0)).abs());
            }
            for (&key, &mass) in &oracle {
                let k = key * lattice.scale as i64 / 1000;
                worst = worst.max((pmf.mass_at(k) - mass).abs());
            }
        }
    }
    assert!(worst < 1e-12, "max abs mass error {worst:e}");
}

#[test]
fn difference_tail_matches_double_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let (u, milli, m_low) = random_case(&mut rng);
        let m_high = joint_probs((m_low.p + 0.03).min(0.97), m_low.q, 0.0).unwrap();
        let n = 4;
        let low = utility_sum_pmf(n, &m_low, &u).unwrap();
        let high = utility_sum_pmf(n, &m_high, &u).unwrap();
        let dist = DifferenceDist::new(&high, &low).unwrap();
        let lat = rationalize_utilities(&u, 1000).unwrap();
        let a = brute_force_sum(n, &m_high.pi, &milli);
        let b = brute_force_sum(n, &m_low.pi, &milli);
        let scale = lat.scale as i64;
        for k in [-scale / 2, 0, 1, scale - 1] {
            let thr_milli = k * 1000 / scale;
            let oracle: f64 = a
                .iter()
                .flat_map(|(&sa, &pa)| b.iter().map(move |(&sb, &pb)| (sa - sb, pa * pb)))
                .filter(|(d, _)| *d > thr_milli)
                .map(|(_, p)| p)
                .sum();
            assert!((dist.prob_greater(k) - oracle).abs() < 1e-12);
        }
    }
}
