//! Scalar distribution helpers shared by the sizing and bias code.
//!
//! The normal CDF is evaluated through the complementary error function so
//! that upper tails keep full relative precision. Binomial tails are summed
//! over the shorter side with Neumaier compensation.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use statrs::function::gamma::ln_gamma;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal survival function `1 - Φ(x)`.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Standard normal quantile `Φ⁻¹(p)` for `0 < p < 1`.
pub fn norm_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn ln_binom_pmf(k: u64, n: u64, p: f64) -> f64 {
    let (kf, nf) = (k as f64, n as f64);
    ln_gamma(nf + 1.0) - ln_gamma(kf + 1.0) - ln_gamma(nf - kf + 1.0)
        + kf * p.ln()
        + (nf - kf) * (-p).ln_1p()
}

/// Binomial probability mass `Pr(X = k)` for `X ~ Bin(n, p)`.
pub fn binom_pmf(k: u64, n: u64, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    ln_binom_pmf(k, n, p).exp()
}

/// Sum of the pmf over `lo..=hi` using one log-gamma evaluation and the
/// ratio recurrence for the remaining terms.
fn binom_range_sum(lo: u64, hi: u64, n: u64, p: f64) -> f64 {
    if lo > hi {
        return 0.0;
    }
    let odds = p / (1.0 - p);
    let mut acc = CompensatedSum::default();
    let mut term = binom_pmf(lo, n, p);
    if term == 0.0 {
        // Start deep in a tail that underflows; fall back to direct terms.
        for k in lo..=hi {
            acc.add(binom_pmf(k, n, p));
        }
        return acc.value();
    }
    acc.add(term);
    for k in lo..hi {
        term *= (n - k) as f64 / (k + 1) as f64 * odds;
        acc.add(term);
    }
    acc.value()
}

/// Binomial CDF `Pr(X <= k)`.
pub fn binom_cdf(k: u64, n: u64, p: f64) -> f64 {
    if k >= n {
        return 1.0;
    }
    1.0 - binom_sf(k, n, p)
}

/// Binomial upper tail `Pr(X > k)`, summed over the shorter tail.
pub fn binom_sf(k: u64, n: u64, p: f64) -> f64 {
    if k >= n {
        return 0.0;
    }
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let mean = n as f64 * p;
    if (k as f64) >= mean {
        binom_range_sum(k + 1, n, n, p)
    } else {
        (1.0 - binom_range_sum(0, k, n, p)).max(0.0)
    }
}
