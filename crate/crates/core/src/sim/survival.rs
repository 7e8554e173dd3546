//! Survival test statistics on right-censored data.

use std::cmp::Ordering;

/// One observation for a two-sample comparison. `group` is true for the
/// treated arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub time: f64,
    pub event: bool,
    pub group: bool,
}

/// Score-type statistics for the treated arm, `Z = (O - E) / sqrt(V)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoSampleScores {
    /// Observed minus expected events in the treated arm.
    pub o_minus_e: f64,
    /// Hypergeometric variance with tie correction (log-rank).
    pub var_logrank: f64,
    /// Breslow information at `beta = 0` (Cox score).
    pub var_breslow: f64,
}

impl TwoSampleScores {
    pub fn logrank_z(&self) -> f64 {
        z_or_zero(self.o_minus_e, self.var_logrank)
    }

    pub fn cox_score_z(&self) -> f64 {
        z_or_zero(self.o_minus_e, self.var_breslow)
    }
}

fn z_or_zero(num: f64, var: f64) -> f64 {
    if var > 0.0 {
        num / var.sqrt()
    } else {
        0.0
    }
}

/// Log-rank and Cox score quantities. Sorts `obs` in place by time; subjects
/// censored at an event time remain in that time's risk set.
pub fn two_sample_scores(obs: &mut [Observation]) -> TwoSampleScores {
    obs.sort_unstable_by(|a, b| a.time.partial_cmp(&b.time).unwrap_or(Ordering::Equal));
    let mut at_risk = obs.len() as f64;
    let mut at_risk_1 = obs.iter().filter(|o| o.group).count() as f64;
    let mut o_minus_e = 0.0;
    let mut var_logrank = 0.0;
    let mut var_breslow = 0.0;
    let mut i = 0;
    while i < obs.len() {
        let t = obs[i].time;
        let (mut d, mut d1, mut leave, mut leave1) = (0.0, 0.0, 0.0, 0.0);
        while i < obs.len() && obs[i].time == t {
            let o = obs[i];
            if o.event {
                d += 1.0;
                if o.group {
                    d1 += 1.0;
                }
            }
            leave += 1.0;
            if o.group {
                leave1 += 1.0;
            }
            i += 1;
        }
        if d > 0.0 {
            let frac = at_risk_1 / at_risk;
            let v = d * frac * (1.0 - frac);
            o_minus_e += d1 - d * frac;
            var_breslow += v;
            if at_risk > 1.0 {
                var_logrank += v * (at_risk - d) / (at_risk - 1.0);
            }
        }
        at_risk -= leave;
        at_risk_1 -= leave1;
    }
    TwoSampleScores { o_minus_e, var_logrank, var_breslow }
}

/// One-sample exponential test of `lambda = lambda0`:
/// `Z = (ln(D / sum V) - ln lambda0) sqrt(D)`. `None` when there are no events.
pub fn exponential_z(events: u64, total_time: f64, lambda0: f64) -> Option<f64> {
    if events == 0 || !(total_time > 0.0) {
        return None;
    }
    let d = events as f64;
    Some(((d / total_time).ln() - lambda0.ln()) * d.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::rng::replication_rng;
    use rand::Rng;

    #[test]
    fn no_events_gives_zero() {
        let mut obs: Vec<_> = (0..10)
            .map(|i| Observation { time: i as f64 + 1.0, event: false, group: i % 2 == 0 })
            .collect();
        let s = two_sample_scores(&mut obs);
        assert_eq!(s.o_minus_e, 0.0);
        assert_eq!(s.logrank_z(), 0.0);
        assert_eq!(s.cox_score_z(), 0.0);
    }

    #[test]
    fn exponential_at_null_rate() {
        assert_eq!(exponential_z(20, 200.0, 0.1), Some(0.0));
        assert_eq!(exponential_z(0, 200.0, 0.1), None);
        assert!(exponential_z(10, 200.0, 0.1).unwrap() < 0.0);
    }

    // Brute-force log-rank over the distinct event times, written from the
    // textbook definition with explicit risk-set scans.
    fn logrank_oracle(obs: &[Observation]) -> (f64, f64) {
        let mut times: Vec<f64> = obs.iter().filter(|o| o.event).map(|o| o.time).collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        let (mut num, mut var) = (0.0, 0.0);
        for t in times {
            let n = obs.iter().filter(|o| o.time >= t).count() as f64;
            let n1 = obs.iter().filter(|o| o.time >= t && o.group).count() as f64;
            let d = obs.iter().filter(|o| o.time == t && o.event).count() as f64;
            let d1 = obs.iter().filter(|o| o.time == t && o.event && o.group).count() as f64;
            num += d1 - d * n1 / n;
            if n > 1.0 {
                var += d * (n1 / n) * (1.0 - n1 / n) * (n - d) / (n - 1.0);
            }
        }
        (num, var)
    }

    #[test]
    fn matches_oracle_with_ties() {
        let mut rng = replication_rng(11, 0, 0);
        for _ in 0..50 {
            let mut obs: Vec<_> = (0..40)
                .map(|_| Observation {
                    time: rng.gen_range(1..15) as f64,
                    event: rng.gen_bool(0.7),
                    group: rng.gen_bool(0.5),
                })
                .collect();
            let (num, var) = logrank_oracle(&obs);
            let s = two_sample_scores(&mut obs);
            assert!((s.o_minus_e - num).abs() < 1e-10);
            assert!((s.var_logrank - var).abs() < 1e-10);
            assert!(s.var_breslow >= s.var_logrank);
        }
    }

    #[test]
    fn logrank_equals_cox_score_without_ties() {
        let mut rng = replication_rng(12, 0, 0);
        for _ in 0..100 {
            let mut obs: Vec<_> = (0..60)
                .map(|_| Observation {
                    time: rng.gen::<f64>() * 10.0,
                    event: rng.gen_bool(0.8),
                    group: rng.gen_bool(0.5),
                })
                .collect();
            let s = two_sample_scores(&mut obs);
            assert!((s.var_logrank - s.var_breslow).abs() < 1e-12);
            let crit = -1.959963984540054;
            assert_eq!(s.logrank_z() <= crit, s.cox_score_z() <= crit);
        }
    }
}
