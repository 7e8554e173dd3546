//! Shared fixtures for the benchmarks.

use doseopt_core::sim::survival::Observation;
use doseopt_core::{DesignScenario, SimConfig, TteConfig, UtilitySpec};

/// A mid-sized sizing problem: exact search lands near n = 100 per arm.
pub fn sizing_scenario() -> DesignScenario {
    DesignScenario::from_margins(0.3, 0.5, 0.1, 0.15, 0.0, 0.8).expect("valid scenario")
}

/// Null simulation at p = 0.4, n1 = 60, n2 = 140.
pub fn null_study(replications: u64, survival: bool) -> SimConfig {
    let u = UtilitySpec::new([1.0, 0.8, 0.2, 0.0]).expect("valid utilities");
    let mut c = SimConfig::null(0.4, 0.8, 0.0, u, 60, 140);
    c.replications = replications;
    c.seed = 11;
    if survival {
        c.tte = Some(TteConfig::weekly(0.7));
    }
    c
}

/// Two groups of `n` subjects with a deterministic mix of times and censoring.
pub fn two_groups(n: usize) -> Vec<Observation> {
    (0..2 * n)
        .map(|i| {
            let x = ((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 11) as f64 / (1u64 << 53) as f64;
            Observation { time: -x.max(1e-12).ln() * 10.0, event: i % 5 != 0, group: i % 2 == 0 }
        })
        .collect()
}
