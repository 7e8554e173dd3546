//! Utility-based two-dose optimization designs.
//!
//! Sample sizing for selecting between a low and a high dose on a four-level
//! efficacy/safety utility score, exact selection probabilities on the
//! utility lattice, selection bias and Type I error of confirmatory tests
//! that reuse Stage-1 data, and a Monte Carlo engine for the whole pathway.

pub mod bias;
pub mod design;
pub mod error;
pub mod lattice;
pub mod outcome;
pub mod sim;
pub mod stats;
pub mod tte;

pub use bias::{bias_report, BiasReport, TwoStagePlan};
pub use design::{
    optimal_design_approx, optimal_design_exact, rose_design, Binding, DesignResult, DesignScenario, ExactOptions,
    GridSpec, LambdaChoice, Method,
};
pub use error::{Error, Result};
pub use outcome::{joint_probs, phi_bounds, utility_moments, JointOutcomeModel, UtilityMoments, UtilitySpec};
pub use sim::{
    empirical_pcs, run_study, run_study_with, BinaryConfig, Estimate, PluginProtocol, RunOptions, ScenarioSummary,
    SimConfig, TteConfig, TteSummary,
};
pub use tte::{tte_bias_report, TteBiasReport, TteCovariances, TtePlan};
