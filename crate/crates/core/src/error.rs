use thiserror::Error;

/// Errors raised by the design, bias and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The caller violated a structural precondition (mismatched lattices,
    /// missing optional input, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A configured resource cap (sample size, lattice size, replications)
    /// would be exceeded.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// The exact search ran up to its cap without meeting both targets.
    #[error(
        "no feasible exact design with n <= {n_cap}; best PCS pair found was \
         ({best_pcs_l:.4}, {best_pcs_h:.4}) at n = {best_n}"
    )]
    NoFeasibleDesign {
        n_cap: u64,
        best_n: u64,
        best_pcs_l: f64,
        best_pcs_h: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn check_probability(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        domain(format!("{name} = {value} must lie strictly inside (0, 1)"))
    }
}
