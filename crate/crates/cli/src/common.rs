use doseopt_core::sim::RunOptions;
use doseopt_core::UtilitySpec;

use crate::error::{CliError, CliResult};

pub fn parse_utilities(text: &str) -> CliResult<UtilitySpec> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(CliError::usage(format!("--utilities needs four comma-separated scores, got {text:?}")));
    }
    let mut scores = [0.0; 4];
    for (slot, part) in scores.iter_mut().zip(&parts) {
        *slot = part.parse().map_err(|_| CliError::usage(format!("utility score {part:?} is not a number")))?;
    }
    Ok(UtilitySpec::new(scores)?)
}

pub fn run_options(workers: Option<usize>) -> RunOptions {
    RunOptions { workers, ..RunOptions::default() }
}

/// Fixed-precision rendering used in every CSV cell.
pub fn fmt(x: f64, decimals: usize) -> String {
    if x.is_nan() {
        return "NA".to_string();
    }
    let s = format!("{x:.decimals$}");
    // Avoid "-0.000000".
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

pub fn fmt_utilities(u: &UtilitySpec) -> String {
    u.scores.iter().map(|s| format!("{s}")).collect::<Vec<_>>().join(", ")
}
