//! Percentile ranks of one value within a cohort.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// Ties count half: `rank = #below + #equal / 2`.
    Midrank,
    /// Ties count as above: `rank = #below`.
    Lowest,
}

/// `100 · rank / n` where `others` is the rest of the cohort (so `n` is
/// cohort size − 1). An empty `others` gives 50.
pub fn percentile(value: f64, others: &[f64], rule: TieRule) -> f64 {
    if others.is_empty() {
        return 50.0;
    }
    let below = others.iter().filter(|&&o| o < value).count() as f64;
    let equal = others.iter().filter(|&&o| o == value).count() as f64;
    let rank = match rule {
        TieRule::Midrank => below + 0.5 * equal,
        TieRule::Lowest => below,
    };
    100.0 * rank / others.len() as f64
}
