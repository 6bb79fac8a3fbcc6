//! Rolling per-90 features blended with model priors.
//!
//! Each entity's blended value is `X = (1 - w)·P + w·R` where `R` is the
//! rolling per-90 over the last N minutes, `P` the prior for the current
//! (team, league) context and `w = min(1, m / c)` grows with the minutes `m`
//! played in that context.

mod store;
mod timeline;

pub use store::{pipeline_order, FeatureStore, LeagueLevel, Phase, PhasePlan, PipelinePlan};
pub use timeline::{Context, Epoch, FeatureState, FeatureTimeline, FixedPrior, PriorProvider, Sample, Stint, TimelineKey};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::GameLine;
use crate::metrics::MetricVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub player_window_minutes: f64,
    pub team_position_window_minutes: f64,
    pub team_window_minutes: f64,
    pub prior_constant: f64,
    /// Below this many minutes in the current context a feature is Red.
    pub red_minutes: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            player_window_minutes: 1000.0,
            team_position_window_minutes: 3000.0,
            team_window_minutes: 3000.0,
            prior_constant: 1000.0,
            red_minutes: 500.0,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.player_window_minutes,
            self.team_position_window_minutes,
            self.team_window_minutes,
            self.prior_constant,
            self.red_minutes,
        ];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::Config("window lengths and the prior constant must be positive".into()))
        }
    }
}

/// Minutes and raw counts of one game, the unit a rolling window sums over.
pub trait MinutesAndCounts {
    fn minutes(&self) -> f64;
    fn counts(&self) -> &MetricVector;
}

impl MinutesAndCounts for GameLine {
    fn minutes(&self) -> f64 {
        self.minutes
    }

    fn counts(&self) -> &MetricVector {
        &self.metrics
    }
}

/// Per-90 rate over the newest `window_minutes` of `lines` (oldest first).
///
/// The oldest game in the window is pro-rated so the window spans exactly
/// `window_minutes` whenever that many minutes exist. Also returns the total
/// minutes across all lines.
pub fn rolling_per90<L: MinutesAndCounts>(lines: &[L], window_minutes: f64) -> Result<(MetricVector, f64)> {
    if lines.is_empty() {
        return Err(Error::NoData);
    }
    let total: f64 = lines.iter().map(|l| l.minutes()).sum();
    let mut sum = MetricVector::ZERO;
    let mut covered = 0.0;
    for l in lines.iter().rev() {
        let remaining = window_minutes - covered;
        if remaining <= 0.0 {
            break;
        }
        let minutes = l.minutes();
        if minutes <= remaining {
            sum += *l.counts();
            covered += minutes;
        } else {
            sum += l.counts().scale(remaining / minutes);
            covered = window_minutes;
        }
    }
    if covered <= 0.0 {
        return Err(Error::NoData);
    }
    Ok((sum.scale(90.0 / covered), total))
}

pub fn blend_weight(cum_minutes: f64, prior_constant: f64) -> f64 {
    (cum_minutes / prior_constant).min(1.0)
}

/// `X = (1 - w)·P + w·R` with `w = min(1, m / c)`.
pub fn blend(prior: &MetricVector, raw: &MetricVector, cum_minutes: f64, prior_constant: f64) -> (MetricVector, f64) {
    let w = blend_weight(cum_minutes, prior_constant);
    (prior.zip_with(raw, |p, r| (1.0 - w) * p + w * r), w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RagStatus {
    Red,
    Amber,
    Green,
}

/// Green once the prior is fully discarded, Red under `red_minutes`.
pub fn rag_status(cum_minutes: f64, prior_constant: f64, red_minutes: f64) -> RagStatus {
    if blend_weight(cum_minutes, prior_constant) >= 1.0 {
        RagStatus::Green
    } else if cum_minutes < red_minutes {
        RagStatus::Red
    } else {
        RagStatus::Amber
    }
}

/// RAG of a timeline at `date` (inclusive); no samples means Red.
pub fn rag(timeline: &FeatureTimeline, date: chrono::NaiveDate, cfg: &WindowConfig) -> RagStatus {
    match timeline.at(date) {
        Some(state) => rag_status(state.cum_minutes, cfg.prior_constant, cfg.red_minutes),
        None => RagStatus::Red,
    }
}
