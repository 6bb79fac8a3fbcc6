//! Transfer forecasting for soccer players.
//!
//! The pipeline runs in a fixed order: match files are aggregated into game
//! lines ([`ingest`]), teams are rated with a four-level Elo hierarchy
//! ([`ratings`]), rolling per-90 features are blended with model priors
//! ([`features`], [`adjustments`]), grouped multi-head networks forecast 13
//! per-90 metrics for a hypothetical move ([`predictor`]), and the forecasts
//! feed shortlists, swarm context and verdicts ([`recruitment`]).
//! [`synthworld`] generates corpora from known latent parameters.

pub mod adjustments;
pub mod cli;
pub mod error;
pub mod features;
pub mod ingest;
pub mod linalg;
pub mod metadata;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod predictor;
pub mod rank;
pub mod ratings;
pub mod recruitment;
pub mod server;
pub mod synthworld;

pub use error::{Error, Result};
pub use metrics::{Metric, MetricVector, Position};
