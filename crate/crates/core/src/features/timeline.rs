use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{blend, rag_status, rolling_per90, MinutesAndCounts, RagStatus};
use crate::error::{Error, Result};
use crate::ingest::{EntityKey, GameLine};
use crate::metrics::{MetricVector, Position};

/// The (team, league) pair an epoch accumulates minutes in. Team-level and
/// team-position timelines use their own team id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Context {
    pub team: String,
    pub league: String,
}

/// Timeline identity: the entity without its context.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "level", rename_all = "snake_case")]
pub enum TimelineKey {
    PlayerPosition { player: String, position: Position },
    TeamPosition { team: String, position: Position },
    Team { team: String },
}

impl TimelineKey {
    pub fn split(key: &EntityKey) -> (TimelineKey, Context) {
        let context = Context { team: key.team().to_string(), league: key.league().to_string() };
        let tl = match key {
            EntityKey::PlayerPosition { player, position, .. } => {
                TimelineKey::PlayerPosition { player: player.clone(), position: *position }
            }
            EntityKey::TeamPosition { team, position, .. } => {
                TimelineKey::TeamPosition { team: team.clone(), position: *position }
            }
            EntityKey::Team { team, .. } => TimelineKey::Team { team: team.clone() },
        };
        (tl, context)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stint {
    pub date: NaiveDate,
    pub minutes: f64,
    pub metrics: MetricVector,
}

impl MinutesAndCounts for Stint {
    fn minutes(&self) -> f64 {
        self.minutes
    }

    fn counts(&self) -> &MetricVector {
        &self.metrics
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub date: NaiveDate,
    pub cum_minutes: f64,
    pub raw: MetricVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub context: Context,
    pub opened: NaiveDate,
    pub prior: MetricVector,
    pub stints: Vec<Stint>,
    pub samples: Vec<Sample>,
}

/// Supplies the prior `P` when a timeline opens a new epoch.
pub trait PriorProvider {
    fn prior(&mut self, key: &TimelineKey, previous: Option<&Epoch>, context: &Context, date: NaiveDate) -> MetricVector;
}

impl<F> PriorProvider for F
where
    F: FnMut(&TimelineKey, Option<&Epoch>, &Context, NaiveDate) -> MetricVector,
{
    fn prior(&mut self, key: &TimelineKey, previous: Option<&Epoch>, context: &Context, date: NaiveDate) -> MetricVector {
        self(key, previous, context, date)
    }
}

/// A provider that always answers with the same vector.
#[derive(Debug, Clone, Copy)]
pub struct FixedPrior(pub MetricVector);

impl PriorProvider for FixedPrior {
    fn prior(&mut self, _: &TimelineKey, _: Option<&Epoch>, _: &Context, _: NaiveDate) -> MetricVector {
        self.0
    }
}

/// A timeline value at one sample, with the blend already applied.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureState<'a> {
    pub epoch: usize,
    pub context: &'a Context,
    pub date: NaiveDate,
    pub cum_minutes: f64,
    pub weight: f64,
    pub prior: MetricVector,
    pub raw: MetricVector,
    pub blended: MetricVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTimeline {
    pub key: TimelineKey,
    pub window_minutes: f64,
    pub prior_constant: f64,
    pub epochs: Vec<Epoch>,
}

impl FeatureTimeline {
    pub fn new(key: TimelineKey, window_minutes: f64, prior_constant: f64) -> Self {
        FeatureTimeline { key, window_minutes, prior_constant, epochs: Vec::new() }
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.epochs.last().and_then(|e| e.samples.last()).map(|s| s.date)
    }

    /// True when a line in `context` would open a new epoch.
    pub fn opens_epoch(&self, context: &Context) -> bool {
        self.epochs.last().is_none_or(|e| &e.context != context)
    }

    /// Appends one game. A change of (team, league) closes the current epoch
    /// and asks `provider` for the new epoch's prior.
    pub fn advance(&mut self, line: &GameLine, provider: &mut impl PriorProvider) -> Result<()> {
        let (key, context) = TimelineKey::split(&line.entity_key);
        if key != self.key {
            return Err(Error::MissingEntity(format!("line for {key:?} fed to timeline {:?}", self.key)));
        }
        if let Some(last) = self.last_date() {
            if line.date < last {
                return Err(Error::OutOfOrderDate { last, got: line.date });
            }
        }
        if self.opens_epoch(&context) {
            let prior = provider.prior(&self.key, self.epochs.last(), &context, line.date);
            self.epochs.push(Epoch { context, opened: line.date, prior, stints: Vec::new(), samples: Vec::new() });
        }
        let epoch = self.epochs.last_mut().expect("epoch opened above");
        epoch.stints.push(Stint { date: line.date, minutes: line.minutes, metrics: line.metrics });
        let (raw, cum_minutes) = rolling_per90(&epoch.stints, self.window_minutes)?;
        epoch.samples.push(Sample { date: line.date, cum_minutes, raw });
        Ok(())
    }

    pub fn state(&self, epoch: usize, sample: usize) -> FeatureState<'_> {
        let e = &self.epochs[epoch];
        let s = &e.samples[sample];
        let (blended, weight) = blend(&e.prior, &s.raw, s.cum_minutes, self.prior_constant);
        FeatureState {
            epoch,
            context: &e.context,
            date: s.date,
            cum_minutes: s.cum_minutes,
            weight,
            prior: e.prior,
            raw: s.raw,
            blended,
        }
    }

    fn last_where(&self, keep: impl Fn(NaiveDate) -> bool) -> Option<FeatureState<'_>> {
        let e = self.epochs.partition_point(|e| e.samples.first().is_some_and(|s| keep(s.date)));
        let epoch = e.checked_sub(1)?;
        let s = self.epochs[epoch].samples.partition_point(|s| keep(s.date));
        Some(self.state(epoch, s.checked_sub(1)?))
    }

    /// Latest sample strictly before `date`.
    pub fn as_of(&self, date: NaiveDate) -> Option<FeatureState<'_>> {
        self.last_where(|d| d < date)
    }

    /// Latest sample on or before `date`.
    pub fn at(&self, date: NaiveDate) -> Option<FeatureState<'_>> {
        self.last_where(|d| d <= date)
    }

    pub fn current(&self) -> Option<FeatureState<'_>> {
        let epoch = self.epochs.len().checked_sub(1)?;
        let sample = self.epochs[epoch].samples.len().checked_sub(1)?;
        Some(self.state(epoch, sample))
    }

    /// Best value for `context` at the start of `date`: the latest earlier
    /// sample if it was in that context, else the prior of an epoch in that
    /// context opening on `date`.
    pub fn projected(&self, date: NaiveDate, context: &Context) -> Option<MetricVector> {
        if let Some(s) = self.as_of(date) {
            if s.context == context {
                return Some(s.blended);
            }
        }
        self.epochs.iter().find(|e| e.opened == date && &e.context == context).map(|e| e.prior)
    }

    /// First sample of an epoch whose blend weight reached 1.
    pub fn first_saturated(&self, epoch: usize) -> Option<FeatureState<'_>> {
        let e = self.epochs.get(epoch)?;
        let idx = e.samples.iter().position(|s| s.cum_minutes >= self.prior_constant)?;
        Some(self.state(epoch, idx))
    }

    pub fn rag_at(&self, date: NaiveDate, red_minutes: f64) -> RagStatus {
        match self.at(date) {
            Some(s) => rag_status(s.cum_minutes, self.prior_constant, red_minutes),
            None => RagStatus::Red,
        }
    }
}
