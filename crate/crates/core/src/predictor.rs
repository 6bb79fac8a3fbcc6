//! Grouped multi-head forecasts of the 13 per-90 metrics after a move.
//!
//! A scenario (player, position, origin, destination, decision date) is
//! turned into a 79-value [`ModelInput`] from the feature and rating stores.
//! Metric blocks enter the networks on a log scale and each network predicts
//! the log-ratio of the future per-90 to the persistence baseline, which
//! turns the multiplicative team and ability effects into additive ones.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{Datelike, Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjustments::AdjustmentModels;
use crate::error::{Error, Result};
use crate::features::{rag_status, Context, FeatureStore, LeagueLevel, RagStatus, Stint};
use crate::metrics::{Metric, MetricVector, Position, METRIC_COUNT, POSITION_COUNT};
use crate::nn::{self, Dataset, GroupNetwork, HyperParams, Standardizer, TrainConfig};
use crate::rank::{percentile, TieRule};
use crate::ratings::RatingHistory;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetGroup {
    Shooting,
    Passing,
    Dribbling,
    Defending,
}

impl TargetGroup {
    pub const ALL: [TargetGroup; 4] =
        [TargetGroup::Shooting, TargetGroup::Passing, TargetGroup::Dribbling, TargetGroup::Defending];

    pub fn targets(self) -> &'static [Metric] {
        use Metric::*;
        match self {
            TargetGroup::Shooting => &[Shots, Xg],
            TargetGroup::Passing => {
                &[Xa, Crosses, TotalPasses, ShortPasses, LongPasses, AttThirdPasses, PenAreaEntries]
            }
            TargetGroup::Dribbling => &[TakeOns],
            TargetGroup::Defending => &[DefOwnThird, DefMidThird, DefAttThird],
        }
    }

    pub fn of(metric: Metric) -> TargetGroup {
        *TargetGroup::ALL.iter().find(|g| g.targets().contains(&metric)).expect("groups partition the metrics")
    }

    pub fn name(self) -> &'static str {
        match self {
            TargetGroup::Shooting => "shooting",
            TargetGroup::Passing => "passing",
            TargetGroup::Dribbling => "dribbling",
            TargetGroup::Defending => "defending",
        }
    }
}

/// The five metric blocks of a [`ModelInput`], in layout order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Player,
    OriginTeam,
    DestinationTeam,
    OriginTeamPosition,
    DestinationTeamPosition,
}

impl Block {
    pub const ALL: [Block; 5] = [
        Block::Player,
        Block::OriginTeam,
        Block::DestinationTeam,
        Block::OriginTeamPosition,
        Block::DestinationTeamPosition,
    ];

    pub fn offset(self) -> usize {
        self as usize * METRIC_COUNT
    }
}

pub const ONE_HOT_OFFSET: usize = 5 * METRIC_COUNT;
pub const ABILITY_OFFSET: usize = ONE_HOT_OFFSET + POSITION_COUNT;
pub const ABILITY_NAMES: [&str; 7] = [
    "origin_power_ranking",
    "destination_power_ranking",
    "origin_league_power_ranking",
    "destination_league_power_ranking",
    "origin_relative_ability",
    "destination_relative_ability",
    "relative_ability_change",
];
pub const WEIGHT_INDEX: usize = ABILITY_OFFSET + ABILITY_NAMES.len();
pub const INPUT_DIM: usize = WEIGHT_INDEX + 1;

/// Power rankings, league means, relative abilities and their change.
pub fn ability_features(origin_pr: f64, origin_league_pr: f64, dest_pr: f64, dest_league_pr: f64) -> [f64; 7] {
    let origin_rel = origin_pr - origin_league_pr;
    let dest_rel = dest_pr - dest_league_pr;
    [origin_pr, dest_pr, origin_league_pr, dest_league_pr, origin_rel, dest_rel, dest_rel - origin_rel]
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TransferScenario {
    pub player: String,
    pub position: Position,
    pub origin_team: String,
    pub origin_league: String,
    pub destination_team: String,
    pub destination_league: String,
    pub date: NaiveDate,
}

impl TransferScenario {
    pub fn is_transfer(&self) -> bool {
        self.origin_team != self.destination_team
    }

    pub fn origin(&self) -> Context {
        Context { team: self.origin_team.clone(), league: self.origin_league.clone() }
    }

    pub fn destination(&self) -> Context {
        Context { team: self.destination_team.clone(), league: self.destination_league.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInput {
    pub values: Vec<f64>,
}

impl ModelInput {
    pub fn block(&self, block: Block) -> MetricVector {
        let o = block.offset();
        MetricVector::from_metrics(|m| self.values[o + m.index()])
    }

    pub fn weight(&self) -> f64 {
        self.values[WEIGHT_INDEX]
    }

    pub fn ability(&self) -> &[f64] {
        &self.values[ABILITY_OFFSET..WEIGHT_INDEX]
    }

    pub fn relative_ability_change(&self) -> f64 {
        self.values[WEIGHT_INDEX - 1]
    }

    pub fn feature_names() -> Vec<String> {
        let blocks = ["player", "origin_team", "destination_team", "origin_team_position", "destination_team_position"];
        let mut names = Vec::with_capacity(INPUT_DIM);
        for b in blocks {
            names.extend(Metric::ALL.iter().map(|m| format!("{b}.{m}")));
        }
        names.extend(Position::ALL.iter().map(|p| format!("position.{}", p.label())));
        names.extend(ABILITY_NAMES.iter().map(|s| s.to_string()));
        names.push("player_weight".into());
        names
    }
}

/// The player's state at a decision date.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerSnapshot {
    pub blended: MetricVector,
    pub weight: f64,
    pub cum_minutes: f64,
    pub context: Option<Context>,
}

/// Read-only views the predictor assembles inputs from.
#[derive(Debug, Clone, Copy)]
pub struct Stores<'a> {
    pub features: &'a FeatureStore,
    pub ratings: &'a RatingHistory,
    pub models: &'a AdjustmentModels,
}

impl<'a> Stores<'a> {
    /// Latest player value before the decision date, or the cold-start
    /// prior for the origin context when the player has none.
    pub fn player_snapshot(&self, scenario: &TransferScenario) -> Result<PlayerSnapshot> {
        if let Some(s) = self.features.player(&scenario.player, scenario.position).and_then(|tl| tl.as_of(scenario.date)) {
            return Ok(PlayerSnapshot {
                blended: s.blended,
                weight: s.weight,
                cum_minutes: s.cum_minutes,
                context: Some(s.context.clone()),
            });
        }
        let r = self.features.player_regressors(scenario.position, None, &scenario.origin(), scenario.date, self.ratings);
        let prior = self.models.player.predict_vector(&r.x1, &r.x2, &r.x3, r.x4)?;
        Ok(PlayerSnapshot { blended: prior, weight: 0.0, cum_minutes: 0.0, context: None })
    }

    fn level_value(&self, level: LeagueLevel, team: &str, league: &str, date: NaiveDate) -> Result<MetricVector> {
        let tl = match level {
            LeagueLevel::Team => self.features.team(team),
            LeagueLevel::TeamPosition(p) => self.features.team_position(team, p),
        };
        if let Some(s) = tl.and_then(|tl| tl.as_of(date)) {
            return Ok(s.blended);
        }
        self.features
            .naive_league_expectation(level, league, date, Some(team))
            .map_err(|_| Error::MissingEntity(format!("no features for team `{team}` before {date}")))
    }

    /// Latest league of `team` known before `date`.
    pub fn league_of(&self, team: &str, date: NaiveDate) -> Option<String> {
        if let Some(s) = self.features.team(team).and_then(|tl| tl.as_of(date).or_else(|| tl.current())) {
            return Some(s.context.league.clone());
        }
        self.ratings.before(date).or(self.ratings.latest())?.league_of.get(team).cloned()
    }

    /// The day after the last rated match: the natural "now" for forecasts.
    pub fn next_date(&self) -> Option<NaiveDate> {
        self.ratings.latest().map(|s| s.date + Duration::days(1))
    }
}

pub fn baseline_predict(scenario: &TransferScenario, stores: &Stores) -> Result<MetricVector> {
    Ok(stores.player_snapshot(scenario)?.blended)
}

pub fn assemble_input(scenario: &TransferScenario, stores: &Stores) -> Result<ModelInput> {
    let date = scenario.date;
    let player = stores.player_snapshot(scenario)?;
    let pos = LeagueLevel::TeamPosition(scenario.position);
    let blocks = [
        player.blended,
        stores.level_value(LeagueLevel::Team, &scenario.origin_team, &scenario.origin_league, date)?,
        stores.level_value(LeagueLevel::Team, &scenario.destination_team, &scenario.destination_league, date)?,
        stores.level_value(pos, &scenario.origin_team, &scenario.origin_league, date)?,
        stores.level_value(pos, &scenario.destination_team, &scenario.destination_league, date)?,
    ];
    let snap = stores
        .ratings
        .before(date)
        .ok_or_else(|| Error::MissingEntity(format!("no power rankings before {date}")))?;
    let pr = |team: &str| snap.scores.get(team).copied().ok_or_else(|| Error::MissingEntity(format!("team `{team}` is unrated")));
    let mean = |league: &str| {
        snap.league_mean(league).ok_or_else(|| Error::MissingEntity(format!("league `{league}` has no rated teams")))
    };
    let ability = ability_features(
        pr(&scenario.origin_team)?,
        mean(&scenario.origin_league)?,
        pr(&scenario.destination_team)?,
        mean(&scenario.destination_league)?,
    );

    let mut values = Vec::with_capacity(INPUT_DIM);
    for b in &blocks {
        values.extend(b.iter().map(|(_, v)| v));
    }
    values.extend(scenario.position.one_hot());
    values.extend(ability);
    values.push(player.weight);
    debug_assert_eq!(values.len(), INPUT_DIM);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::MissingEntity(format!("non-finite input for {scenario:?}")));
    }
    Ok(ModelInput { values })
}

/// Which metrics of each block a group's network sees. Every group also
/// sees the position one-hot, the ability features and the player weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupInputs {
    pub shooting: Vec<Metric>,
    pub passing: Vec<Metric>,
    pub dribbling: Vec<Metric>,
    pub defending: Vec<Metric>,
}

impl Default for GroupInputs {
    fn default() -> Self {
        use Metric::*;
        let attacking = vec![Shots, Xg, Xa, Crosses, PenAreaEntries, TakeOns];
        GroupInputs {
            shooting: attacking.clone(),
            passing: vec![Xa, Crosses, TotalPasses, ShortPasses, LongPasses, AttThirdPasses, PenAreaEntries],
            dribbling: attacking,
            defending: vec![DefOwnThird, DefMidThird, DefAttThird],
        }
    }
}

impl GroupInputs {
    pub fn metrics(&self, group: TargetGroup) -> &[Metric] {
        match group {
            TargetGroup::Shooting => &self.shooting,
            TargetGroup::Passing => &self.passing,
            TargetGroup::Dribbling => &self.dribbling,
            TargetGroup::Defending => &self.defending,
        }
    }

    /// Positions in the 79-vector fed to `group`'s network.
    pub fn indices(&self, group: TargetGroup) -> Vec<usize> {
        let mut idx = Vec::new();
        for b in Block::ALL {
            idx.extend(self.metrics(group).iter().map(|m| b.offset() + m.index()));
        }
        idx.extend(ONE_HOT_OFFSET..INPUT_DIM);
        idx
    }
}

/// Log-scale encoding of metric blocks and targets. `offsets` keeps zero
/// counts finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    pub offsets: MetricVector,
}

impl Encoding {
    /// Offsets are a tenth of the mean baseline per metric, floored at 1e-3.
    pub fn fit(baselines: &[MetricVector]) -> Self {
        let n = baselines.len().max(1) as f64;
        let offsets = MetricVector::from_metrics(|m| (0.1 * baselines.iter().map(|b| b[m]).sum::<f64>() / n).max(1e-3));
        Encoding { offsets }
    }

    pub fn encode_input(&self, input: &ModelInput) -> Vec<f64> {
        let mut out = input.values.clone();
        for b in Block::ALL {
            for m in Metric::ALL {
                let i = b.offset() + m.index();
                out[i] = (out[i].max(0.0) + self.offsets[m]).ln();
            }
        }
        out
    }

    pub fn encode_target(&self, target: &MetricVector, baseline: &MetricVector) -> MetricVector {
        MetricVector::from_metrics(|m| {
            (target[m].max(0.0) + self.offsets[m]).ln() - (baseline[m].max(0.0) + self.offsets[m]).ln()
        })
    }

    pub fn decode(&self, residual: &MetricVector, baseline: &MetricVector) -> MetricVector {
        MetricVector::from_metrics(|m| {
            ((baseline[m].max(0.0) + self.offsets[m]) * residual[m].exp() - self.offsets[m]).max(0.0)
        })
    }
}

/// A network with the scalers that map its inputs and outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedGroup {
    pub net: GroupNetwork,
    pub input_scaler: Standardizer,
    pub target_scaler: Standardizer,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub validation_mse: f64,
}

impl TrainedGroup {
    /// Prediction on the original target scale.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut x = input.to_vec();
        self.input_scaler.apply(&mut x);
        let mut y = self.net.forward(&x)?;
        self.target_scaler.invert(&mut y);
        Ok(y)
    }

    /// MSE on the original target scale.
    pub fn mse(&self, data: &Dataset) -> Result<f64> {
        let mut sum = 0.0;
        for (x, y) in data.rows() {
            let p = self.predict(x)?;
            sum += p.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        Ok(sum / (data.len() * data.outputs).max(1) as f64)
    }
}

/// Standardises inputs and targets on `train`, then trains with early
/// stopping on `valid` (the training split when absent).
pub fn train_group(
    train: &Dataset,
    valid: Option<&Dataset>,
    hp: &HyperParams,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainedGroup> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let input_scaler = Standardizer::fit(&train.inputs, train.input_dim);
    let target_scaler = Standardizer::fit(&train.targets, train.outputs);
    let scale = |d: &Dataset| {
        let mut d = d.clone();
        input_scaler.apply_all(&mut d.inputs);
        target_scaler.apply_all(&mut d.targets);
        d
    };
    let train_s = scale(train);
    let valid_s = valid.map(scale);
    let out = nn::train(&train_s, valid_s.as_ref(), hp, cfg, seed)?;
    let mut group = TrainedGroup {
        net: out.net,
        input_scaler,
        target_scaler,
        initial_loss: out.initial_loss,
        final_loss: out.final_loss,
        validation_mse: 0.0,
    };
    group.validation_mse = group.mse(valid.unwrap_or(train))?;
    Ok(group)
}

/// One hyperparameter dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Range {
    Choice(Vec<f64>),
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
}

impl Range {
    pub fn fixed(v: f64) -> Self {
        Range::Choice(vec![v])
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            Range::Choice(c) => c[rng.random_range(0..c.len())],
            Range::Uniform { lo, hi } => rng.random_range(*lo..=*hi),
            Range::LogUniform { lo, hi } => rng.random_range(lo.ln()..=hi.ln()).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    pub learning_rate: Range,
    pub batch_size: Range,
    pub dropout: Range,
    pub trunk_units: Range,
    pub head_units: Range,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            learning_rate: Range::LogUniform { lo: 0.002, hi: 0.03 },
            batch_size: Range::Choice(vec![32.0, 64.0, 128.0]),
            dropout: Range::Choice(vec![0.0, 0.1, 0.2]),
            trunk_units: Range::Choice(vec![16.0, 32.0, 64.0]),
            head_units: Range::Choice(vec![8.0, 16.0, 32.0]),
        }
    }
}

impl SearchSpace {
    fn dims(&self) -> [&Range; 5] {
        [&self.learning_rate, &self.batch_size, &self.dropout, &self.trunk_units, &self.head_units]
    }

    fn params(v: [f64; 5]) -> HyperParams {
        HyperParams {
            learning_rate: v[0],
            batch_size: v[1].round().max(1.0) as usize,
            dropout: v[2],
            trunk_units: v[3].round().max(1.0) as usize,
            head_units: v[4].round().max(1.0) as usize,
        }
    }

    /// Number of distinct configurations when every dimension is discrete.
    pub fn cardinality(&self) -> Option<usize> {
        self.dims().iter().try_fold(1usize, |acc, d| match d {
            Range::Choice(c) => Some(acc.saturating_mul(c.len())),
            _ => None,
        })
    }

    /// All configurations of a discrete space, in lexicographic order.
    pub fn enumerate(&self) -> Vec<HyperParams> {
        let mut out = vec![[0.0; 5]];
        for (i, d) in self.dims().iter().enumerate() {
            let Range::Choice(c) = d else { return Vec::new() };
            out = out
                .into_iter()
                .flat_map(|v| {
                    c.iter().map(move |&x| {
                        let mut v = v;
                        v[i] = x;
                        v
                    })
                })
                .collect();
        }
        out.into_iter().map(Self::params).collect()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> HyperParams {
        let d = self.dims();
        Self::params([d[0].sample(rng), d[1].sample(rng), d[2].sample(rng), d[3].sample(rng), d[4].sample(rng)])
    }

    pub fn validate(&self) -> Result<()> {
        for d in self.dims() {
            let ok = match d {
                Range::Choice(c) => !c.is_empty() && c.iter().all(|v| v.is_finite()),
                Range::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
                Range::LogUniform { lo, hi } => *lo > 0.0 && hi.is_finite() && lo <= hi,
            };
            if !ok {
                return Err(Error::Config(format!("invalid search range {d:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: HyperParams,
    pub best_score: f64,
    pub trials: Vec<(HyperParams, f64)>,
}

/// Seeded random search; a discrete space no larger than `budget` is
/// enumerated instead. Failed trials score +∞; ties keep the earlier trial.
pub fn hyperparam_search<F>(space: &SearchSpace, budget: usize, seed: u64, mut objective: F) -> Result<SearchResult>
where
    F: FnMut(&HyperParams, u64) -> Result<f64>,
{
    if budget == 0 {
        return Err(Error::Config("search budget must be at least 1".into()));
    }
    space.validate()?;
    let candidates = match space.cardinality() {
        Some(n) if n <= budget => space.enumerate(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..budget).map(|_| space.sample(&mut rng)).collect()
        }
    };
    let mut trials = Vec::with_capacity(candidates.len());
    for (i, hp) in candidates.into_iter().enumerate() {
        let score = match hp.validate().and_then(|_| objective(&hp, seed.wrapping_add(i as u64))) {
            Ok(s) if s.is_finite() => s,
            Ok(_) | Err(Error::DivergedLoss) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        trials.push((hp, score));
    }
    let (best, best_score) = trials
        .iter()
        .fold(None::<(HyperParams, f64)>, |acc, &(hp, s)| match acc {
            Some((_, b)) if b <= s => acc,
            _ => Some((hp, s)),
        })
        .expect("budget ≥ 1");
    Ok(SearchResult { best, best_score, trials })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    /// Minutes over which a target per-90 is measured.
    pub horizon_minutes: f64,
    /// Examples dated earlier than this many days after the first match are
    /// dropped, since priors are still cold there.
    pub warmup_days: i64,
    /// Yearly decision date for players who stay (month, day).
    pub window_month: u32,
    pub window_day: u32,
    /// A transfer is only an example if the player played for the origin
    /// club within this many days.
    pub max_gap_days: i64,
    pub test_fraction: f64,
    pub validation_fraction: f64,
    pub hyper: HyperParams,
    pub search: SearchSpace,
    /// Trials per group; 0 trains `hyper` directly.
    pub search_budget: usize,
    pub train: TrainConfig,
    pub inputs: GroupInputs,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            horizon_minutes: 1000.0,
            warmup_days: 300,
            window_month: 7,
            window_day: 1,
            max_gap_days: 400,
            test_fraction: 0.2,
            validation_fraction: 0.15,
            hyper: HyperParams::default(),
            search: SearchSpace::default(),
            search_budget: 0,
            train: TrainConfig::default(),
            inputs: GroupInputs::default(),
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        let fractions_ok = (0.0..1.0).contains(&self.test_fraction) && (0.0..1.0).contains(&self.validation_fraction);
        if !(self.horizon_minutes > 0.0 && fractions_ok) {
            return Err(Error::Config("horizon must be positive and split fractions in [0, 1)".into()));
        }
        if NaiveDate::from_ymd_opt(2000, self.window_month, self.window_day).is_none() {
            return Err(Error::Config("invalid window date".into()));
        }
        self.hyper.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub scenario: TransferScenario,
    pub input: ModelInput,
    pub target: MetricVector,
    pub is_transfer: bool,
}

impl TrainingExample {
    pub fn baseline(&self) -> MetricVector {
        self.input.block(Block::Player)
    }
}

/// Per-90 over the first `horizon` minutes of `stints`, pro-rating the last
/// game; `None` if fewer minutes were played.
pub fn horizon_per90(stints: &[Stint], horizon: f64) -> Option<MetricVector> {
    let mut covered = 0.0;
    let mut sum = MetricVector::ZERO;
    for s in stints {
        let take = (horizon - covered).min(s.minutes);
        sum += s.metrics.scale(take / s.minutes);
        covered += take;
        if covered >= horizon {
            return Some(sum.scale(90.0 / horizon));
        }
    }
    None
}

/// Transfers (a new epoch at a new club) and yearly stay-put decisions
/// within an epoch, each with an observed target horizon.
pub fn build_examples(stores: &Stores, cfg: &PredictorConfig) -> Result<Vec<TrainingExample>> {
    cfg.validate()?;
    let players = &stores.features.players;
    let Some(first) = players.values().filter_map(|tl| tl.epochs.first()).map(|e| e.opened).min() else {
        return Ok(Vec::new());
    };
    let last = players.values().filter_map(|tl| tl.last_date()).max().unwrap_or(first);
    let start = first + Duration::days(cfg.warmup_days);
    let windows: Vec<NaiveDate> = (first.year()..=last.year())
        .filter_map(|y| NaiveDate::from_ymd_opt(y, cfg.window_month, cfg.window_day))
        .filter(|d| *d >= start)
        .collect();

    let mut out = Vec::new();
    let mut push = |scenario: TransferScenario, target: MetricVector| -> Result<()> {
        match assemble_input(&scenario, stores) {
            Ok(input) => {
                let is_transfer = scenario.is_transfer();
                out.push(TrainingExample { scenario, input, target, is_transfer });
                Ok(())
            }
            Err(Error::MissingEntity(_)) => Ok(()),
            Err(e) => Err(e),
        }
    };
    for ((player, position), tl) in players {
        for (k, epoch) in tl.epochs.iter().enumerate() {
            let ctx = &epoch.context;
            if k > 0 && epoch.opened >= start {
                let prev = &tl.epochs[k - 1];
                let recent = prev.samples.last().is_some_and(|s| (epoch.opened - s.date).num_days() <= cfg.max_gap_days);
                if prev.context.team != ctx.team && recent {
                    if let Some(target) = horizon_per90(&epoch.stints, cfg.horizon_minutes) {
                        push(
                            TransferScenario {
                                player: player.clone(),
                                position: *position,
                                origin_team: prev.context.team.clone(),
                                origin_league: prev.context.league.clone(),
                                destination_team: ctx.team.clone(),
                                destination_league: ctx.league.clone(),
                                date: epoch.opened,
                            },
                            target,
                        )?;
                    }
                }
            }
            for &d in &windows {
                let after = epoch.stints.partition_point(|s| s.date < d);
                if after == 0 || after == epoch.stints.len() {
                    continue;
                }
                if let Some(target) = horizon_per90(&epoch.stints[after..], cfg.horizon_minutes) {
                    push(
                        TransferScenario {
                            player: player.clone(),
                            position: *position,
                            origin_team: ctx.team.clone(),
                            origin_league: ctx.league.clone(),
                            destination_team: ctx.team.clone(),
                            destination_league: ctx.league.clone(),
                            date: d,
                        },
                        target,
                    )?;
                }
            }
        }
    }
    Ok(out)
}

/// Seeded shuffle split into (train, test) index lists, each sorted.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64) * test_fraction).round() as usize;
    let (mut test, mut train) = (idx[..n_test].to_vec(), idx[n_test..].to_vec());
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupModel {
    pub group: TargetGroup,
    pub input_indices: Vec<usize>,
    pub hyper: HyperParams,
    pub trained: TrainedGroup,
}

/// The four group networks plus the encoding they were trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferModel {
    pub schema_version: u32,
    pub seed: u64,
    pub encoding: Encoding,
    pub groups: Vec<GroupModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupFitSummary {
    pub group: TargetGroup,
    pub hyper: HyperParams,
    pub trials: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub validation_mse: f64,
}

fn group_dataset(
    examples: &[&TrainingExample],
    encoded: &[Vec<f64>],
    residuals: &[MetricVector],
    idx: &[usize],
    group: TargetGroup,
) -> Dataset {
    let targets = group.targets();
    let mut d = Dataset::new(idx.len(), targets.len());
    let mut x = vec![0.0; idx.len()];
    for (i, _) in examples.iter().enumerate() {
        for (slot, &j) in x.iter_mut().zip(idx) {
            *slot = encoded[i][j];
        }
        let y: Vec<f64> = targets.iter().map(|&m| residuals[i][m]).collect();
        d.push(&x, &y);
    }
    d
}

impl TransferModel {
    /// Trains the four groups in parallel on `examples` (the training
    /// split); a seeded slice of them is held out for early stopping.
    pub fn fit(examples: &[TrainingExample], cfg: &PredictorConfig, seed: u64) -> Result<(Self, Vec<GroupFitSummary>)> {
        cfg.validate()?;
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let baselines: Vec<MetricVector> = examples.iter().map(|e| e.baseline()).collect();
        let encoding = Encoding::fit(&baselines);
        let encoded: Vec<Vec<f64>> = examples.iter().map(|e| encoding.encode_input(&e.input)).collect();
        let residuals: Vec<MetricVector> =
            examples.iter().map(|e| encoding.encode_target(&e.target, &e.baseline())).collect();
        let (fit_idx, valid_idx) = split_indices(examples.len(), cfg.validation_fraction, seed ^ 0x5eed);

        let results: Vec<Result<(GroupModel, GroupFitSummary)>> = std::thread::scope(|scope| {
            let handles: Vec<_> = TargetGroup::ALL
                .iter()
                .enumerate()
                .map(|(g, &group)| {
                    let (encoded, residuals, fit_idx, valid_idx) = (&encoded, &residuals, &fit_idx, &valid_idx);
                    scope.spawn(move || {
                        let input_indices = cfg.inputs.indices(group);
                        let subset = |rows: &[usize]| {
                            let ex: Vec<&TrainingExample> = rows.iter().map(|&i| &examples[i]).collect();
                            let enc: Vec<Vec<f64>> = rows.iter().map(|&i| encoded[i].clone()).collect();
                            let res: Vec<MetricVector> = rows.iter().map(|&i| residuals[i]).collect();
                            group_dataset(&ex, &enc, &res, &input_indices, group)
                        };
                        let train = subset(fit_idx);
                        let valid = (!valid_idx.is_empty()).then(|| subset(valid_idx));
                        let group_seed = seed.wrapping_mul(31).wrapping_add(g as u64 + 1);
                        let (hyper, trials) = if cfg.search_budget > 0 {
                            let r = hyperparam_search(&cfg.search, cfg.search_budget, group_seed, |hp, s| {
                                Ok(train_group(&train, valid.as_ref(), hp, &cfg.train, s)?.validation_mse)
                            })?;
                            (r.best, r.trials.len())
                        } else {
                            (cfg.hyper, 0)
                        };
                        let trained = train_group(&train, valid.as_ref(), &hyper, &cfg.train, group_seed)?;
                        let summary = GroupFitSummary {
                            group,
                            hyper,
                            trials,
                            initial_loss: trained.initial_loss,
                            final_loss: trained.final_loss,
                            validation_mse: trained.validation_mse,
                        };
                        Ok((GroupModel { group, input_indices, hyper, trained }, summary))
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
        });
        let mut groups = Vec::new();
        let mut summaries = Vec::new();
        for r in results {
            let (g, s) = r?;
            groups.push(g);
            summaries.push(s);
        }
        Ok((TransferModel { schema_version: SCHEMA_VERSION, seed, encoding, groups }, summaries))
    }

    fn check_fitted(&self) -> Result<()> {
        let covered: Vec<TargetGroup> = self.groups.iter().map(|g| g.group).collect();
        if covered != TargetGroup::ALL {
            return Err(Error::UnfittedModel);
        }
        Ok(())
    }

    /// Forecast per-90 values, clamped at zero.
    pub fn predict_values(&self, input: &ModelInput) -> Result<MetricVector> {
        self.check_fitted()?;
        if input.values.len() != INPUT_DIM {
            return Err(Error::ShapeMismatch { expected: INPUT_DIM, got: input.values.len() });
        }
        let encoded = self.encoding.encode_input(input);
        let mut residual = MetricVector::ZERO;
        for g in &self.groups {
            let x: Vec<f64> = g.input_indices.iter().map(|&i| encoded[i]).collect();
            let y = g.trained.predict(&x)?;
            for (&m, v) in g.group.targets().iter().zip(y) {
                residual[m] = v;
            }
        }
        Ok(self.encoding.decode(&residual, &input.block(Block::Player)))
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        let model: TransferModel = serde_json::from_reader(input)?;
        if model.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion(model.schema_version));
        }
        model.check_fitted()?;
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Transfer,
    NonTransfer,
    All,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Transfer, Split::NonTransfer, Split::All];

    pub fn name(self) -> &'static str {
        match self {
            Split::Transfer => "transfer",
            Split::NonTransfer => "non_transfer",
            Split::All => "all",
        }
    }

    fn contains(self, is_transfer: bool) -> bool {
        match self {
            Split::Transfer => is_transfer,
            Split::NonTransfer => !is_transfer,
            Split::All => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub metric: Metric,
    pub split: Split,
    pub n: usize,
    pub model_mse: f64,
    pub baseline_mse: f64,
    /// `1 − model / baseline`; 0 when the baseline error is 0.
    pub improvement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub rows: Vec<MetricRow>,
}

pub fn improvement(model_mse: f64, baseline_mse: f64) -> f64 {
    if baseline_mse > 0.0 {
        1.0 - model_mse / baseline_mse
    } else {
        0.0
    }
}

/// Scores `predictions` (aligned with `examples`) against each example's
/// target and persistence baseline.
pub fn evaluate_predictions(examples: &[TrainingExample], predictions: &[MetricVector]) -> Result<EvaluationReport> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if examples.len() != predictions.len() {
        return Err(Error::ShapeMismatch { expected: examples.len(), got: predictions.len() });
    }
    let mut rows = Vec::new();
    for split in Split::ALL {
        let chosen: Vec<usize> = (0..examples.len()).filter(|&i| split.contains(examples[i].is_transfer)).collect();
        if chosen.is_empty() {
            continue;
        }
        let n = chosen.len() as f64;
        for m in Metric::ALL {
            let (mut model, mut base) = (0.0, 0.0);
            for &i in &chosen {
                let t = examples[i].target[m];
                model += (predictions[i][m] - t).powi(2) / n;
                base += (examples[i].baseline()[m] - t).powi(2) / n;
            }
            rows.push(MetricRow {
                metric: m,
                split,
                n: chosen.len(),
                model_mse: model,
                baseline_mse: base,
                improvement: improvement(model, base),
            });
        }
    }
    Ok(EvaluationReport { rows })
}

pub fn evaluate(model: &TransferModel, examples: &[TrainingExample]) -> Result<EvaluationReport> {
    let predictions = examples.iter().map(|e| model.predict_values(&e.input)).collect::<Result<Vec<_>>>()?;
    evaluate_predictions(examples, &predictions)
}

impl EvaluationReport {
    pub fn rows_for(&self, split: Split) -> impl Iterator<Item = &MetricRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    /// Mean over metrics of the per-metric improvement.
    pub fn mean_improvement(&self, split: Split) -> Option<f64> {
        let v: Vec<f64> = self.rows_for(split).map(|r| r.improvement).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// `1 − mean model MSE / mean baseline MSE` across metrics.
    pub fn pooled_improvement(&self, split: Split) -> Option<f64> {
        let (m, b) = self.rows_for(split).fold((0.0, 0.0), |(m, b), r| (m + r.model_mse, b + r.baseline_mse));
        self.rows_for(split).next().map(|_| improvement(m, b))
    }

    /// CSV of `target,split,n,model_mse,baseline_mse,improvement_pct`, one
    /// row per metric and split, then a `mean` row per split.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["target", "split", "n", "model_mse", "baseline_mse", "improvement_pct"])?;
        for r in &self.rows {
            w.write_record([
                r.metric.name().to_string(),
                r.split.name().to_string(),
                r.n.to_string(),
                format!("{:.6}", r.model_mse),
                format!("{:.6}", r.baseline_mse),
                format!("{:.6}", 100.0 * r.improvement),
            ])?;
        }
        for split in Split::ALL {
            let rows: Vec<&MetricRow> = self.rows_for(split).collect();
            let Some(first) = rows.first() else { continue };
            let k = rows.len() as f64;
            w.write_record([
                "mean".to_string(),
                split.name().to_string(),
                first.n.to_string(),
                format!("{:.6}", rows.iter().map(|r| r.model_mse).sum::<f64>() / k),
                format!("{:.6}", rows.iter().map(|r| r.baseline_mse).sum::<f64>() / k),
                format!("{:.6}", 100.0 * self.mean_improvement(split).unwrap_or(0.0)),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub scenario: TransferScenario,
    pub values: MetricVector,
    pub baseline: MetricVector,
    /// Percentile of each value among the position's players in the
    /// destination league, each simulated at their current club.
    pub percentiles: MetricVector,
    pub rag: RagStatus,
    pub minutes: f64,
    pub weight: f64,
}

/// A simulated player in a league cohort.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortMember {
    pub player: String,
    pub team: String,
    pub values: MetricVector,
}

/// Predictions over a fixed pair of stores and a trained model.
#[derive(Debug, Clone, Copy)]
pub struct Predictor<'a> {
    pub stores: Stores<'a>,
    pub model: &'a TransferModel,
}

/// Players count as active in a league if they played within this window.
pub const ACTIVE_DAYS: i64 = 365;

impl<'a> Predictor<'a> {
    pub fn new(stores: Stores<'a>, model: &'a TransferModel) -> Self {
        Predictor { stores, model }
    }

    pub fn values(&self, scenario: &TransferScenario) -> Result<MetricVector> {
        self.model.predict_values(&assemble_input(scenario, &self.stores)?)
    }

    /// The player's current (team, league) at the position before `date`.
    pub fn current_context(&self, player: &str, position: Position, date: NaiveDate) -> Result<Context> {
        self.stores
            .features
            .player(player, position)
            .and_then(|tl| tl.as_of(date))
            .map(|s| s.context.clone())
            .ok_or_else(|| Error::MissingEntity(format!("player `{player}` has no {} record before {date}", position.label())))
    }

    /// Scenario moving `player` from their current club to `team`.
    pub fn move_scenario(&self, player: &str, position: Position, team: &str, date: NaiveDate) -> Result<TransferScenario> {
        let origin = self.current_context(player, position, date)?;
        let league = self
            .stores
            .league_of(team, date)
            .ok_or_else(|| Error::UnknownTeam(team.to_string()))?;
        Ok(TransferScenario {
            player: player.to_string(),
            position,
            origin_team: origin.team,
            origin_league: origin.league,
            destination_team: team.to_string(),
            destination_league: league,
            date,
        })
    }

    pub fn stay_scenario(&self, player: &str, position: Position, date: NaiveDate) -> Result<TransferScenario> {
        let ctx = self.current_context(player, position, date)?;
        Ok(TransferScenario {
            player: player.to_string(),
            position,
            origin_team: ctx.team.clone(),
            origin_league: ctx.league.clone(),
            destination_team: ctx.team,
            destination_league: ctx.league,
            date,
        })
    }

    /// Active players of `position` whose current club is in `league`, each
    /// simulated staying put, in player-id order.
    pub fn cohort(&self, league: &str, position: Position, date: NaiveDate) -> Result<Vec<CohortMember>> {
        let mut out = Vec::new();
        for ((player, p), tl) in &self.stores.features.players {
            if *p != position {
                continue;
            }
            let Some(s) = tl.as_of(date) else { continue };
            if s.context.league != league || (date - s.date).num_days() > ACTIVE_DAYS {
                continue;
            }
            let scenario = self.stay_scenario(player, position, date)?;
            match self.values(&scenario) {
                Ok(values) => out.push(CohortMember { player: player.clone(), team: scenario.destination_team, values }),
                Err(Error::MissingEntity(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }

    /// Forecast with destination-league percentiles against `cohort`
    /// (computed here when `None`). The subject is excluded from the cohort.
    pub fn predict_with(&self, scenario: &TransferScenario, cohort: Option<&[CohortMember]>) -> Result<Prediction> {
        let input = assemble_input(scenario, &self.stores)?;
        let values = self.model.predict_values(&input)?;
        let owned;
        let cohort = match cohort {
            Some(c) => c,
            None => {
                owned = self.cohort(&scenario.destination_league, scenario.position, scenario.date)?;
                &owned
            }
        };
        let others: Vec<&CohortMember> = cohort.iter().filter(|c| c.player != scenario.player).collect();
        let percentiles = MetricVector::from_metrics(|m| {
            let vals: Vec<f64> = others.iter().map(|c| c.values[m]).collect();
            percentile(values[m], &vals, TieRule::Lowest)
        });
        let snapshot = self.stores.player_snapshot(scenario)?;
        let cfg = &self.stores.features.config;
        Ok(Prediction {
            scenario: scenario.clone(),
            values,
            baseline: snapshot.blended,
            percentiles,
            rag: rag_status(snapshot.cum_minutes, cfg.prior_constant, cfg.red_minutes),
            minutes: snapshot.cum_minutes,
            weight: snapshot.weight,
        })
    }

    pub fn predict(&self, scenario: &TransferScenario) -> Result<Prediction> {
        self.predict_with(scenario, None)
    }
}

/// Mean of per-group summaries, handy for logs.
pub fn summarize_groups(summaries: &[GroupFitSummary]) -> BTreeMap<&'static str, f64> {
    summaries.iter().map(|s| (s.group.name(), s.validation_mse)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_partition_metrics() {
        let mut seen = Vec::new();
        for g in TargetGroup::ALL {
            seen.extend_from_slice(g.targets());
        }
        seen.sort();
        assert_eq!(seen, Metric::ALL.to_vec());
        assert_eq!(TargetGroup::of(Metric::TakeOns), TargetGroup::Dribbling);
    }

    #[test]
    fn layout_has_79_inputs() {
        assert_eq!(INPUT_DIM, 79);
        assert_eq!(ModelInput::feature_names().len(), 79);
        let idx = GroupInputs::default().indices(TargetGroup::Defending);
        assert_eq!(idx.len(), 5 * 3 + 14);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn relative_ability_change_example() {
        let a = ability_features(50.0, 55.0, 75.0, 60.0);
        assert_eq!(a[6], 20.0);
        assert_eq!(ability_features(40.0, 50.0, 40.0, 50.0)[6], 0.0);
    }

    #[test]
    fn encoding_round_trip() {
        let enc = Encoding { offsets: MetricVector::splat(0.05) };
        let base = MetricVector::from_metrics(|m| m.index() as f64 * 0.3);
        let target = MetricVector::from_metrics(|m| 1.0 + m.index() as f64);
        let back = enc.decode(&enc.encode_target(&target, &base), &base);
        assert!(back.max_abs_diff(&target) < 1e-12);
        assert_eq!(enc.decode(&MetricVector::ZERO, &base), base);
    }

    #[test]
    fn horizon_pro_rates_last_game() {
        let s = |minutes: f64, shots: f64| {
            let mut metrics = MetricVector::ZERO;
            metrics[Metric::Shots] = shots;
            Stint { date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), minutes, metrics }
        };
        let stints = vec![s(600.0, 6.0), s(600.0, 12.0)];
        let r = horizon_per90(&stints, 1000.0).unwrap();
        assert!((r[Metric::Shots] - 90.0 * (6.0 + 8.0) / 1000.0).abs() < 1e-12);
        assert!(horizon_per90(&stints[..1], 1000.0).is_none());
    }

    #[test]
    fn search_enumerates_small_discrete_spaces() {
        let space = SearchSpace {
            learning_rate: Range::Choice(vec![0.01, 0.02]),
            batch_size: Range::fixed(16.0),
            dropout: Range::Choice(vec![0.0, 0.1]),
            trunk_units: Range::fixed(8.0),
            head_units: Range::fixed(4.0),
        };
        assert_eq!(space.cardinality(), Some(4));
        let r = hyperparam_search(&space, 10, 1, |hp, _| {
            Ok(if hp.learning_rate == 0.02 && hp.dropout == 0.1 { 0.5 } else { 1.0 })
        })
        .unwrap();
        assert_eq!(r.trials.len(), 4);
        assert_eq!((r.best.learning_rate, r.best.dropout), (0.02, 0.1));

        let r = hyperparam_search(&SearchSpace::default(), 1, 3, |_, _| Ok(2.0)).unwrap();
        assert_eq!(r.trials.len(), 1);
        assert_eq!(r.best, r.trials[0].0);
        assert!(hyperparam_search(&space, 0, 1, |_, _| Ok(0.0)).is_err());
    }

    #[test]
    fn fixed_dimension_is_respected() {
        let space = SearchSpace { head_units: Range::fixed(12.0), ..SearchSpace::default() };
        let r = hyperparam_search(&space, 5, 8, |hp, _| Ok(hp.learning_rate)).unwrap();
        assert!(r.trials.iter().all(|(hp, _)| hp.head_units == 12));
    }

    #[test]
    fn evaluation_identities() {
        let ex = |target: f64, base: f64, is_transfer: bool| {
            let mut values = vec![0.0; INPUT_DIM];
            for v in &mut values[..METRIC_COUNT] {
                *v = base;
            }
            TrainingExample {
                scenario: TransferScenario {
                    player: "p".into(),
                    position: Position::W,
                    origin_team: "a".into(),
                    origin_league: "L".into(),
                    destination_team: if is_transfer { "b" } else { "a" }.into(),
                    destination_league: "L".into(),
                    date: NaiveDate::from_ymd_opt(2020, 7, 1).unwrap(),
                },
                input: ModelInput { values },
                target: MetricVector::splat(target),
                is_transfer,
            }
        };
        let examples = vec![ex(1.0, 0.5, true), ex(2.0, 1.0, false), ex(0.3, 0.4, true)];
        let baseline: Vec<MetricVector> = examples.iter().map(|e| e.baseline()).collect();
        let r = evaluate_predictions(&examples, &baseline).unwrap();
        assert!(r.rows.iter().all(|row| row.improvement == 0.0));
        let truth: Vec<MetricVector> = examples.iter().map(|e| e.target).collect();
        let r = evaluate_predictions(&examples, &truth).unwrap();
        assert!(r.rows.iter().all(|row| row.improvement == 1.0));
        assert_eq!(r.rows.len(), 3 * METRIC_COUNT);
        assert!(matches!(evaluate_predictions(&[], &[]), Err(Error::EmptyDataset)));
    }

    #[test]
    fn unfitted_model_rejects_prediction() {
        let model = TransferModel {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            encoding: Encoding { offsets: MetricVector::splat(0.01) },
            groups: Vec::new(),
        };
        let input = ModelInput { values: vec![0.0; INPUT_DIM] };
        assert!(matches!(model.predict_values(&input), Err(Error::UnfittedModel)));
    }
}
