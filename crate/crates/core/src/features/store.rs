use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;
use serde::Serialize;

use super::timeline::{Context, Epoch, FeatureTimeline, FixedPrior, TimelineKey};
use super::{blend, rag_status, RagStatus, WindowConfig};
use crate::adjustments::{median, relative_feature_value, AdjustmentModels, PlayerRow, TeamRow};
use crate::error::{Error, Result};
use crate::ingest::{CorpusLines, GameLine, MatchRecord};
use crate::metrics::{Metric, MetricVector, Position};
use crate::ratings::RatingHistory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Ratings,
    TeamFeatures,
    PlayerFeatures,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhasePlan {
    pub phase: Phase,
    pub reads: Vec<Phase>,
    pub work_items: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PipelinePlan {
    pub phases: Vec<PhasePlan>,
}

/// Ratings first, then team and team-position timelines, then players. A
/// phase only reads phases listed before it.
pub fn pipeline_order(records: &[MatchRecord]) -> PipelinePlan {
    let appearances: usize = records.iter().map(|m| m.appearances.len()).sum();
    let phases = vec![
        PhasePlan { phase: Phase::Ratings, reads: vec![], work_items: records.len() },
        PhasePlan { phase: Phase::TeamFeatures, reads: vec![Phase::Ratings], work_items: 2 * records.len() },
        PhasePlan {
            phase: Phase::PlayerFeatures,
            reads: vec![Phase::Ratings, Phase::TeamFeatures],
            work_items: appearances,
        },
    ];
    for (i, p) in phases.iter().enumerate() {
        assert!(
            p.reads.iter().all(|r| phases[..i].iter().any(|q| q.phase == *r)),
            "cyclic dependency: {:?} reads a later phase",
            p.phase
        );
    }
    PipelinePlan { phases }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeagueLevel {
    Team,
    TeamPosition(Position),
}

/// Per-90 timelines for every team, team-position and player-position.
#[derive(Debug, Clone)]
pub struct FeatureStore {
    pub config: WindowConfig,
    pub teams: BTreeMap<String, FeatureTimeline>,
    pub team_positions: BTreeMap<(String, Position), FeatureTimeline>,
    pub players: BTreeMap<(String, Position), FeatureTimeline>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlayerRegressors {
    pub x1: MetricVector,
    pub x2: MetricVector,
    pub x3: MetricVector,
    pub x4: f64,
}

fn last_blended(epoch: &Epoch, prior_constant: f64) -> MetricVector {
    let s = epoch.samples.last().expect("epochs hold at least one sample");
    blend(&epoch.prior, &s.raw, s.cum_minutes, prior_constant).0
}

fn column_median(values: &[MetricVector]) -> Option<MetricVector> {
    if values.is_empty() {
        return None;
    }
    let mut out = MetricVector::ZERO;
    for m in Metric::ALL {
        let col: Vec<f64> = values.iter().map(|v| v[m]).collect();
        out[m] = median(&col)?;
    }
    Some(out)
}

impl FeatureStore {
    pub fn empty(config: WindowConfig) -> Self {
        FeatureStore {
            config,
            teams: BTreeMap::new(),
            team_positions: BTreeMap::new(),
            players: BTreeMap::new(),
        }
    }

    /// Runs the team phase and then the player phase over a corpus.
    pub fn build(
        lines: &CorpusLines,
        ratings: &RatingHistory,
        models: &AdjustmentModels,
        config: &WindowConfig,
    ) -> Result<Self> {
        config.validate()?;
        let mut store = FeatureStore::empty(*config);
        store.build_team_phase(&lines.team, &lines.team_position, models)?;
        store.build_player_phase(&lines.player_position, ratings, models)?;
        Ok(store)
    }

    fn build_team_phase(&mut self, team: &[GameLine], team_position: &[GameLine], models: &AdjustmentModels) -> Result<()> {
        let (mut i, mut j) = (0, 0);
        while i < team.len() || j < team_position.len() {
            let date = match (team.get(i), team_position.get(j)) {
                (Some(a), Some(b)) => a.date.min(b.date),
                (Some(a), None) => a.date,
                (None, Some(b)) => b.date,
                (None, None) => unreachable!(),
            };
            while let Some(line) = team.get(i).filter(|l| l.date == date) {
                self.advance_team(line, models)?;
                i += 1;
            }
            while let Some(line) = team_position.get(j).filter(|l| l.date == date) {
                self.advance_team_position(line)?;
                j += 1;
            }
        }
        Ok(())
    }

    fn advance_team(&mut self, line: &GameLine, models: &AdjustmentModels) -> Result<()> {
        let (key, ctx) = TimelineKey::split(&line.entity_key);
        let team = ctx.team.clone();
        let opens = self.teams.get(&team).is_none_or(|tl| tl.opens_epoch(&ctx));
        let prior = if opens {
            let prev = self.teams.get(&team).and_then(|tl| tl.epochs.last());
            self.team_prior(&team, prev, &ctx, line.date, models)?
        } else {
            MetricVector::ZERO
        };
        let c = self.config.prior_constant;
        let w = self.config.team_window_minutes;
        self.teams
            .entry(team)
            .or_insert_with(|| FeatureTimeline::new(key, w, c))
            .advance(line, &mut FixedPrior(prior))
    }

    fn advance_team_position(&mut self, line: &GameLine) -> Result<()> {
        let (key, ctx) = TimelineKey::split(&line.entity_key);
        let position = line.entity_key.position().expect("team-position line");
        let id = (ctx.team.clone(), position);
        let opens = self.team_positions.get(&id).is_none_or(|tl| tl.opens_epoch(&ctx));
        let prior = if opens {
            let prev = self.team_positions.get(&id).and_then(|tl| tl.epochs.last());
            self.team_position_prior(position, prev, &ctx, line.date)
        } else {
            MetricVector::ZERO
        };
        let c = self.config.prior_constant;
        let w = self.config.team_position_window_minutes;
        self.team_positions
            .entry(id)
            .or_insert_with(|| FeatureTimeline::new(key, w, c))
            .advance(line, &mut FixedPrior(prior))
    }

    fn build_player_phase(&mut self, lines: &[GameLine], ratings: &RatingHistory, models: &AdjustmentModels) -> Result<()> {
        let c = self.config.prior_constant;
        let w = self.config.player_window_minutes;
        for line in lines {
            let (key, ctx) = TimelineKey::split(&line.entity_key);
            let TimelineKey::PlayerPosition { player, position } = &key else {
                return Err(Error::MissingEntity(format!("{key:?} is not a player-position")));
            };
            let id = (player.clone(), *position);
            let opens = self.players.get(&id).is_none_or(|tl| tl.opens_epoch(&ctx));
            let prior = if opens {
                let prev = self.players.get(&id).and_then(|tl| tl.epochs.last());
                let x = self.player_regressors(*position, prev, &ctx, line.date, ratings);
                models.player.predict_vector(&x.x1, &x.x2, &x.x3, x.x4)?
            } else {
                MetricVector::ZERO
            };
            self.players
                .entry(id)
                .or_insert_with(|| FeatureTimeline::new(key, w, c))
                .advance(line, &mut FixedPrior(prior))?;
        }
        Ok(())
    }

    fn timelines(&self, level: LeagueLevel) -> Box<dyn Iterator<Item = (&str, &FeatureTimeline)> + '_> {
        match level {
            LeagueLevel::Team => Box::new(self.teams.iter().map(|(t, tl)| (t.as_str(), tl))),
            LeagueLevel::TeamPosition(pos) => Box::new(
                self.team_positions
                    .iter()
                    .filter(move |((_, p), _)| *p == pos)
                    .map(|((t, _), tl)| (t.as_str(), tl)),
            ),
        }
    }

    /// Blended values, as of the start of `date`, of every entity at `level`
    /// whose latest context is `league`.
    pub fn league_values(&self, level: LeagueLevel, league: &str, date: NaiveDate, exclude: Option<&str>) -> Vec<MetricVector> {
        self.timelines(level)
            .filter(|(team, _)| Some(*team) != exclude)
            .filter_map(|(_, tl)| tl.as_of(date))
            .filter(|s| s.context.league == league)
            .map(|s| s.blended)
            .collect()
    }

    /// League median of blended values at `level`.
    pub fn naive_league_expectation(
        &self,
        level: LeagueLevel,
        league: &str,
        date: NaiveDate,
        exclude: Option<&str>,
    ) -> Result<MetricVector> {
        column_median(&self.league_values(level, league, date, exclude))
            .ok_or_else(|| Error::EmptyLeague(league.to_string()))
    }

    /// Naive offset `x` and relative value `z` for a team entering `ctx`.
    fn team_regressors(
        &self,
        team: &str,
        prev: &Epoch,
        ctx: &Context,
        date: NaiveDate,
    ) -> Option<(MetricVector, MetricVector)> {
        let x = self.naive_league_expectation(LeagueLevel::Team, &ctx.league, date, Some(team)).ok()?;
        let own = last_blended(prev, self.config.prior_constant);
        let old_league = self.league_values(LeagueLevel::Team, &prev.context.league, date, None);
        let mut z = MetricVector::ZERO;
        for m in Metric::ALL {
            let dist: Vec<f64> = old_league.iter().map(|v| v[m]).collect();
            z[m] = relative_feature_value(own[m], &dist);
        }
        Some((x, z))
    }

    fn team_prior(
        &self,
        team: &str,
        prev: Option<&Epoch>,
        ctx: &Context,
        date: NaiveDate,
        models: &AdjustmentModels,
    ) -> Result<MetricVector> {
        match prev {
            Some(prev) => match self.team_regressors(team, prev, ctx, date) {
                Some((x, z)) => models.team.predict_vector(&x, &z),
                None => Ok(last_blended(prev, self.config.prior_constant)),
            },
            None => Ok(self
                .naive_league_expectation(LeagueLevel::Team, &ctx.league, date, Some(team))
                .unwrap_or(MetricVector::ZERO)),
        }
    }

    fn team_position_prior(&self, position: Position, prev: Option<&Epoch>, ctx: &Context, date: NaiveDate) -> MetricVector {
        let naive = || {
            self.naive_league_expectation(LeagueLevel::TeamPosition(position), &ctx.league, date, Some(&ctx.team))
                .unwrap_or(MetricVector::ZERO)
        };
        let Some(prev) = prev else {
            return naive();
        };
        let old_position = last_blended(prev, self.config.prior_constant);
        let Some(team_tl) = self.teams.get(&ctx.team) else {
            return old_position;
        };
        let team_old = team_tl.as_of(date).filter(|s| s.context.league == prev.context.league).map(|s| s.blended);
        let team_new = team_tl.projected(date, ctx);
        let (Some(mut team_old), Some(mut team_new)) = (team_old, team_new) else {
            return old_position;
        };
        // A zero team value gives no percentage to apply; keep that metric.
        for m in Metric::ALL {
            if team_old[m] == 0.0 {
                team_old[m] = 1.0;
                team_new[m] = 1.0;
            }
        }
        let positions = BTreeMap::from([(position, old_position)]);
        crate::adjustments::adjust_team_positions(&team_old, &team_new, &positions)
            .map(|mut out| out.remove(&position).expect("same key"))
            .unwrap_or(old_position)
    }

    /// Regressors of the player prior model for a player entering `ctx`.
    pub fn player_regressors(
        &self,
        position: Position,
        prev: Option<&Epoch>,
        ctx: &Context,
        date: NaiveDate,
        ratings: &RatingHistory,
    ) -> PlayerRegressors {
        let teammates = self
            .team_positions
            .get(&(ctx.team.clone(), position))
            .and_then(|tl| tl.projected(date, ctx))
            .or_else(|| {
                self.naive_league_expectation(LeagueLevel::TeamPosition(position), &ctx.league, date, None).ok()
            })
            .unwrap_or(MetricVector::ZERO);
        let Some(prev) = prev else {
            return PlayerRegressors { x1: teammates, x2: teammates, x3: MetricVector::ZERO, x4: 0.0 };
        };
        let previous = last_blended(prev, self.config.prior_constant);
        let old_teammates = self
            .team_positions
            .get(&(prev.context.team.clone(), position))
            .and_then(|tl| tl.as_of(date))
            .map(|s| s.blended);
        let x3 = old_teammates.map(|old| teammates - old).unwrap_or(MetricVector::ZERO);
        let x4 = ratings
            .before(date)
            .and_then(|snap| {
                let new = snap.relative_ability(&ctx.team, &ctx.league)?;
                let old = snap.relative_ability(&prev.context.team, &prev.context.league)?;
                Some(new - old)
            })
            .unwrap_or(0.0);
        PlayerRegressors { x1: previous, x2: teammates, x3, x4 }
    }

    /// One team-model row per league change that later saturated.
    pub fn team_rows(&self) -> Vec<TeamRow> {
        let mut rows = Vec::new();
        for (team, tl) in &self.teams {
            for k in 1..tl.epochs.len() {
                let epoch = &tl.epochs[k];
                let Some((x, z)) = self.team_regressors(team, &tl.epochs[k - 1], &epoch.context, epoch.opened) else {
                    continue;
                };
                if let Some(target) = tl.first_saturated(k) {
                    rows.push(TeamRow { team: team.clone(), date: epoch.opened, x, z, y: target.raw });
                }
            }
        }
        rows
    }

    /// One player-model row per context change that later saturated.
    pub fn player_rows(&self, ratings: &RatingHistory) -> Vec<PlayerRow> {
        let mut rows = Vec::new();
        for ((player, position), tl) in &self.players {
            for k in 1..tl.epochs.len() {
                let epoch = &tl.epochs[k];
                let Some(target) = tl.first_saturated(k) else {
                    continue;
                };
                let r = self.player_regressors(*position, Some(&tl.epochs[k - 1]), &epoch.context, epoch.opened, ratings);
                rows.push(PlayerRow {
                    player: player.clone(),
                    position: *position,
                    date: epoch.opened,
                    x1: r.x1,
                    x2: r.x2,
                    x3: r.x3,
                    x4: r.x4,
                    y: target.raw,
                });
            }
        }
        rows
    }

    pub fn player(&self, player: &str, position: Position) -> Option<&FeatureTimeline> {
        self.players.get(&(player.to_string(), position))
    }

    pub fn team(&self, team: &str) -> Option<&FeatureTimeline> {
        self.teams.get(team)
    }

    pub fn team_position(&self, team: &str, position: Position) -> Option<&FeatureTimeline> {
        self.team_positions.get(&(team.to_string(), position))
    }

    fn all_timelines(&self) -> impl Iterator<Item = &FeatureTimeline> {
        self.teams.values().chain(self.team_positions.values()).chain(self.players.values())
    }

    /// NDJSON export; `all_samples = false` keeps the last sample of each epoch.
    pub fn write_snapshot<W: Write>(&self, mut out: W, all_samples: bool) -> Result<()> {
        #[derive(Serialize)]
        struct Row<'a> {
            entity: &'a TimelineKey,
            context: &'a Context,
            date: NaiveDate,
            epoch: usize,
            m: f64,
            w: f64,
            prior: MetricVector,
            raw: MetricVector,
            blended: MetricVector,
            rag: RagStatus,
        }
        for tl in self.all_timelines() {
            for (e, epoch) in tl.epochs.iter().enumerate() {
                let first = if all_samples { 0 } else { epoch.samples.len() - 1 };
                for s in first..epoch.samples.len() {
                    let st = tl.state(e, s);
                    let row = Row {
                        entity: &tl.key,
                        context: st.context,
                        date: st.date,
                        epoch: e,
                        m: st.cum_minutes,
                        w: st.weight,
                        prior: st.prior,
                        raw: st.raw,
                        blended: st.blended,
                        rag: rag_status(st.cum_minutes, self.config.prior_constant, self.config.red_minutes),
                    };
                    serde_json::to_writer(&mut out, &row)?;
                    out.write_all(b"\n")?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::aggregate_corpus;
    use crate::pipeline::{rate, PipelineConfig};
    use crate::synthworld::{generate, WorldConfig};

    fn built() -> (CorpusLines, FeatureStore) {
        let world = generate(&WorldConfig::small(2)).unwrap();
        let cfg = PipelineConfig::default();
        let ratings = rate(&world.records, &world.topology, &cfg).unwrap();
        let lines = aggregate_corpus(&world.records);
        let store = FeatureStore::build(&lines, &ratings, &AdjustmentModels::default(), &cfg.windows).unwrap();
        (lines, store)
    }

    #[test]
    fn phases_only_read_earlier_phases() {
        let plan = pipeline_order(&[]);
        let order: Vec<Phase> = plan.phases.iter().map(|p| p.phase).collect();
        assert_eq!(order, vec![Phase::Ratings, Phase::TeamFeatures, Phase::PlayerFeatures]);
    }

    #[test]
    fn every_line_lands_in_one_timeline() {
        let (lines, store) = built();
        let total = |tls: &mut dyn Iterator<Item = &FeatureTimeline>| -> (usize, f64) {
            tls.flat_map(|tl| &tl.epochs).flat_map(|e| &e.stints).fold((0, 0.0), |(n, m), s| (n + 1, m + s.minutes))
        };
        let sum = |ls: &[GameLine]| (ls.len(), ls.iter().map(|l| l.minutes).sum::<f64>());
        for (got, want) in [
            (total(&mut store.teams.values()), sum(&lines.team)),
            (total(&mut store.team_positions.values()), sum(&lines.team_position)),
            (total(&mut store.players.values()), sum(&lines.player_position)),
        ] {
            assert_eq!(got.0, want.0);
            assert!((got.1 - want.1).abs() < 1e-6);
        }
    }

    #[test]
    fn epochs_follow_context_changes() {
        let (_, store) = built();
        let mut moves = 0;
        for tl in store.teams.values().chain(store.players.values()) {
            for pair in tl.epochs.windows(2) {
                assert_ne!(pair[0].context, pair[1].context);
                assert!(pair[0].samples.last().unwrap().date <= pair[1].opened);
                moves += 1;
            }
        }
        assert!(moves > 0, "small world has promotions and transfers");
    }

    #[test]
    fn naive_team_prior_is_the_league_median_without_the_team() {
        let (_, store) = built();
        let mut checked = 0;
        for (team, tl) in &store.teams {
            for k in 1..tl.epochs.len() {
                let e = &tl.epochs[k];
                let Ok(x) = store.naive_league_expectation(LeagueLevel::Team, &e.context.league, e.opened, Some(team)) else {
                    continue;
                };
                assert!(e.prior.max_abs_diff(&x) < 1e-12, "{team} epoch {k}");
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn snapshot_keeps_one_row_per_epoch() {
        let (_, store) = built();
        let epochs: usize = store.all_timelines().map(|tl| tl.epochs.len()).sum();
        let samples: usize = store.all_timelines().flat_map(|tl| &tl.epochs).map(|e| e.samples.len()).sum();
        for (all, want) in [(false, epochs), (true, samples)] {
            let mut buf = Vec::new();
            store.write_snapshot(&mut buf, all).unwrap();
            assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), want);
        }
    }
}
