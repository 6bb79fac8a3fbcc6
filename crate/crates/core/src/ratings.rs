//! Four-level hierarchical Elo (continent, country, league, team) and the
//! daily 0-100 Power Ranking.
//!
//! A team's final score is the sum of its own within-league Elo and the Elo
//! of each group it belongs to. Every match moves the two team ratings; in
//! addition exactly one group level moves, the highest level at which the two
//! teams' ancestries differ. Two teams from the same league move no group.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::MatchRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EloConfig {
    pub base_team_elo: f64,
    pub base_group_elo: f64,
    pub k_team: f64,
    pub k_group: f64,
    pub home_advantage: f64,
    pub draw_score: f64,
}

impl Default for EloConfig {
    fn default() -> Self {
        EloConfig {
            base_team_elo: 1500.0,
            base_group_elo: 0.0,
            k_team: 20.0,
            k_group: 10.0,
            home_advantage: 60.0,
            draw_score: 0.5,
        }
    }
}

impl EloConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_team > 0.0 && self.k_group > 0.0) {
            return Err(Error::Config("Elo K factors must be positive".into()));
        }
        if !(self.base_team_elo.is_finite() && self.base_group_elo.is_finite() && self.home_advantage.is_finite()) {
            return Err(Error::Config("Elo base ratings must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Continent,
    Country,
    League,
    Team,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub level: Level,
    pub id: String,
}

impl NodeId {
    fn new(level: Level, id: &str) -> Self {
        NodeId { level, id: id.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EloNode {
    pub node_id: NodeId,
    pub elo: f64,
    pub last_updated: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeagueInfo {
    pub league_id: String,
    pub country: String,
    pub continent: String,
}

/// League → country → continent membership, the static part of the hierarchy.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub leagues: Vec<LeagueInfo>,
}

impl Topology {
    pub fn league(&self, league_id: &str) -> Option<&LeagueInfo> {
        self.leagues.iter().find(|l| l.league_id == league_id)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }
}

pub fn expected_score(score_a: f64, score_b: f64, a_is_home: bool, cfg: &EloConfig) -> f64 {
    let home = if a_is_home { cfg.home_advantage } else { 0.0 };
    1.0 / (1.0 + 10f64.powf(-(score_a - score_b + home) / 400.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    H,
    D,
    A,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub home: String,
    pub away: String,
    pub outcome: Outcome,
    pub date: NaiveDate,
    pub neutral: bool,
}

impl MatchResult {
    pub fn from_record(m: &MatchRecord) -> Self {
        let outcome = match m.home_goals.cmp(&m.away_goals) {
            std::cmp::Ordering::Greater => Outcome::H,
            std::cmp::Ordering::Equal => Outcome::D,
            std::cmp::Ordering::Less => Outcome::A,
        };
        MatchResult {
            home: m.home_team_id.clone(),
            away: m.away_team_id.clone(),
            outcome,
            date: m.date,
            neutral: m.neutral,
        }
    }
}

/// What one match changed. Group deltas are present only when the teams'
/// ancestries diverge above team level.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchUpdate {
    pub home_team_delta: f64,
    pub away_team_delta: f64,
    pub group: Option<GroupUpdate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupUpdate {
    pub level: Level,
    pub home_node: NodeId,
    pub away_node: NodeId,
    pub home_delta: f64,
    pub away_delta: f64,
}

#[derive(Debug, Clone)]
pub struct RatingHierarchy {
    nodes: BTreeMap<NodeId, EloNode>,
    team_league: BTreeMap<String, String>,
    topology: Topology,
    config: EloConfig,
    last_date: Option<NaiveDate>,
}

impl RatingHierarchy {
    pub fn new(topology: Topology, config: EloConfig) -> Self {
        RatingHierarchy {
            nodes: BTreeMap::new(),
            team_league: BTreeMap::new(),
            topology,
            config,
            last_date: None,
        }
    }

    pub fn config(&self) -> &EloConfig {
        &self.config
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    fn ensure_node(&mut self, level: Level, id: &str, base: f64) {
        self.nodes
            .entry(NodeId::new(level, id))
            .or_insert_with(|| EloNode { node_id: NodeId::new(level, id), elo: base, last_updated: None });
    }

    /// Adds a team (and any missing group nodes) or moves an existing team to
    /// another league. The team keeps its own Elo when it moves.
    pub fn register_team(&mut self, team: &str, league: &str) -> Result<()> {
        let info = self
            .topology
            .league(league)
            .ok_or_else(|| Error::UnknownLeague(league.to_string()))?
            .clone();
        let g = self.config.base_group_elo;
        self.ensure_node(Level::Continent, &info.continent, g);
        self.ensure_node(Level::Country, &info.country, g);
        self.ensure_node(Level::League, &info.league_id, g);
        self.ensure_node(Level::Team, team, self.config.base_team_elo);
        self.team_league.insert(team.to_string(), league.to_string());
        Ok(())
    }

    pub fn league_of(&self, team: &str) -> Option<&str> {
        self.team_league.get(team).map(String::as_str)
    }

    pub fn teams(&self) -> impl Iterator<Item = (&str, &str)> {
        self.team_league.iter().map(|(t, l)| (t.as_str(), l.as_str()))
    }

    pub fn node(&self, level: Level, id: &str) -> Option<&EloNode> {
        self.nodes.get(&NodeId::new(level, id))
    }

    pub fn set_elo(&mut self, level: Level, id: &str, elo: f64) -> Result<()> {
        let node = self
            .nodes
            .get_mut(&NodeId::new(level, id))
            .ok_or_else(|| Error::MissingEntity(format!("{level:?} node `{id}`")))?;
        node.elo = elo;
        Ok(())
    }

    /// Adds `delta` to every node of one level.
    pub fn shift_level(&mut self, level: Level, delta: f64) {
        for node in self.nodes.values_mut().filter(|n| n.node_id.level == level) {
            node.elo += delta;
        }
    }

    /// Team, league, country and continent nodes of a team, lowest first.
    pub fn ancestry(&self, team: &str) -> Result<[NodeId; 4]> {
        let league = self.team_league.get(team).ok_or_else(|| Error::UnknownTeam(team.to_string()))?;
        let info = self.topology.league(league).ok_or_else(|| Error::BrokenAncestry(team.to_string()))?;
        let ids = [
            NodeId::new(Level::Team, team),
            NodeId::new(Level::League, &info.league_id),
            NodeId::new(Level::Country, &info.country),
            NodeId::new(Level::Continent, &info.continent),
        ];
        if ids.iter().any(|id| !self.nodes.contains_key(id)) {
            return Err(Error::BrokenAncestry(team.to_string()));
        }
        Ok(ids)
    }

    pub fn final_score(&self, team: &str) -> Result<f64> {
        Ok(self.ancestry(team)?.iter().map(|id| self.nodes[id].elo).sum())
    }

    pub fn apply_match(&mut self, result: &MatchResult) -> Result<MatchUpdate> {
        if let Some(last) = self.last_date {
            if result.date < last {
                return Err(Error::OutOfOrderDate { last, got: result.date });
            }
        }
        let home = self.ancestry(&result.home)?;
        let away = self.ancestry(&result.away)?;
        let expected = expected_score(
            self.final_score(&result.home)?,
            self.final_score(&result.away)?,
            !result.neutral,
            &self.config,
        );
        let actual = match result.outcome {
            Outcome::H => 1.0,
            Outcome::D => self.config.draw_score,
            Outcome::A => 0.0,
        };
        let surprise = actual - expected;

        let team_delta = self.config.k_team * surprise;
        self.bump(&home[0], team_delta, result.date);
        self.bump(&away[0], -team_delta, result.date);

        // Highest diverging level: continent (index 3) down to league (index 1).
        let group = (1..4).rev().find(|&i| home[i] != away[i]).map(|i| {
            let delta = self.config.k_group * surprise;
            self.bump(&home[i], delta, result.date);
            self.bump(&away[i], -delta, result.date);
            GroupUpdate {
                level: home[i].level,
                home_node: home[i].clone(),
                away_node: away[i].clone(),
                home_delta: delta,
                away_delta: -delta,
            }
        });
        self.last_date = Some(result.date);
        Ok(MatchUpdate { home_team_delta: team_delta, away_team_delta: -team_delta, group })
    }

    fn bump(&mut self, id: &NodeId, delta: f64, date: NaiveDate) {
        let node = self.nodes.get_mut(id).expect("ancestry checked");
        node.elo += delta;
        node.last_updated = Some(date);
    }

    /// Min-max scales every registered team's final score to [0, 100].
    pub fn scale_daily(&self, date: NaiveDate) -> PowerRankingSnapshot {
        let raw: BTreeMap<String, f64> = self
            .team_league
            .keys()
            .filter_map(|t| self.final_score(t).ok().map(|s| (t.clone(), s)))
            .collect();
        let lo = raw.values().copied().fold(f64::INFINITY, f64::min);
        let hi = raw.values().copied().fold(f64::NEG_INFINITY, f64::max);
        let scores = raw
            .iter()
            .map(|(t, &r)| {
                // Endpoints exact: (hi - lo) / (hi - lo) can round away from 1.
                let s = if hi > lo { (100.0 * ((r - lo) / (hi - lo))).clamp(0.0, 100.0) } else { 50.0 };
                (t.clone(), s)
            })
            .collect();
        PowerRankingSnapshot { date, scores, raw, league_of: self.team_league.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRankingSnapshot {
    pub date: NaiveDate,
    pub scores: BTreeMap<String, f64>,
    pub raw: BTreeMap<String, f64>,
    /// League membership of every team on this date.
    pub league_of: BTreeMap<String, String>,
}

impl PowerRankingSnapshot {
    pub fn league_mean(&self, league: &str) -> Option<f64> {
        let (sum, n) = self
            .league_of
            .iter()
            .filter(|(_, l)| l.as_str() == league)
            .filter_map(|(t, _)| self.scores.get(t))
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    /// Power Ranking minus the mean Power Ranking of `league`.
    pub fn relative_ability(&self, team: &str, league: &str) -> Option<f64> {
        Some(self.scores.get(team)? - self.league_mean(league)?)
    }
}

/// One snapshot per match date, taken after that date's matches.
#[derive(Debug, Clone, Default)]
pub struct RatingHistory {
    pub snapshots: Vec<PowerRankingSnapshot>,
}

impl RatingHistory {
    /// Replays a date-sorted corpus. Teams are registered on first sight and
    /// moved when a match places them in a different league.
    pub fn replay(records: &[MatchRecord], topology: &Topology, cfg: &EloConfig) -> Result<(RatingHierarchy, Self)> {
        cfg.validate()?;
        let mut h = RatingHierarchy::new(topology.clone(), *cfg);
        let mut snapshots: Vec<PowerRankingSnapshot> = Vec::new();
        for (i, m) in records.iter().enumerate() {
            for (team, league) in [(&m.home_team_id, m.home_league()), (&m.away_team_id, m.away_league())] {
                if h.league_of(team) != Some(league) {
                    h.register_team(team, league)?;
                }
            }
            h.apply_match(&MatchResult::from_record(m))?;
            let day_ends = records.get(i + 1).is_none_or(|next| next.date != m.date);
            if day_ends {
                snapshots.push(h.scale_daily(m.date));
            }
        }
        Ok((h, RatingHistory { snapshots }))
    }

    /// Latest snapshot strictly before `date`.
    pub fn before(&self, date: NaiveDate) -> Option<&PowerRankingSnapshot> {
        let idx = self.snapshots.partition_point(|s| s.date < date);
        idx.checked_sub(1).map(|i| &self.snapshots[i])
    }

    pub fn latest(&self) -> Option<&PowerRankingSnapshot> {
        self.snapshots.last()
    }

    pub fn team_history(&self, team: &str) -> Vec<RatingPoint> {
        self.snapshots
            .iter()
            .filter_map(|s| {
                Some(RatingPoint { date: s.date, raw: *s.raw.get(team)?, scaled: *s.scores.get(team)? })
            })
            .collect()
    }

    /// CSV of `date,team_id,raw_final_score,scaled_score`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "team_id", "raw_final_score", "scaled_score"])?;
        for s in &self.snapshots {
            for (team, raw) in &s.raw {
                w.write_record([
                    s.date.to_string(),
                    team.clone(),
                    format!("{raw:.6}"),
                    format!("{:.6}", s.scores[team]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingPoint {
    pub date: NaiveDate,
    pub raw: f64,
    pub scaled: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn topo() -> Topology {
        let l = |id: &str, country: &str, continent: &str| LeagueInfo {
            league_id: id.into(),
            country: country.into(),
            continent: continent.into(),
        };
        Topology {
            leagues: vec![
                l("EPL", "ENG", "EUR"),
                l("CHAMP", "ENG", "EUR"),
                l("L1", "FRA", "EUR"),
                l("BRA1", "BRA", "SAM"),
            ],
        }
    }

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2019, 12, d).unwrap()
    }

    fn game(home: &str, away: &str, outcome: Outcome, d: u32) -> MatchResult {
        MatchResult { home: home.into(), away: away.into(), outcome, date: day(d), neutral: false }
    }

    fn hierarchy(cfg: EloConfig) -> RatingHierarchy {
        let mut h = RatingHierarchy::new(topo(), cfg);
        for (t, l) in [("liv", "EPL"), ("mci", "EPL"), ("wat", "CHAMP"), ("ren", "L1"), ("fla", "BRA1")] {
            h.register_team(t, l).unwrap();
        }
        h
    }

    #[test]
    fn final_score_sums_four_levels() {
        let mut h = hierarchy(EloConfig::default());
        for level in [Level::Team, Level::League, Level::Country, Level::Continent] {
            let id = match level {
                Level::Team => "liv",
                Level::League => "EPL",
                Level::Country => "ENG",
                Level::Continent => "EUR",
            };
            h.set_elo(level, id, 0.0).unwrap();
        }
        assert_eq!(h.final_score("liv").unwrap(), 0.0);
        h.set_elo(Level::Team, "liv", 1500.0).unwrap();
        h.set_elo(Level::League, "EPL", 40.0).unwrap();
        h.set_elo(Level::Country, "ENG", 25.0).unwrap();
        h.set_elo(Level::Continent, "EUR", 80.0).unwrap();
        assert_eq!(h.final_score("liv").unwrap(), 1645.0);
        h.set_elo(Level::Team, "mci", 1580.0).unwrap();
        assert_eq!(h.final_score("mci").unwrap() - h.final_score("liv").unwrap(), 80.0);
        assert!(matches!(h.final_score("nobody"), Err(Error::UnknownTeam(_))));
    }

    #[test]
    fn expected_score_values() {
        let cfg = EloConfig::default();
        assert_eq!(expected_score(1500.0, 1500.0, false, &cfg), 0.5);
        assert!((expected_score(1900.0, 1500.0, false, &cfg) - 10.0 / 11.0).abs() < 1e-12);
        let home = expected_score(1500.0, 1500.0, true, &cfg);
        assert!((home - 1.0 / (1.0 + 10f64.powf(-60.0 / 400.0))).abs() < 1e-12);
        assert!((home - 0.5855).abs() < 1e-4);
        let (a, b) = (1612.0, 1433.0);
        assert!((expected_score(a, b, false, &cfg) + expected_score(b, a, false, &cfg) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn same_league_draw_between_equals_changes_nothing() {
        let mut h = hierarchy(EloConfig::default());
        let before = h.nodes.clone();
        let mut g = game("liv", "mci", Outcome::D, 1);
        g.neutral = true;
        let up = h.apply_match(&g).unwrap();
        assert_eq!(up.home_team_delta, 0.0);
        assert!(up.group.is_none());
        assert!(h.nodes.values().all(|n| n.elo == before[&n.node_id].elo));
    }

    #[test]
    fn home_win_between_equals() {
        let cfg = EloConfig { home_advantage: 0.0, ..EloConfig::default() };
        let mut h = hierarchy(cfg);
        h.apply_match(&game("liv", "mci", Outcome::H, 1)).unwrap();
        assert_eq!(h.node(Level::Team, "liv").unwrap().elo, 1510.0);
        assert_eq!(h.node(Level::Team, "mci").unwrap().elo, 1490.0);
    }

    #[test]
    fn intercontinental_match_touches_only_team_and_continent() {
        let mut h = hierarchy(EloConfig::default());
        let before = h.nodes.clone();
        let mut g = game("liv", "fla", Outcome::H, 21);
        g.neutral = true;
        let up = h.apply_match(&g).unwrap();
        let group = up.group.unwrap();
        assert_eq!(group.level, Level::Continent);
        assert_eq!(group.home_delta + group.away_delta, 0.0);
        let changed: Vec<_> =
            h.nodes.values().filter(|n| n.elo != before[&n.node_id].elo).map(|n| n.node_id.id.as_str()).collect();
        assert_eq!(changed, ["EUR", "SAM", "fla", "liv"]);
    }

    #[test]
    fn divergence_level_is_highest_difference() {
        let mut h = hierarchy(EloConfig::default());
        let lvl = |h: &mut RatingHierarchy, a: &str, b: &str, d| {
            h.apply_match(&game(a, b, Outcome::A, d)).unwrap().group.map(|g| g.level)
        };
        assert_eq!(lvl(&mut h, "liv", "mci", 1), None);
        assert_eq!(lvl(&mut h, "liv", "wat", 2), Some(Level::League));
        assert_eq!(lvl(&mut h, "wat", "ren", 3), Some(Level::Country));
        assert_eq!(lvl(&mut h, "ren", "fla", 4), Some(Level::Continent));
    }

    #[test]
    fn rejects_out_of_order_and_unknown() {
        let mut h = hierarchy(EloConfig::default());
        h.apply_match(&game("liv", "mci", Outcome::H, 5)).unwrap();
        assert!(matches!(h.apply_match(&game("liv", "mci", Outcome::H, 4)), Err(Error::OutOfOrderDate { .. })));
        assert!(matches!(h.apply_match(&game("liv", "xxx", Outcome::H, 6)), Err(Error::UnknownTeam(_))));
        assert!(matches!(h.register_team("x", "MLS"), Err(Error::UnknownLeague(_))));
    }

    #[test]
    fn daily_scaling() {
        let mut h = hierarchy(EloConfig::default());
        let snap = h.scale_daily(day(1));
        assert!(snap.scores.values().all(|&s| s == 50.0));

        let mut h2 = RatingHierarchy::new(topo(), EloConfig::default());
        for (t, elo) in [("a", 1400.0), ("b", 1600.0), ("c", 1800.0)] {
            h2.register_team(t, "EPL").unwrap();
            h2.set_elo(Level::Team, t, elo).unwrap();
        }
        let s = h2.scale_daily(day(1));
        assert_eq!((s.scores["a"], s.scores["b"], s.scores["c"]), (0.0, 50.0, 100.0));

        h.set_elo(Level::Team, "liv", 1600.0).unwrap();
        h.set_elo(Level::Continent, "SAM", -30.0).unwrap();
        let s = h.scale_daily(day(2));
        let before = s.scores.clone();
        h.shift_level(Level::League, 250.0);
        assert_eq!(h.scale_daily(day(2)).scores, before);

        let mut single = RatingHierarchy::new(topo(), EloConfig::default());
        single.register_team("solo", "L1").unwrap();
        assert_eq!(single.scale_daily(day(1)).scores["solo"], 50.0);
    }

    #[test]
    fn snapshot_league_means() {
        let mut h = RatingHierarchy::new(topo(), EloConfig::default());
        for (t, l, elo) in [("a", "EPL", 1400.0), ("b", "EPL", 1800.0), ("c", "L1", 1600.0)] {
            h.register_team(t, l).unwrap();
            h.set_elo(Level::Team, t, elo).unwrap();
        }
        let s = h.scale_daily(day(1));
        assert_eq!(s.league_mean("EPL"), Some(50.0));
        assert_eq!(s.relative_ability("c", "EPL"), Some(0.0));
        assert_eq!(s.relative_ability("b", "EPL"), Some(50.0));
        assert_eq!(s.league_mean("BRA1"), None);
    }
}
