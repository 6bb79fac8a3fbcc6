//! Shortlists, swarm context and Hot/Tepid/Not verdicts built on predictions.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metadata::MetadataProvider;
use crate::metrics::{Metric, MetricVector, Position};
use crate::predictor::{CohortMember, Prediction, Predictor, TransferScenario, ACTIVE_DAYS};
use crate::rank::{percentile, TieRule};

/// Importance of each metric in `[0, 1]`; unlisted metrics weigh zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<Metric, f64>", into = "BTreeMap<Metric, f64>")]
pub struct WeightProfile {
    weights: BTreeMap<Metric, f64>,
}

impl TryFrom<BTreeMap<Metric, f64>> for WeightProfile {
    type Error = Error;

    fn try_from(weights: BTreeMap<Metric, f64>) -> Result<Self> {
        WeightProfile::new(weights)
    }
}

impl From<WeightProfile> for BTreeMap<Metric, f64> {
    fn from(w: WeightProfile) -> Self {
        w.weights
    }
}

impl WeightProfile {
    pub fn new(weights: BTreeMap<Metric, f64>) -> Result<Self> {
        if let Some((m, w)) = weights.iter().find(|(_, w)| !(0.0..=1.0).contains(*w)) {
            return Err(Error::Config(format!("weight for `{m}` is {w}, outside [0, 1]")));
        }
        if weights.values().all(|&w| w == 0.0) {
            return Err(Error::AllZeroWeights);
        }
        Ok(WeightProfile { weights })
    }

    /// The winger profile: take-ons and xA 1.0, xG 0.7, crosses and
    /// penalty-area entries 0.2.
    pub fn winger() -> Self {
        use Metric::*;
        let w = [(TakeOns, 1.0), (Xa, 1.0), (Xg, 0.7), (Crosses, 0.2), (PenAreaEntries, 0.2)];
        WeightProfile::new(w.into_iter().collect()).expect("valid profile")
    }

    pub fn get(&self, m: Metric) -> f64 {
        self.weights.get(&m).copied().unwrap_or(0.0)
    }

    /// Metrics with positive weight.
    pub fn active(&self) -> impl Iterator<Item = (Metric, f64)> + '_ {
        self.weights.iter().filter(|(_, w)| **w > 0.0).map(|(m, w)| (*m, *w))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct File {
            weights: WeightProfile,
        }
        Ok(toml::from_str::<File>(text).map_err(|e| Error::Config(e.to_string()))?.weights)
    }

    pub fn to_toml(&self) -> String {
        #[derive(Serialize)]
        struct File<'a> {
            weights: &'a WeightProfile,
        }
        toml::to_string(&File { weights: self }).expect("weights serialize")
    }
}

/// Weighted mean of cohort min-max normalized values, one score per row.
/// A metric with no spread in the cohort contributes 0.5.
pub fn weighted_scores(values: &[MetricVector], weights: &[(Metric, f64)]) -> Result<Vec<f64>> {
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    if !(total > 0.0) || weights.iter().any(|(_, w)| !(*w >= 0.0)) {
        return Err(Error::AllZeroWeights);
    }
    let mut scores = vec![0.0; values.len()];
    for &(m, w) in weights {
        if w == 0.0 {
            continue;
        }
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v[m]), hi.max(v[m])));
        for (s, v) in scores.iter_mut().zip(values) {
            let norm = if hi > lo { (v[m] - lo) / (hi - lo) } else { 0.5 };
            *s += w * norm;
        }
    }
    Ok(scores.into_iter().map(|s| (s / total).clamp(0.0, 1.0)).collect())
}

pub fn score(values: &[MetricVector], w: &WeightProfile) -> Result<Vec<f64>> {
    let weights: Vec<(Metric, f64)> = w.active().collect();
    weighted_scores(values, &weights)
}

/// Candidate bounds; `None` disables a bound.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSet {
    pub max_age: Option<u32>,
    pub max_value: Option<f64>,
    /// Minutes at the requested position over the last 365 days.
    pub min_position_minutes: Option<f64>,
    /// Positions a candidate may have played most in the last 365 days.
    pub allowed_positions: Option<Vec<Position>>,
    pub allowed_leagues: Option<Vec<String>>,
    /// Ceiling on the candidate club's 0–100 Power Ranking.
    pub max_team_rating: Option<f64>,
    /// Ceiling on the candidate club's raw summed Elo.
    pub max_team_raw_rating: Option<f64>,
}

impl FilterSet {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.max_value, self.min_position_minutes, self.max_team_rating, self.max_team_raw_rating]
            .iter()
            .flatten()
            .all(|v| v.is_finite());
        if finite {
            Ok(())
        } else {
            Err(Error::Config("filter bounds must be finite".into()))
        }
    }

    pub fn accepts(&self, c: &Candidate) -> bool {
        let le = |bound: Option<f64>, v: Option<f64>| bound.is_none_or(|b| v.is_some_and(|v| v <= b));
        self.max_age.is_none_or(|b| c.age.is_some_and(|a| a <= b))
            && le(self.max_value, c.value)
            && self.min_position_minutes.is_none_or(|b| c.position_minutes >= b)
            && self.allowed_positions.as_ref().is_none_or(|p| p.contains(&c.primary_position))
            && self.allowed_leagues.as_ref().is_none_or(|l| l.contains(&c.league))
            && le(self.max_team_rating, c.team_rating)
            && le(self.max_team_raw_rating, c.team_raw_rating)
    }
}

/// Everything the filters look at for one player.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub player_id: String,
    pub name: Option<String>,
    pub team: String,
    pub league: String,
    pub age: Option<u32>,
    pub value: Option<f64>,
    pub position_minutes: f64,
    pub primary_position: Position,
    pub team_rating: Option<f64>,
    pub team_raw_rating: Option<f64>,
}

/// Players active at `position` within the last year, with filter facts.
/// Missing metadata fails any bound that needs it.
pub fn candidates(
    predictor: &Predictor,
    metadata: &dyn MetadataProvider,
    position: Position,
    date: NaiveDate,
) -> Vec<Candidate> {
    let since = date - Duration::days(ACTIVE_DAYS);
    let players = &predictor.stores.features.players;
    let mut minutes: BTreeMap<&str, BTreeMap<Position, f64>> = BTreeMap::new();
    for ((player, pos), tl) in players {
        let m: f64 = tl.epochs.iter().flat_map(|e| &e.stints).filter(|s| s.date >= since && s.date < date).map(|s| s.minutes).sum();
        minutes.entry(player).or_default().insert(*pos, m);
    }
    let snap = predictor.stores.ratings.before(date);
    let mut out = Vec::new();
    for ((player, pos), tl) in players {
        if *pos != position {
            continue;
        }
        let Some(s) = tl.as_of(date) else { continue };
        if (date - s.date).num_days() > ACTIVE_DAYS {
            continue;
        }
        let by_pos = &minutes[player.as_str()];
        let primary = by_pos
            .iter()
            .fold((position, f64::NEG_INFINITY), |best, (p, m)| if *m > best.1 { (*p, *m) } else { best })
            .0;
        let meta = metadata.get(player);
        out.push(Candidate {
            player_id: player.clone(),
            name: meta.map(|m| m.name.clone()),
            team: s.context.team.clone(),
            league: s.context.league.clone(),
            age: meta.map(|m| m.age_on(date)),
            value: meta.map(|m| m.market_value),
            position_minutes: by_pos[pos],
            primary_position: primary,
            team_rating: snap.and_then(|r| r.scores.get(&s.context.team).copied()),
            team_raw_rating: snap.and_then(|r| r.raw.get(&s.context.team).copied()),
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortlistRequest {
    pub destination_team: String,
    pub position: Position,
    pub weights: BTreeMap<Metric, f64>,
    #[serde(default)]
    pub filters: FilterSet,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Decision date; defaults to the day after the last rated match.
    #[serde(default)]
    pub date: Option<NaiveDate>,
}

fn default_k() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShortlistEntry {
    pub player_id: String,
    pub score: f64,
    pub candidate: Candidate,
    pub prediction: Prediction,
}

/// Simulates every filtered candidate at the destination, scores them
/// against each other and keeps the top `k` (ties by player id).
pub fn build_shortlist(
    predictor: &Predictor,
    metadata: &dyn MetadataProvider,
    request: &ShortlistRequest,
) -> Result<Vec<ShortlistEntry>> {
    let weights = WeightProfile::new(request.weights.clone())?;
    request.filters.validate()?;
    let date = request.date.or_else(|| predictor.stores.next_date()).ok_or(Error::NoData)?;
    let dest_league = predictor
        .stores
        .league_of(&request.destination_team, date)
        .ok_or_else(|| Error::UnknownTeam(request.destination_team.clone()))?;
    let pool: Vec<Candidate> = candidates(predictor, metadata, request.position, date)
        .into_iter()
        .filter(|c| c.team != request.destination_team && request.filters.accepts(c))
        .collect();
    if pool.is_empty() {
        return Err(Error::EmptyAfterFilters);
    }
    let cohort = predictor.cohort(&dest_league, request.position, date)?;
    let mut simulated = Vec::new();
    for c in pool {
        let scenario = predictor.move_scenario(&c.player_id, request.position, &request.destination_team, date)?;
        match predictor.predict_with(&scenario, Some(&cohort)) {
            Ok(p) => simulated.push((c, p)),
            Err(Error::MissingEntity(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    if simulated.is_empty() {
        return Err(Error::EmptyAfterFilters);
    }
    let values: Vec<MetricVector> = simulated.iter().map(|(_, p)| p.values).collect();
    let scores = score(&values, &weights)?;
    let mut entries: Vec<ShortlistEntry> = simulated
        .into_iter()
        .zip(scores)
        .map(|((candidate, prediction), score)| ShortlistEntry {
            player_id: candidate.player_id.clone(),
            score,
            candidate,
            prediction,
        })
        .collect();
    sort_entries(&mut entries);
    entries.truncate(request.k);
    Ok(entries)
}

/// Score descending, then player id ascending.
pub fn sort_entries(entries: &mut [ShortlistEntry]) {
    entries.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.player_id.cmp(&b.player_id)));
}

/// CSV with columns `score,player,team,competition,age,value`.
pub fn write_shortlist_csv<W: Write>(entries: &[ShortlistEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["score", "player", "team", "competition", "age", "value"])?;
    for e in entries {
        let c = &e.candidate;
        w.write_record([
            format!("{:.3}", e.score),
            c.name.clone().unwrap_or_else(|| c.player_id.clone()),
            c.team.clone(),
            c.league.clone(),
            c.age.map(|a| a.to_string()).unwrap_or_default(),
            c.value.map(|v| format!("{v:.0}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Highlight {
    Subject,
    Teammate,
    League,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwarmPoint {
    pub player_id: String,
    pub team: String,
    pub value: f64,
    pub highlight: Highlight,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwarmDataset {
    pub metric: Metric,
    pub league: String,
    pub position: Position,
    pub points: Vec<SwarmPoint>,
    pub subject_percentile: f64,
}

/// Places a subject value among `cohort` (the subject's own entry, if
/// present, is dropped). Teammates are cohort members at `subject_team`.
pub fn swarm_from_cohort(
    metric: Metric,
    league: &str,
    position: Position,
    subject: (&str, &str, f64),
    cohort: &[CohortMember],
) -> SwarmDataset {
    let (subject_id, subject_team, subject_value) = subject;
    let mut points = vec![SwarmPoint {
        player_id: subject_id.to_string(),
        team: subject_team.to_string(),
        value: subject_value,
        highlight: Highlight::Subject,
    }];
    let mut others = Vec::new();
    for c in cohort.iter().filter(|c| c.player != subject_id) {
        others.push(c.values[metric]);
        points.push(SwarmPoint {
            player_id: c.player.clone(),
            team: c.team.clone(),
            value: c.values[metric],
            highlight: if c.team == subject_team { Highlight::Teammate } else { Highlight::League },
        });
    }
    SwarmDataset {
        metric,
        league: league.to_string(),
        position,
        points,
        subject_percentile: percentile(subject_value, &others, TieRule::Midrank),
    }
}

/// Swarm for `league`: the subject is simulated under `scenario` (at its
/// destination when `league` is the destination league, else staying at
/// the origin); everyone else at their current club.
pub fn swarm(
    predictor: &Predictor,
    league: &str,
    position: Position,
    metric: Metric,
    scenario: &TransferScenario,
) -> Result<SwarmDataset> {
    let cohort = predictor.cohort(league, position, scenario.date)?;
    if cohort.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let (team, value) = if league == scenario.destination_league {
        (&scenario.destination_team, predictor.values(scenario)?)
    } else {
        let stay = TransferScenario {
            destination_team: scenario.origin_team.clone(),
            destination_league: scenario.origin_league.clone(),
            ..scenario.clone()
        };
        (&scenario.origin_team, predictor.values(&stay)?)
    };
    Ok(swarm_from_cohort(metric, league, position, (&scenario.player, team, value[metric]), &cohort))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Hot,
    Tepid,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerdictThresholds {
    pub hot_percentile: f64,
    pub hot_retention: f64,
    pub not_percentile: f64,
    pub not_retention: f64,
}

impl Default for VerdictThresholds {
    fn default() -> Self {
        VerdictThresholds { hot_percentile: 70.0, hot_retention: 0.85, not_percentile: 40.0, not_retention: 0.6 }
    }
}

impl VerdictThresholds {
    pub fn validate(&self) -> Result<()> {
        let ok = self.not_percentile <= self.hot_percentile
            && self.not_retention <= self.hot_retention
            && [self.hot_percentile, self.not_percentile].iter().all(|p| (0.0..=100.0).contains(p))
            && self.not_retention >= 0.0
            && self.hot_retention.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("inconsistent verdict thresholds {self:?}")))
        }
    }

    pub fn classify(&self, p: f64, r: f64) -> Verdict {
        if p < self.not_percentile || r < self.not_retention {
            Verdict::Not
        } else if p >= self.hot_percentile && r >= self.hot_retention {
            Verdict::Hot
        } else {
            Verdict::Tepid
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerdictReport {
    pub verdict: Verdict,
    /// Weighted destination-cohort percentile.
    pub percentile: f64,
    /// Weighted mean of destination / origin per metric.
    pub retention: f64,
}

/// Per-metric retention is `dest / origin`, or 1 where the origin value is 0.
pub fn verdict(
    at_destination: &Prediction,
    at_origin: &Prediction,
    w: &WeightProfile,
    thresholds: &VerdictThresholds,
) -> VerdictReport {
    let total: f64 = w.active().map(|(_, w)| w).sum();
    let mut p = 0.0;
    let mut r = 0.0;
    for (m, wm) in w.active() {
        p += wm * at_destination.percentiles[m];
        let (d, o) = (at_destination.values[m], at_origin.values[m]);
        r += wm * if o > 0.0 { d / o } else { 1.0 };
    }
    let (p, r) = (p / total, r / total);
    VerdictReport { verdict: thresholds.classify(p, r), percentile: p, retention: r }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::RagStatus;

    fn v(pairs: &[(Metric, f64)]) -> MetricVector {
        let mut x = MetricVector::ZERO;
        for &(m, val) in pairs {
            x[m] = val;
        }
        x
    }

    #[test]
    fn single_metric_is_min_max() {
        let vals = [v(&[(Metric::Xg, 0.2)]), v(&[(Metric::Xg, 0.6)]), v(&[(Metric::Xg, 0.3)])];
        let s = weighted_scores(&vals, &[(Metric::Xg, 1.0)]).unwrap();
        for (got, want) in s.iter().zip([0.0, 1.0, 0.25]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn winger_profile_by_hand() {
        use Metric::*;
        let vals = [
            v(&[(TakeOns, 2.0), (Xa, 0.10), (Xg, 0.30), (Crosses, 1.0), (PenAreaEntries, 2.0)]),
            v(&[(TakeOns, 4.0), (Xa, 0.20), (Xg, 0.10), (Crosses, 3.0), (PenAreaEntries, 1.0)]),
            v(&[(TakeOns, 3.0), (Xa, 0.30), (Xg, 0.20), (Crosses, 2.0), (PenAreaEntries, 3.0)]),
        ];
        let s = score(&vals, &WeightProfile::winger()).unwrap();
        // norms (take_ons, xa, xg, crosses, entries), weights 1, 1, 0.7, 0.2, 0.2, sum 3.1
        let hand = [
            (0.0 + 0.0 + 0.7 * 1.0 + 0.2 * 0.0 + 0.2 * 0.5) / 3.1,
            (1.0 + 0.5 + 0.7 * 0.0 + 0.2 * 1.0 + 0.2 * 0.0) / 3.1,
            (0.5 + 1.0 + 0.7 * 0.5 + 0.2 * 0.5 + 0.2 * 1.0) / 3.1,
        ];
        for (a, b) in s.iter().zip(hand) {
            assert!((a - b).abs() < 1e-12);
        }
        let halved: Vec<(Metric, f64)> = WeightProfile::winger().active().map(|(m, w)| (m, w * 0.5)).collect();
        assert_eq!(weighted_scores(&vals, &halved).unwrap(), s);
    }

    #[test]
    fn degenerate_cohort_scores_half() {
        let s = score(&[v(&[(Metric::Xg, 0.4)])], &WeightProfile::winger()).unwrap();
        assert_eq!(s, vec![0.5]);
    }

    #[test]
    fn zero_weights_rejected() {
        let w: BTreeMap<Metric, f64> = [(Metric::Xg, 0.0)].into_iter().collect();
        assert!(matches!(WeightProfile::new(w), Err(Error::AllZeroWeights)));
        let bad: BTreeMap<Metric, f64> = [(Metric::Xg, 1.5)].into_iter().collect();
        assert!(matches!(WeightProfile::new(bad), Err(Error::Config(_))));
    }

    #[test]
    fn weights_toml_round_trip() {
        let w = WeightProfile::winger();
        assert_eq!(WeightProfile::from_toml(&w.to_toml()).unwrap(), w);
        let shipped = include_str!("../data/winger_weights.toml");
        assert_eq!(WeightProfile::from_toml(shipped).unwrap(), w);
    }

    #[test]
    fn verdict_rules() {
        let t = VerdictThresholds::default();
        assert_eq!(t.classify(100.0, 1.0), Verdict::Hot);
        assert_eq!(t.classify(30.0, 1.0), Verdict::Not);
        assert_eq!(t.classify(60.0, 0.8), Verdict::Tepid);
        assert_eq!(t.classify(80.0, 0.5), Verdict::Not);
        assert_eq!(t.classify(70.0, 0.85), Verdict::Hot);
    }

    #[test]
    fn identical_predictions_at_top_are_hot() {
        let scenario = TransferScenario {
            player: "p".into(),
            position: Position::W,
            origin_team: "a".into(),
            origin_league: "l".into(),
            destination_team: "b".into(),
            destination_league: "l".into(),
            date: NaiveDate::from_ymd_opt(2020, 7, 1).unwrap(),
        };
        let p = Prediction {
            scenario,
            values: MetricVector::splat(1.0),
            baseline: MetricVector::splat(1.0),
            percentiles: MetricVector::splat(100.0),
            rag: RagStatus::Green,
            minutes: 2000.0,
            weight: 1.0,
        };
        let r = verdict(&p, &p, &WeightProfile::winger(), &VerdictThresholds::default());
        assert_eq!(r.verdict, Verdict::Hot);
        assert_eq!((r.percentile, r.retention), (100.0, 1.0));
    }

    #[test]
    fn swarm_percentiles() {
        let member = |id: &str, team: &str, x: f64| CohortMember {
            player: id.into(),
            team: team.into(),
            values: v(&[(Metric::Xg, x)]),
        };
        let cohort = [member("a", "t1", 0.1), member("b", "t2", 0.2), member("s", "t1", 9.0)];
        let d = swarm_from_cohort(Metric::Xg, "l", Position::W, ("s", "t1", 0.5), &cohort);
        assert_eq!(d.subject_percentile, 100.0);
        assert_eq!(d.points.iter().filter(|p| p.highlight == Highlight::Subject).count(), 1);
        assert_eq!(d.points.len(), 3);
        assert_eq!(d.points[1].highlight, Highlight::Teammate);
        let low = swarm_from_cohort(Metric::Xg, "l", Position::W, ("s", "t9", 0.0), &cohort[..1]);
        assert_eq!(low.subject_percentile, 0.0);
        let alone = swarm_from_cohort(Metric::Xg, "l", Position::W, ("s", "t9", 0.0), &[]);
        assert_eq!(alone.subject_percentile, 50.0);
    }
}
