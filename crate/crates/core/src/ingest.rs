//! Match corpus parsing and per-game aggregation.
//!
//! A corpus is a list of [`MatchRecord`]s, each carrying the position stints
//! ([`Appearance`]s) played in it with raw event counts. Aggregation turns a
//! match into [`GameLine`]s at three levels: player-position, team-position
//! and team. Counts stay raw here; per-90 conversion happens in `features`.
//!
//! NDJSON schema, one match per line:
//!
//! ```text
//! {"match_id":"m1","date":"2021-08-14","league_id":"ENG1",
//!  "home_team_id":"t1","away_team_id":"t2","home_goals":2,"away_goals":0,
//!  "appearances":[{"player_id":"p1","team_id":"t1","position":"W","minutes":90.0,
//!                  "metrics":{"shots":3.0,"xg":0.4, ... all 13 names ...}}]}
//! ```
//!
//! `home_league_id`/`away_league_id` are optional and default to `league_id`;
//! they name each side's domestic league for cup ties. `neutral` (default
//! false) removes home advantage.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{Metric, MetricVector, Position};

pub const MAX_MINUTES: f64 = 120.0;
const PASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Appearance {
    pub player_id: String,
    pub team_id: String,
    pub position: Position,
    pub minutes: f64,
    pub metrics: MetricVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub match_id: String,
    pub date: NaiveDate,
    pub league_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home_league_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub away_league_id: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub neutral: bool,
    pub home_team_id: String,
    pub away_team_id: String,
    pub home_goals: u32,
    pub away_goals: u32,
    #[serde(default)]
    pub appearances: Vec<Appearance>,
}

impl MatchRecord {
    pub fn home_league(&self) -> &str {
        self.home_league_id.as_deref().unwrap_or(&self.league_id)
    }

    pub fn away_league(&self) -> &str {
        self.away_league_id.as_deref().unwrap_or(&self.league_id)
    }

    pub fn league_of(&self, team_id: &str) -> Option<&str> {
        if team_id == self.home_team_id {
            Some(self.home_league())
        } else if team_id == self.away_team_id {
            Some(self.away_league())
        } else {
            None
        }
    }

    /// Checks every record invariant; `Err` carries the reason text.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.match_id.is_empty() {
            return Err("empty match_id".into());
        }
        if self.home_team_id == self.away_team_id {
            return Err("home and away team are the same".into());
        }
        let mut per_player: BTreeMap<&str, f64> = BTreeMap::new();
        for (i, a) in self.appearances.iter().enumerate() {
            if a.team_id != self.home_team_id && a.team_id != self.away_team_id {
                return Err(format!(
                    "appearance {i}: team `{}` did not play in this match",
                    a.team_id
                ));
            }
            if !(a.minutes > 0.0 && a.minutes <= MAX_MINUTES) {
                return Err(format!("appearance {i}: minutes {} outside (0, 120]", a.minutes));
            }
            if let Some((m, v)) = a.metrics.iter().find(|(_, v)| !v.is_finite() || *v < 0.0) {
                return Err(format!("appearance {i}: metric `{m}` = {v} is not a non-negative count"));
            }
            let m = &a.metrics;
            if m[Metric::ShortPasses] + m[Metric::LongPasses] > m[Metric::TotalPasses] + PASS_TOLERANCE {
                return Err(format!("appearance {i}: short + long passes exceed total passes"));
            }
            let total = per_player.entry(&a.player_id).or_default();
            *total += a.minutes;
            if *total > MAX_MINUTES + 1e-9 {
                return Err(format!("player `{}` plays more than 120 minutes", a.player_id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Ndjson,
    Csv,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ndjson" | "jsonl" => Ok(CorpusFormat::Ndjson),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(Error::Config(format!("unknown corpus format `{other}`"))),
        }
    }
}

// Raw shapes keep `position` as text so an unknown label maps to
// `UnknownPosition` instead of a generic serde message.
#[derive(Deserialize)]
struct RawAppearance {
    player_id: String,
    team_id: String,
    position: String,
    minutes: f64,
    metrics: MetricVector,
}

#[derive(Deserialize)]
struct RawMatch {
    match_id: String,
    date: NaiveDate,
    league_id: String,
    #[serde(default)]
    home_league_id: Option<String>,
    #[serde(default)]
    away_league_id: Option<String>,
    #[serde(default)]
    neutral: bool,
    home_team_id: String,
    away_team_id: String,
    home_goals: u32,
    away_goals: u32,
    #[serde(default)]
    appearances: Vec<RawAppearance>,
}

fn finish(raw: RawMatch, line: usize) -> Result<MatchRecord> {
    let appearances = raw
        .appearances
        .into_iter()
        .map(|a| {
            Ok(Appearance {
                position: a.position.parse()?,
                player_id: a.player_id,
                team_id: a.team_id,
                minutes: a.minutes,
                metrics: a.metrics,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rec = MatchRecord {
        match_id: raw.match_id,
        date: raw.date,
        league_id: raw.league_id,
        home_league_id: raw.home_league_id,
        away_league_id: raw.away_league_id,
        neutral: raw.neutral,
        home_team_id: raw.home_team_id,
        away_team_id: raw.away_team_id,
        home_goals: raw.home_goals,
        away_goals: raw.away_goals,
        appearances,
    };
    rec.validate().map_err(|reason| Error::MalformedRow { line, reason })?;
    Ok(rec)
}

/// Parses a whole corpus and returns it sorted by date then match id.
pub fn parse_corpus<R: Read>(source: R, format: CorpusFormat) -> Result<Vec<MatchRecord>> {
    let mut records = match format {
        CorpusFormat::Ndjson => parse_ndjson(source)?,
        CorpusFormat::Csv => parse_csv(source)?,
    };
    let mut seen = HashSet::with_capacity(records.len());
    for r in &records {
        if !seen.insert(r.match_id.as_str()) {
            return Err(Error::DuplicateMatchId(r.match_id.clone()));
        }
    }
    records.sort_by(|a, b| (a.date, &a.match_id).cmp(&(b.date, &b.match_id)));
    Ok(records)
}

fn parse_ndjson<R: Read>(source: R) -> Result<Vec<MatchRecord>> {
    let reader = std::io::BufReader::new(source);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::MalformedRow { line: line_no, reason: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawMatch = serde_json::from_str(&line)
            .map_err(|e| Error::MalformedRow { line: line_no, reason: e.to_string() })?;
        out.push(finish(raw, line_no)?);
    }
    Ok(out)
}

const CSV_MATCH_COLUMNS: [&str; 10] = [
    "match_id",
    "date",
    "league_id",
    "home_team_id",
    "away_team_id",
    "home_goals",
    "away_goals",
    "home_league_id",
    "away_league_id",
    "neutral",
];
const CSV_APPEARANCE_COLUMNS: [&str; 4] = ["player_id", "team_id", "position", "minutes"];

fn csv_header() -> Vec<&'static str> {
    CSV_MATCH_COLUMNS
        .iter()
        .chain(CSV_APPEARANCE_COLUMNS.iter())
        .copied()
        .chain(Metric::ALL.iter().map(|m| m.name()))
        .collect()
}

fn parse_csv<R: Read>(source: R) -> Result<Vec<MatchRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MalformedRow { line: 1, reason: format!("missing column `{name}`") })
    };
    let match_cols: Vec<usize> = CSV_MATCH_COLUMNS.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let app_cols: Vec<usize> = CSV_APPEARANCE_COLUMNS.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let metric_cols: Vec<usize> = Metric::ALL.iter().map(|m| col(m.name())).collect::<Result<_>>()?;

    // match_id -> (first line, header fields, appearances)
    let mut groups: BTreeMap<String, (usize, Vec<String>, Vec<RawAppearance>)> = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::MalformedRow { line, reason: e.to_string() })?;
        let bad = |reason: String| Error::MalformedRow { line, reason };
        let header: Vec<String> = match_cols.iter().map(|&c| row.get(c).unwrap_or("").to_string()).collect();
        let num = |c: usize, name: &str| -> Result<f64> {
            row.get(c)
                .unwrap_or("")
                .parse::<f64>()
                .map_err(|e| Error::MalformedRow { line, reason: format!("{name}: {e}") })
        };
        let mut metrics = MetricVector::ZERO;
        for (m, &c) in Metric::ALL.iter().zip(&metric_cols) {
            metrics[*m] = num(c, m.name())?;
        }
        let app = RawAppearance {
            player_id: row.get(app_cols[0]).unwrap_or("").to_string(),
            team_id: row.get(app_cols[1]).unwrap_or("").to_string(),
            position: row.get(app_cols[2]).unwrap_or("").to_string(),
            minutes: num(app_cols[3], "minutes")?,
            metrics,
        };
        let entry = groups
            .entry(header[0].clone())
            .or_insert_with(|| (line, header.clone(), Vec::new()));
        if entry.1 != header {
            return Err(bad(format!("match `{}` header columns differ from line {}", header[0], entry.0)));
        }
        entry.2.push(app);
    }

    let mut out = Vec::with_capacity(groups.len());
    for (match_id, (line, h, apps)) in groups {
        let bad = |reason: String| Error::MalformedRow { line, reason };
        let opt = |s: &str| (!s.is_empty()).then(|| s.to_string());
        let raw = RawMatch {
            match_id,
            date: h[1].parse().map_err(|e| bad(format!("date: {e}")))?,
            league_id: h[2].clone(),
            home_team_id: h[3].clone(),
            away_team_id: h[4].clone(),
            home_goals: h[5].parse().map_err(|e| bad(format!("home_goals: {e}")))?,
            away_goals: h[6].parse().map_err(|e| bad(format!("away_goals: {e}")))?,
            home_league_id: opt(&h[7]),
            away_league_id: opt(&h[8]),
            neutral: match h[9].as_str() {
                "" | "false" | "0" => false,
                "true" | "1" => true,
                other => return Err(bad(format!("neutral: `{other}` is not a boolean"))),
            },
            appearances: apps,
        };
        out.push(finish(raw, line)?);
    }
    Ok(out)
}

/// Writes the canonical NDJSON form of a corpus.
pub fn write_ndjson<W: Write>(records: &[MatchRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes the flat one-row-per-appearance CSV form.
pub fn write_csv<W: Write>(records: &[MatchRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header())?;
    for r in records {
        for a in &r.appearances {
            let mut row = vec![
                r.match_id.clone(),
                r.date.to_string(),
                r.league_id.clone(),
                r.home_team_id.clone(),
                r.away_team_id.clone(),
                r.home_goals.to_string(),
                r.away_goals.to_string(),
                r.home_league_id.clone().unwrap_or_default(),
                r.away_league_id.clone().unwrap_or_default(),
                r.neutral.to_string(),
                a.player_id.clone(),
                a.team_id.clone(),
                a.position.to_string(),
                a.minutes.to_string(),
            ];
            row.extend(a.metrics.0.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "level", rename_all = "snake_case")]
pub enum EntityKey {
    PlayerPosition { player: String, position: Position, team: String, league: String },
    TeamPosition { team: String, position: Position, league: String },
    Team { team: String, league: String },
}

impl EntityKey {
    pub fn team(&self) -> &str {
        match self {
            EntityKey::PlayerPosition { team, .. }
            | EntityKey::TeamPosition { team, .. }
            | EntityKey::Team { team, .. } => team,
        }
    }

    pub fn league(&self) -> &str {
        match self {
            EntityKey::PlayerPosition { league, .. }
            | EntityKey::TeamPosition { league, .. }
            | EntityKey::Team { league, .. } => league,
        }
    }

    pub fn position(&self) -> Option<Position> {
        match self {
            EntityKey::PlayerPosition { position, .. } | EntityKey::TeamPosition { position, .. } => {
                Some(*position)
            }
            EntityKey::Team { .. } => None,
        }
    }

    pub fn level(&self) -> &'static str {
        match self {
            EntityKey::PlayerPosition { .. } => "player_position",
            EntityKey::TeamPosition { .. } => "team_position",
            EntityKey::Team { .. } => "team",
        }
    }
}

/// Raw counts and minutes of one entity in one match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameLine {
    pub entity_key: EntityKey,
    pub match_id: String,
    pub date: NaiveDate,
    pub minutes: f64,
    pub metrics: MetricVector,
}

/// One line per (player, position) stint with positive minutes. Several
/// stints at the same position in one match are summed; different positions
/// are never merged.
pub fn aggregate_player_positions(m: &MatchRecord) -> Vec<GameLine> {
    let mut acc: BTreeMap<(&str, &str, Position), (f64, MetricVector)> = BTreeMap::new();
    for a in &m.appearances {
        if a.minutes <= 0.0 {
            continue;
        }
        let e = acc
            .entry((a.team_id.as_str(), a.player_id.as_str(), a.position))
            .or_insert((0.0, MetricVector::ZERO));
        e.0 += a.minutes;
        e.1 += a.metrics;
    }
    acc.into_iter()
        .map(|((team, player, position), (minutes, metrics))| GameLine {
            entity_key: EntityKey::PlayerPosition {
                player: player.to_string(),
                position,
                team: team.to_string(),
                league: m.league_of(team).unwrap_or(&m.league_id).to_string(),
            },
            match_id: m.match_id.clone(),
            date: m.date,
            minutes,
            metrics,
        })
        .collect()
}

/// Sums player-position lines of one match into team-position and team
/// lines. Inputs are summed in key order, so the output does not depend on
/// the order of `lines`.
pub fn rollup(lines: &[GameLine]) -> Result<(Vec<GameLine>, Vec<GameLine>)> {
    let Some(first) = lines.first() else {
        return Ok((Vec::new(), Vec::new()));
    };
    if let Some(other) = lines.iter().find(|l| l.match_id != first.match_id) {
        return Err(Error::MixedMatches(first.match_id.clone(), other.match_id.clone()));
    }
    let mut sorted: Vec<&GameLine> = lines.iter().collect();
    sorted.sort_by(|a, b| a.entity_key.cmp(&b.entity_key));

    let mut tp: BTreeMap<(String, Position, String), (f64, MetricVector)> = BTreeMap::new();
    for l in sorted {
        let position = l.entity_key.position().unwrap_or(Position::GK);
        let e = tp
            .entry((l.entity_key.team().to_string(), position, l.entity_key.league().to_string()))
            .or_insert((0.0, MetricVector::ZERO));
        e.0 += l.minutes;
        e.1 += l.metrics;
    }
    let mut team: BTreeMap<(String, String), (f64, MetricVector)> = BTreeMap::new();
    let mut tp_lines = Vec::with_capacity(tp.len());
    for ((t, position, league), (minutes, metrics)) in tp {
        let e = team.entry((t.clone(), league.clone())).or_insert((0.0, MetricVector::ZERO));
        e.0 += minutes;
        e.1 += metrics;
        tp_lines.push(GameLine {
            entity_key: EntityKey::TeamPosition { team: t, position, league },
            match_id: first.match_id.clone(),
            date: first.date,
            minutes,
            metrics,
        });
    }
    let team_lines = team
        .into_iter()
        .map(|((t, league), (minutes, metrics))| GameLine {
            entity_key: EntityKey::Team { team: t, league },
            match_id: first.match_id.clone(),
            date: first.date,
            minutes,
            metrics,
        })
        .collect();
    Ok((tp_lines, team_lines))
}

/// All game lines of a corpus, each list in match order.
#[derive(Debug, Clone, Default)]
pub struct CorpusLines {
    pub player_position: Vec<GameLine>,
    pub team_position: Vec<GameLine>,
    pub team: Vec<GameLine>,
}

pub fn aggregate_corpus(records: &[MatchRecord]) -> CorpusLines {
    let mut out = CorpusLines::default();
    for m in records {
        let pp = aggregate_player_positions(m);
        let (tp, team) = rollup(&pp).expect("lines of one match");
        out.player_position.extend(pp);
        out.team_position.extend(tp);
        out.team.extend(team);
    }
    out
}

/// Writes game lines as a flat CSV (level, keys, match, minutes, raw counts).
pub fn write_lines_csv<W: Write>(lines: &[GameLine], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["level", "player_id", "position", "team_id", "league_id", "match_id", "date", "minutes"];
    header.extend(Metric::ALL.iter().map(|m| m.name()));
    w.write_record(&header)?;
    for l in lines {
        let (player, position) = match &l.entity_key {
            EntityKey::PlayerPosition { player, position, .. } => (player.as_str(), position.label()),
            EntityKey::TeamPosition { position, .. } => ("", position.label()),
            EntityKey::Team { .. } => ("", ""),
        };
        let mut row = vec![
            l.entity_key.level().to_string(),
            player.to_string(),
            position.to_string(),
            l.entity_key.team().to_string(),
            l.entity_key.league().to_string(),
            l.match_id.clone(),
            l.date.to_string(),
            l.minutes.to_string(),
        ];
        row.extend(l.metrics.0.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Every team id that appears in a corpus, sorted.
pub fn team_ids(records: &[MatchRecord]) -> BTreeSet<String> {
    records
        .iter()
        .flat_map(|m| [m.home_team_id.clone(), m.away_team_id.clone()])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics(pairs: &[(Metric, f64)]) -> MetricVector {
        let mut v = MetricVector::ZERO;
        for &(m, x) in pairs {
            v[m] = x;
        }
        v
    }

    fn app(player: &str, team: &str, position: Position, minutes: f64, m: MetricVector) -> Appearance {
        Appearance { player_id: player.into(), team_id: team.into(), position, minutes, metrics: m }
    }

    fn record(apps: Vec<Appearance>) -> MatchRecord {
        MatchRecord {
            match_id: "m1".into(),
            date: NaiveDate::from_ymd_opt(2021, 8, 14).unwrap(),
            league_id: "L1".into(),
            home_league_id: None,
            away_league_id: None,
            neutral: false,
            home_team_id: "h".into(),
            away_team_id: "a".into(),
            home_goals: 1,
            away_goals: 0,
            appearances: apps,
        }
    }

    fn ndjson(records: &[MatchRecord]) -> Vec<u8> {
        let mut buf = Vec::new();
        write_ndjson(records, &mut buf).unwrap();
        buf
    }

    #[test]
    fn empty_stream_parses_to_nothing() {
        assert!(parse_corpus(&b""[..], CorpusFormat::Ndjson).unwrap().is_empty());
        assert!(parse_corpus(&b"\n\n"[..], CorpusFormat::Ndjson).unwrap().is_empty());
    }

    #[test]
    fn single_row_round_trips() {
        let rec = record(vec![app("p1", "h", Position::W, 90.0, metrics(&[(Metric::Shots, 3.0)]))]);
        let parsed = parse_corpus(&ndjson(std::slice::from_ref(&rec))[..], CorpusFormat::Ndjson).unwrap();
        assert_eq!(parsed, vec![rec]);
    }

    #[test]
    fn negative_minutes_is_malformed() {
        let rec = record(vec![app("p1", "h", Position::W, -5.0, MetricVector::ZERO)]);
        let err = parse_corpus(&ndjson(&[rec])[..], CorpusFormat::Ndjson).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { line: 1, .. }), "{err}");
    }

    #[test]
    fn other_invariant_violations() {
        let too_long = record(vec![
            app("p1", "h", Position::W, 100.0, MetricVector::ZERO),
            app("p1", "h", Position::CM, 30.0, MetricVector::ZERO),
        ]);
        assert!(too_long.validate().is_err());
        let stranger = record(vec![app("p1", "x", Position::W, 90.0, MetricVector::ZERO)]);
        assert!(stranger.validate().is_err());
        let passes = record(vec![app(
            "p1",
            "h",
            Position::CM,
            90.0,
            metrics(&[(Metric::TotalPasses, 10.0), (Metric::ShortPasses, 8.0), (Metric::LongPasses, 3.0)]),
        )]);
        assert!(passes.validate().is_err());
        let mut negative = record(vec![]);
        negative.appearances.push(app("p1", "h", Position::CM, 90.0, metrics(&[(Metric::Xg, -0.1)])));
        assert!(negative.validate().is_err());
    }

    #[test]
    fn unknown_position_and_duplicates() {
        let line = br#"{"match_id":"m1","date":"2021-01-01","league_id":"L","home_team_id":"h","away_team_id":"a","home_goals":0,"away_goals":0,"appearances":[{"player_id":"p","team_id":"h","position":"LW","minutes":90,"metrics":{"shots":0,"xg":0,"xa":0,"crosses":0,"total_passes":0,"short_passes":0,"long_passes":0,"att_third_passes":0,"pen_area_entries":0,"take_ons":0,"def_own_third":0,"def_mid_third":0,"def_att_third":0}}]}"#;
        assert!(matches!(parse_corpus(&line[..], CorpusFormat::Ndjson), Err(Error::UnknownPosition(_))));

        let rec = record(vec![]);
        let twice = ndjson(&[rec.clone(), rec]);
        assert!(matches!(parse_corpus(&twice[..], CorpusFormat::Ndjson), Err(Error::DuplicateMatchId(_))));

        let garbage = b"{\"match_id\": 3}\n";
        assert!(matches!(
            parse_corpus(&garbage[..], CorpusFormat::Ndjson),
            Err(Error::MalformedRow { line: 1, .. })
        ));
    }

    #[test]
    fn records_are_sorted_by_date_then_id() {
        let mut a = record(vec![]);
        a.match_id = "b".into();
        let mut b = record(vec![]);
        b.match_id = "a".into();
        let mut c = record(vec![]);
        c.match_id = "0".into();
        c.date = NaiveDate::from_ymd_opt(2022, 1, 1).unwrap();
        let parsed = parse_corpus(&ndjson(&[c, a, b])[..], CorpusFormat::Ndjson).unwrap();
        let ids: Vec<_> = parsed.iter().map(|r| r.match_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "0"]);
    }

    #[test]
    fn csv_matches_ndjson() {
        let mut rec = record(vec![
            app("p1", "h", Position::W, 85.0, metrics(&[(Metric::TakeOns, 2.0)])),
            app("p1", "h", Position::CM, 5.0, metrics(&[(Metric::TakeOns, 1.0)])),
            app("p2", "a", Position::ST, 90.0, metrics(&[(Metric::Shots, 4.0), (Metric::Xg, 0.7)])),
        ]);
        rec.away_league_id = Some("L2".into());
        let mut buf = Vec::new();
        write_csv(&[rec.clone()], &mut buf).unwrap();
        let parsed = parse_corpus(&buf[..], CorpusFormat::Csv).unwrap();
        assert_eq!(parsed, vec![rec]);
    }

    #[test]
    fn single_stint_line() {
        let rec = record(vec![app("p1", "h", Position::W, 90.0, metrics(&[(Metric::Shots, 3.0)]))]);
        let lines = aggregate_player_positions(&rec);
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].entity_key.position(), Some(Position::W));
        assert_eq!(lines[0].minutes, 90.0);
        assert_eq!(lines[0].metrics[Metric::Shots], 3.0);
    }

    #[test]
    fn split_positions_are_kept_apart() {
        let rec = record(vec![
            app("doku", "h", Position::W, 85.0, metrics(&[(Metric::TakeOns, 2.0)])),
            app("doku", "h", Position::CM, 10.0, metrics(&[(Metric::TakeOns, 1.0)])),
        ]);
        let lines = aggregate_player_positions(&rec);
        assert_eq!(lines.len(), 2);
        let by_pos: BTreeMap<_, _> =
            lines.iter().map(|l| (l.entity_key.position().unwrap(), (l.minutes, l.metrics[Metric::TakeOns]))).collect();
        assert_eq!(by_pos[&Position::W], (85.0, 2.0));
        assert_eq!(by_pos[&Position::CM], (10.0, 1.0));
    }

    #[test]
    fn rollup_sums_positions_and_team() {
        let rec = record(vec![
            app("w1", "h", Position::W, 90.0, metrics(&[(Metric::Shots, 3.0)])),
            app("w2", "h", Position::W, 90.0, metrics(&[(Metric::Shots, 1.0)])),
            app("st", "h", Position::ST, 90.0, metrics(&[(Metric::Shots, 2.0)])),
            app("c1", "a", Position::CM, 90.0, metrics(&[(Metric::TotalPasses, 40.0)])),
            app("c2", "a", Position::CM, 90.0, metrics(&[(Metric::TotalPasses, 60.0)])),
        ]);
        let pp = aggregate_player_positions(&rec);
        assert_eq!(pp.len(), 5);
        let (tp, team) = rollup(&pp).unwrap();
        let find = |pos: Position, t: &str| {
            tp.iter().find(|l| l.entity_key.position() == Some(pos) && l.entity_key.team() == t).unwrap()
        };
        assert_eq!(find(Position::W, "h").metrics[Metric::Shots], 4.0);
        assert_eq!(find(Position::W, "h").minutes, 180.0);
        let cm = find(Position::CM, "a");
        assert_eq!((cm.minutes, cm.metrics[Metric::TotalPasses]), (180.0, 100.0));
        let home = team.iter().find(|l| l.entity_key.team() == "h").unwrap();
        assert_eq!(home.minutes, 270.0);
        assert_eq!(home.metrics[Metric::Shots], 6.0);
    }

    #[test]
    fn singleton_rollup_is_identity() {
        let rec = record(vec![app("p", "h", Position::FB, 77.0, metrics(&[(Metric::Crosses, 5.0)]))]);
        let pp = aggregate_player_positions(&rec);
        let (tp, team) = rollup(&pp).unwrap();
        assert_eq!((tp[0].minutes, tp[0].metrics), (pp[0].minutes, pp[0].metrics));
        assert_eq!((team[0].minutes, team[0].metrics), (pp[0].minutes, pp[0].metrics));
    }

    #[test]
    fn rollup_rejects_mixed_matches() {
        let a = aggregate_player_positions(&record(vec![app("p", "h", Position::W, 90.0, MetricVector::ZERO)]));
        let mut other = record(vec![app("q", "h", Position::W, 90.0, MetricVector::ZERO)]);
        other.match_id = "m2".into();
        let mut lines = a;
        lines.extend(aggregate_player_positions(&other));
        assert!(matches!(rollup(&lines), Err(Error::MixedMatches(..))));
        assert_eq!(rollup(&[]).unwrap(), (vec![], vec![]));
    }
}
