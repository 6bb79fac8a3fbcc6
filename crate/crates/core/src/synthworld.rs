//! Synthetic leagues with known latent parameters.
//!
//! Every player has a per-metric style, every team a per-metric multiplier
//! and a scalar ability. The expected per-90 of a player at a position and
//! team is
//!
//! `μ = base[position] ⊙ style ⊙ multiplier ⊙ g(ability − league mean)`
//!
//! with `g(Δ) = exp(κΔ)` for attacking and passing metrics and `exp(−κΔ)`
//! for defensive actions. Per-game counts are `μ · minutes / 90` times mean-one
//! lognormal noise. Total passes are the sum of short, long and "other"
//! passes; the `total_passes` slot of `base`, `style` and `multiplier` scales
//! the "other" component.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use chrono::{Datelike, Duration, NaiveDate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Appearance, MatchRecord};
use crate::metadata::{CsvMetadata, PlayerMeta};
use crate::metrics::{Metric, MetricVector, Position};
use crate::predictor::{improvement, EvaluationReport, MetricRow, Split, TrainingExample, TransferScenario};
use crate::ratings::{LeagueInfo, Topology};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub seed: u64,
    pub countries: usize,
    pub continents: usize,
    /// Leagues per country, tier 1 the strongest.
    pub tiers: usize,
    pub teams_per_league: usize,
    pub seasons: usize,
    pub start_year: i32,
    /// Share of all players moved in each summer window.
    pub transfer_fraction: f64,
    pub noise_sigma: f64,
    pub kappa: f64,
    /// Team multipliers are log-uniform in `[1 / max, max]`.
    pub team_multiplier_max: f64,
    pub style_sigma: f64,
    pub country_quality_sd: f64,
    pub tier_gap: f64,
    pub team_ability_sd: f64,
    pub substitution_prob: f64,
    pub position_switch_prob: f64,
    pub cups: bool,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            seed: 7,
            countries: 4,
            continents: 2,
            tiers: 2,
            teams_per_league: 12,
            seasons: 8,
            start_year: 2015,
            transfer_fraction: 0.3,
            noise_sigma: 0.3,
            kappa: 0.4,
            team_multiplier_max: 2.0,
            style_sigma: 0.2,
            country_quality_sd: 0.3,
            tier_gap: 0.6,
            team_ability_sd: 0.5,
            substitution_prob: 0.5,
            position_switch_prob: 0.05,
            cups: true,
        }
    }
}

impl WorldConfig {
    /// A small world for quick runs: 4 leagues, 8 teams each, 3 seasons.
    pub fn small(seed: u64) -> Self {
        WorldConfig { seed, countries: 2, continents: 2, teams_per_league: 8, seasons: 3, ..WorldConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let counts_ok = self.countries >= 1
            && self.continents >= 1
            && self.continents <= self.countries
            && self.tiers >= 1
            && self.teams_per_league >= 2
            && self.seasons >= 1;
        let params_ok = self.noise_sigma >= 0.0
            && self.style_sigma >= 0.0
            && self.country_quality_sd >= 0.0
            && self.team_ability_sd >= 0.0
            && self.team_multiplier_max >= 1.0
            && self.kappa.is_finite()
            && self.tier_gap.is_finite()
            && [self.transfer_fraction, self.substitution_prob, self.position_switch_prob]
                .iter()
                .all(|p| (0.0..=1.0).contains(p));
        if counts_ok && params_ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid world config {self:?}")))
        }
    }

    pub fn league_count(&self) -> usize {
        self.countries * self.tiers
    }
}

/// Squad slots: eleven starters then three substitutes.
pub const SQUAD: [Position; 14] = [
    Position::GK,
    Position::CB,
    Position::CB,
    Position::FB,
    Position::FB,
    Position::CM,
    Position::CM,
    Position::CM,
    Position::W,
    Position::W,
    Position::ST,
    Position::CM,
    Position::W,
    Position::ST,
];
const STARTERS: usize = 11;

/// Per-90 rates of an average player on an average team. The
/// `total_passes` slot holds "other" passes.
pub fn base_rates(position: Position) -> MetricVector {
    let v: [f64; 13] = match position {
        Position::GK => [0.01, 0.001, 0.005, 0.01, 3.0, 15.0, 10.0, 0.5, 0.01, 0.02, 1.0, 0.05, 0.01],
        Position::CB => [0.6, 0.06, 0.02, 0.1, 5.0, 35.0, 6.0, 4.0, 0.2, 0.3, 5.0, 2.0, 0.2],
        Position::FB => [0.5, 0.04, 0.12, 2.0, 6.0, 30.0, 4.0, 10.0, 1.0, 1.0, 3.5, 2.5, 0.8],
        Position::CM => [1.2, 0.10, 0.12, 0.5, 6.0, 40.0, 4.0, 12.0, 1.5, 1.2, 2.0, 3.5, 1.0],
        Position::W => [2.0, 0.22, 0.20, 2.5, 5.0, 20.0, 1.5, 12.0, 2.5, 3.0, 0.8, 1.5, 1.5],
        Position::ST => [3.0, 0.40, 0.12, 0.5, 4.0, 12.0, 1.0, 8.0, 2.0, 1.5, 0.5, 0.8, 1.8],
    };
    MetricVector(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerTruth {
    pub native_position: Position,
    pub style: MetricVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamTruth {
    pub ability: f64,
    pub multipliers: MetricVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonTruth {
    /// The summer window date that opens the season.
    pub start: NaiveDate,
    pub leagues: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferTruth {
    pub player: String,
    pub from: String,
    pub to: String,
    pub date: NaiveDate,
}

/// Latent parameters of a generated world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub seed: u64,
    pub kappa: f64,
    pub noise_sigma: f64,
    pub players: BTreeMap<String, PlayerTruth>,
    pub teams: BTreeMap<String, TeamTruth>,
    pub seasons: Vec<SeasonTruth>,
    pub transfers: Vec<TransferTruth>,
}

/// Expected per-90 split into its components; `total_passes` holds the
/// "other" passes.
fn mu_parts(position: Position, style: &MetricVector, mult: &MetricVector, delta: f64, kappa: f64) -> MetricVector {
    let base = base_rates(position);
    MetricVector::from_metrics(|m| {
        let link = if m.is_defensive() { (-kappa * delta).exp() } else { (kappa * delta).exp() };
        base[m] * style[m] * mult[m] * link
    })
}

fn combine_passes(mut parts: MetricVector) -> MetricVector {
    parts[Metric::TotalPasses] += parts[Metric::ShortPasses] + parts[Metric::LongPasses];
    parts
}

/// `μ` for explicit latent values.
pub fn expected_per90(position: Position, style: &MetricVector, mult: &MetricVector, delta: f64, kappa: f64) -> MetricVector {
    combine_passes(mu_parts(position, style, mult, delta, kappa))
}

impl Truth {
    /// Season in force on `date`: the latest whose window is on or before it.
    pub fn season_index(&self, date: NaiveDate) -> Option<usize> {
        self.seasons.partition_point(|s| s.start <= date).checked_sub(1)
    }

    pub fn league_of(&self, team: &str, season: usize) -> Option<&str> {
        self.seasons.get(season)?.leagues.iter().find(|(_, t)| t.iter().any(|x| x == team)).map(|(l, _)| l.as_str())
    }

    pub fn league_mean_ability(&self, league: &str, season: usize) -> Option<f64> {
        let teams = self.seasons.get(season)?.leagues.get(league)?;
        let sum: f64 = teams.iter().map(|t| self.teams[t].ability).sum();
        Some(sum / teams.len() as f64)
    }

    /// Ability minus the mean ability of the team's league on `date`.
    pub fn relative_ability(&self, team: &str, date: NaiveDate) -> Option<f64> {
        let s = self.season_index(date)?;
        let league = self.league_of(team, s)?;
        Some(self.teams.get(team)?.ability - self.league_mean_ability(league, s)?)
    }

    /// Exact expected per-90 of `player` at `position` for `team` on
    /// `date`, whether or not the placement happened.
    pub fn mu(&self, player: &str, position: Position, team: &str, date: NaiveDate) -> Result<MetricVector> {
        let p = self.players.get(player).ok_or_else(|| Error::ScenarioMismatch(format!("unknown player `{player}`")))?;
        let t = self.teams.get(team).ok_or_else(|| Error::ScenarioMismatch(format!("unknown team `{team}`")))?;
        let delta = self
            .relative_ability(team, date)
            .ok_or_else(|| Error::ScenarioMismatch(format!("team `{team}` has no league on {date}")))?;
        Ok(expected_per90(position, &p.style, &t.multipliers, delta, self.kappa))
    }

    pub fn scenario_mu(&self, s: &TransferScenario) -> Result<MetricVector> {
        self.mu(&s.player, s.position, &s.destination_team, s.date)
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        Ok(serde_json::from_reader(input)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub n: usize,
    pub mse: MetricVector,
}

impl OracleReport {
    pub fn mean_mse(&self) -> f64 {
        self.mse.iter().map(|(_, v)| v).sum::<f64>() / Metric::ALL.len() as f64
    }
}

/// Per-metric MSE of predictions against the latent expectation of each
/// scenario's destination placement.
pub fn oracle_eval(truth: &Truth, predictions: &[(TransferScenario, MetricVector)]) -> Result<OracleReport> {
    if predictions.is_empty() {
        return Err(Error::ScenarioMismatch("no scenarios to evaluate".into()));
    }
    let n = predictions.len() as f64;
    let mut mse = MetricVector::ZERO;
    for (scenario, pred) in predictions {
        let mu = truth.scenario_mu(scenario)?;
        mse += pred.zip_with(&mu, |p, m| (p - m).powi(2) / n);
    }
    Ok(OracleReport { n: predictions.len(), mse })
}

/// Oracle MSE of model forecasts and of the persistence baseline on one
/// split of held-out examples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleComparison {
    pub n: usize,
    pub model: MetricVector,
    pub baseline: MetricVector,
}

impl OracleComparison {
    /// Mean over metrics of the per-metric percentage MSE reduction.
    pub fn mean_improvement(&self) -> f64 {
        let sum: f64 = Metric::ALL.iter().map(|&m| improvement(self.model[m], self.baseline[m])).sum();
        sum / Metric::ALL.len() as f64
    }

    pub fn improvement(&self, m: Metric) -> f64 {
        improvement(self.model[m], self.baseline[m])
    }
}

/// Scores forecasts and baselines against the latent expectation.
pub fn oracle_compare(truth: &Truth, examples: &[TrainingExample], forecasts: &[MetricVector]) -> Result<OracleComparison> {
    if examples.len() != forecasts.len() {
        return Err(Error::ScenarioMismatch(format!("{} examples, {} forecasts", examples.len(), forecasts.len())));
    }
    let model: Vec<_> = examples.iter().zip(forecasts).map(|(e, f)| (e.scenario.clone(), *f)).collect();
    let base: Vec<_> = examples.iter().map(|e| (e.scenario.clone(), e.baseline())).collect();
    let m = oracle_eval(truth, &model)?;
    let b = oracle_eval(truth, &base)?;
    Ok(OracleComparison { n: m.n, model: m.mse, baseline: b.mse })
}

/// Oracle comparison per split in the evaluation-report shape; splits with
/// no examples are skipped.
pub fn oracle_report(truth: &Truth, examples: &[TrainingExample], forecasts: &[MetricVector]) -> Result<EvaluationReport> {
    let mut rows = Vec::new();
    for split in Split::ALL {
        let keep: Vec<usize> = (0..examples.len())
            .filter(|&i| match split {
                Split::Transfer => examples[i].is_transfer,
                Split::NonTransfer => !examples[i].is_transfer,
                Split::All => true,
            })
            .collect();
        if keep.is_empty() {
            continue;
        }
        let ex: Vec<TrainingExample> = keep.iter().map(|&i| examples[i].clone()).collect();
        let fc: Vec<MetricVector> = keep.iter().map(|&i| forecasts[i]).collect();
        let c = oracle_compare(truth, &ex, &fc)?;
        rows.extend(Metric::ALL.iter().map(|&m| MetricRow {
            metric: m,
            split,
            n: c.n,
            model_mse: c.model[m],
            baseline_mse: c.baseline[m],
            improvement: c.improvement(m),
        }));
    }
    Ok(EvaluationReport { rows })
}

/// A generated corpus with its topology, metadata and latent truth.
#[derive(Debug, Clone)]
pub struct World {
    pub records: Vec<MatchRecord>,
    pub topology: Topology,
    pub metadata: CsvMetadata,
    pub truth: Truth,
}

const FIRST_NAMES: [&str; 20] = [
    "Alex", "Bruno", "Carlos", "Dani", "Emil", "Felix", "Goran", "Hugo", "Ivan", "Jonas", "Kai", "Luca", "Mateo",
    "Nico", "Omar", "Pavel", "Rui", "Sami", "Tomas", "Yannick",
];
const LAST_NAMES: [&str; 20] = [
    "Almeida", "Berg", "Costa", "Dvorak", "Eriksen", "Fontaine", "Garcia", "Horvat", "Ibrahim", "Jansen", "Kovac",
    "Lindqvist", "Moreau", "Nowak", "Okafor", "Petrov", "Quist", "Rossi", "Schmidt", "Varga",
];

struct Generator<'a> {
    cfg: &'a WorldConfig,
    rng: ChaCha8Rng,
    unit: Normal<f64>,
    truth: Truth,
    squads: BTreeMap<String, Vec<String>>,
    leagues: BTreeMap<String, Vec<String>>,
    records: Vec<MatchRecord>,
}

#[derive(Default, Clone, Copy)]
struct TableRow {
    points: i64,
    goal_diff: i64,
    goals: i64,
}

impl<'a> Generator<'a> {
    fn noise(&mut self) -> f64 {
        let s = self.cfg.noise_sigma;
        if s == 0.0 {
            1.0
        } else {
            (s * self.unit.sample(&mut self.rng) - 0.5 * s * s).exp()
        }
    }

    fn lognormal_vector(&mut self, sigma: f64) -> MetricVector {
        MetricVector::from_fn(|_| (sigma * self.unit.sample(&mut self.rng) - 0.5 * sigma * sigma).exp())
    }

    /// Counts of one stint with noise; total passes are summed from parts.
    fn stint_counts(&mut self, player: &str, position: Position, team: &str, delta: f64, minutes: f64) -> MetricVector {
        let parts = mu_parts(
            position,
            &self.truth.players[player].style,
            &self.truth.teams[team].multipliers,
            delta,
            self.cfg.kappa,
        );
        let mut counts = MetricVector::ZERO;
        for m in Metric::ALL {
            counts[m] = parts[m] * minutes / 90.0 * self.noise();
        }
        combine_passes(counts)
    }

    /// (player, position, minutes) stints of one team in one match.
    fn lineup(&mut self, team: &str) -> Vec<(String, Position, f64)> {
        let squad = self.squads[team].clone();
        let mut minutes = [90.0f64; STARTERS];
        let mut stints = Vec::new();
        for b in STARTERS..SQUAD.len() {
            if self.rng.random::<f64>() >= self.cfg.substitution_prob {
                continue;
            }
            let candidates: Vec<usize> = (0..STARTERS).filter(|&i| SQUAD[i] == SQUAD[b] && minutes[i] == 90.0).collect();
            let Some(&starter) = candidates.choose(&mut self.rng) else { continue };
            let off = self.rng.random_range(55..=85) as f64;
            minutes[starter] = off;
            stints.push((squad[b].clone(), SQUAD[b], 90.0 - off));
        }
        let mut switched = None;
        if self.rng.random::<f64>() < self.cfg.position_switch_prob {
            let pick = |pos: Position| (0..STARTERS).filter(|&i| SQUAD[i] == pos && minutes[i] == 90.0).collect::<Vec<_>>();
            let (ws, cms) = (pick(Position::W), pick(Position::CM));
            if let (Some(&w), Some(&c)) = (ws.choose(&mut self.rng), cms.choose(&mut self.rng)) {
                switched = Some((w, c, self.rng.random_range(30..=80) as f64));
            }
        }
        for i in 0..STARTERS {
            match switched {
                Some((w, c, t)) if i == w || i == c => {
                    let (first, second) = if i == w { (Position::W, Position::CM) } else { (Position::CM, Position::W) };
                    stints.push((squad[i].clone(), first, t));
                    stints.push((squad[i].clone(), second, 90.0 - t));
                }
                _ => stints.push((squad[i].clone(), SQUAD[i], minutes[i])),
            }
        }
        stints
    }

    #[allow(clippy::too_many_arguments)]
    fn play(
        &mut self,
        match_id: String,
        date: NaiveDate,
        competition: &str,
        home: &str,
        away: &str,
        neutral: bool,
        season: usize,
    ) -> (u32, u32) {
        let ability = |t: &str| self.truth.teams[t].ability;
        let diff = ability(home) - ability(away);
        let home_edge = if neutral { 0.0 } else { 0.15 };
        let lam_h = 1.4 * (0.35 * diff + home_edge).exp();
        let lam_a = 1.1 * (-0.35 * diff).exp();
        let hg = Poisson::new(lam_h).unwrap().sample(&mut self.rng) as u32;
        let ag = Poisson::new(lam_a).unwrap().sample(&mut self.rng) as u32;

        let home_league = self.truth.league_of(home, season).expect("team in a league").to_string();
        let away_league = self.truth.league_of(away, season).expect("team in a league").to_string();
        let mut appearances = Vec::new();
        for (team, league) in [(home, &home_league), (away, &away_league)] {
            let delta = self.truth.teams[team].ability - self.truth.league_mean_ability(league, season).unwrap();
            for (player, position, minutes) in self.lineup(team) {
                let metrics = self.stint_counts(&player, position, team, delta, minutes);
                appearances.push(Appearance { player_id: player, team_id: team.to_string(), position, minutes, metrics });
            }
        }
        let cup = home_league != competition || away_league != competition;
        self.records.push(MatchRecord {
            match_id,
            date,
            league_id: competition.to_string(),
            home_league_id: cup.then(|| home_league.clone()),
            away_league_id: cup.then(|| away_league.clone()),
            neutral,
            home_team_id: home.to_string(),
            away_team_id: away.to_string(),
            home_goals: hg,
            away_goals: ag,
            appearances,
        });
        (hg, ag)
    }

    /// Double round robin by the circle method.
    fn fixtures(teams: &[String]) -> Vec<Vec<(usize, usize)>> {
        let mut idx: Vec<Option<usize>> = (0..teams.len()).map(Some).collect();
        if idx.len() % 2 == 1 {
            idx.push(None);
        }
        let n = idx.len();
        let mut rounds = Vec::new();
        for r in 0..n - 1 {
            let mut games = Vec::new();
            for i in 0..n / 2 {
                if let (Some(a), Some(b)) = (idx[i], idx[n - 1 - i]) {
                    games.push(if (r + i) % 2 == 0 { (a, b) } else { (b, a) });
                }
            }
            rounds.push(games);
            idx[1..].rotate_right(1);
        }
        let second: Vec<Vec<(usize, usize)>> =
            rounds.iter().map(|g| g.iter().map(|&(a, b)| (b, a)).collect()).collect();
        rounds.extend(second);
        rounds
    }

    fn tier1_by_country(&self) -> Vec<(usize, Vec<String>)> {
        (0..self.cfg.countries)
            .map(|c| (c % self.cfg.continents, self.leagues[&league_id(c, 1)].clone()))
            .collect()
    }

    fn cups(&mut self, season: usize, kickoff: NaiveDate) {
        if !self.cfg.cups {
            return;
        }
        let cfg = self.cfg;
        let cup_day = |round: i64| kickoff + Duration::days(7 * round + 3);
        if cfg.tiers >= 2 {
            for (k, round) in [3i64, 9, 15].into_iter().enumerate() {
                for c in 0..cfg.countries {
                    let mut top = self.leagues[&league_id(c, 1)].clone();
                    let mut low = self.leagues[&league_id(c, 2)].clone();
                    top.shuffle(&mut self.rng);
                    low.shuffle(&mut self.rng);
                    for (i, (a, b)) in top.iter().zip(&low).take(4).enumerate() {
                        let id = format!("S{season}-CUP-C{c}-{k}-{i}");
                        let (h, aw) = if i % 2 == 0 { (b, a) } else { (a, b) };
                        self.play(id, cup_day(round), &format!("CUP-C{c}"), h, aw, false, season);
                    }
                }
            }
        }
        let tier1 = self.tier1_by_country();
        for (k, round) in [5i64, 11, 17].into_iter().enumerate() {
            for cont in 0..cfg.continents {
                let countries: Vec<&Vec<String>> = tier1.iter().filter(|(k, _)| *k == cont).map(|(_, t)| t).collect();
                if countries.len() < 2 {
                    continue;
                }
                // Distinct clubs per round so nobody plays twice on one day.
                let mut drawn: Vec<String> = Vec::new();
                for i in 0..4 {
                    let (x, y) = (i % countries.len(), (i + 1) % countries.len());
                    let pick = |list: &Vec<String>, drawn: &Vec<String>, rng: &mut ChaCha8Rng| {
                        let free: Vec<&String> = list.iter().filter(|t| !drawn.contains(t)).collect();
                        free.choose(rng).map(|t| (*t).clone())
                    };
                    let Some(a) = pick(countries[x], &drawn, &mut self.rng) else { break };
                    drawn.push(a.clone());
                    let Some(b) = pick(countries[y], &drawn, &mut self.rng) else { break };
                    drawn.push(b.clone());
                    let id = format!("S{season}-CONT-K{cont}-{k}-{i}");
                    self.play(id, cup_day(round), &format!("CONT-K{cont}"), &a, &b, false, season);
                }
            }
        }
        if cfg.continents >= 2 {
            let round = 13i64;
            for i in 0..2 {
                let pool = |cont: usize| tier1.iter().filter(|(k, _)| *k == cont).flat_map(|(_, t)| t.clone()).collect::<Vec<_>>();
                let a = pool(i % cfg.continents).choose(&mut self.rng).unwrap().clone();
                let b = pool((i + 1) % cfg.continents).choose(&mut self.rng).unwrap().clone();
                let day = cup_day(round) + Duration::days(i as i64);
                self.play(format!("S{season}-WORLD-{i}"), day, "WORLD", &a, &b, true, season);
            }
        }
    }

    fn transfer_window(&mut self, date: NaiveDate) {
        let total: usize = self.squads.values().map(|s| s.len()).sum();
        let swaps = (self.cfg.transfer_fraction * total as f64 / 2.0).round() as usize;
        let slots: Vec<(String, usize)> =
            self.squads.keys().flat_map(|t| (0..SQUAD.len()).map(move |i| (t.clone(), i))).collect();
        let mut moved: BTreeSet<String> = BTreeSet::new();
        let mut done = 0;
        let mut attempts = 0;
        while done < swaps && attempts < swaps * 20 {
            attempts += 1;
            let (ta, ia) = slots[self.rng.random_range(0..slots.len())].clone();
            let partners: Vec<&(String, usize)> =
                slots.iter().filter(|(t, i)| *t != ta && SQUAD[*i] == SQUAD[ia]).collect();
            let (tb, ib) = (*partners[self.rng.random_range(0..partners.len())]).clone();
            let (pa, pb) = (self.squads[&ta][ia].clone(), self.squads[&tb][ib].clone());
            if moved.contains(&pa) || moved.contains(&pb) {
                continue;
            }
            self.squads.get_mut(&ta).unwrap()[ia] = pb.clone();
            self.squads.get_mut(&tb).unwrap()[ib] = pa.clone();
            self.truth.transfers.push(TransferTruth { player: pa.clone(), from: ta.clone(), to: tb.clone(), date });
            self.truth.transfers.push(TransferTruth { player: pb.clone(), from: tb, to: ta, date });
            moved.insert(pa);
            moved.insert(pb);
            done += 1;
        }
    }

    fn promote_and_relegate(&mut self, tables: &BTreeMap<String, TableRow>) {
        let rank = |teams: &[String]| {
            let mut t = teams.to_vec();
            t.sort_by(|a, b| {
                let (x, y) = (tables[a], tables[b]);
                (y.points, y.goal_diff, y.goals).cmp(&(x.points, x.goal_diff, x.goals)).then(a.cmp(b))
            });
            t
        };
        for c in 0..self.cfg.countries {
            for tier in 1..self.cfg.tiers {
                let upper = rank(&self.leagues[&league_id(c, tier)]);
                let lower = rank(&self.leagues[&league_id(c, tier + 1)]);
                let (down, up) = (upper.last().unwrap().clone(), lower[0].clone());
                let replace = |list: &mut Vec<String>, from: &str, to: &str| {
                    let i = list.iter().position(|t| t == from).unwrap();
                    list[i] = to.to_string();
                    list.sort();
                };
                replace(self.leagues.get_mut(&league_id(c, tier)).unwrap(), &down, &up);
                replace(self.leagues.get_mut(&league_id(c, tier + 1)).unwrap(), &up, &down);
            }
        }
    }
}

pub fn league_id(country: usize, tier: usize) -> String {
    format!("C{country}-{tier}")
}

/// Builds the world season by season: summer window (from the second
/// season), league rounds weekly from August 1st, midweek cup ties, then
/// one up/down swap between adjacent tiers of each country.
pub fn generate(cfg: &WorldConfig) -> Result<World> {
    cfg.validate()?;
    let mut g = Generator {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        unit: Normal::new(0.0, 1.0).unwrap(),
        truth: Truth {
            seed: cfg.seed,
            kappa: cfg.kappa,
            noise_sigma: cfg.noise_sigma,
            players: BTreeMap::new(),
            teams: BTreeMap::new(),
            seasons: Vec::new(),
            transfers: Vec::new(),
        },
        squads: BTreeMap::new(),
        leagues: BTreeMap::new(),
        records: Vec::new(),
    };

    let mut topology = Topology::default();
    let mut meta = Vec::new();
    let ln_max = cfg.team_multiplier_max.ln();
    let mut team_no = 0;
    let mut player_no = 0;
    for c in 0..cfg.countries {
        let quality = cfg.country_quality_sd * g.unit.sample(&mut g.rng);
        for tier in 1..=cfg.tiers {
            let league = league_id(c, tier);
            topology.leagues.push(LeagueInfo {
                league_id: league.clone(),
                country: format!("C{c}"),
                continent: format!("K{}", c % cfg.continents),
            });
            let league_quality = quality - cfg.tier_gap * (tier - 1) as f64;
            let mut teams = Vec::new();
            for _ in 0..cfg.teams_per_league {
                let team = format!("T{team_no:03}");
                team_no += 1;
                let ability = league_quality + cfg.team_ability_sd * g.unit.sample(&mut g.rng);
                let multipliers = MetricVector::from_fn(|_| g.rng.random_range(-ln_max..=ln_max).exp());
                g.truth.teams.insert(team.clone(), TeamTruth { ability, multipliers });
                let mut squad = Vec::new();
                for &position in &SQUAD {
                    let player = format!("P{player_no:04}");
                    player_no += 1;
                    let style = g.lognormal_vector(cfg.style_sigma);
                    g.truth.players.insert(player.clone(), PlayerTruth { native_position: position, style });
                    let age = g.rng.random_range(17..=33);
                    let birth_date = NaiveDate::from_ymd_opt(cfg.start_year - age, 1, 1).unwrap()
                        + Duration::days(g.rng.random_range(0..365));
                    let value = 2e6 * (0.8 * ability + 0.6 * g.unit.sample(&mut g.rng)).exp();
                    let name = format!(
                        "{} {}",
                        FIRST_NAMES[g.rng.random_range(0..FIRST_NAMES.len())],
                        LAST_NAMES[g.rng.random_range(0..LAST_NAMES.len())]
                    );
                    meta.push(PlayerMeta {
                        player_id: player.clone(),
                        name,
                        birth_date,
                        market_value: (value / 1e4).round() * 1e4,
                    });
                    squad.push(player);
                }
                g.squads.insert(team.clone(), squad);
                teams.push(team);
            }
            g.leagues.insert(league, teams);
        }
    }

    for season in 0..cfg.seasons {
        let year = cfg.start_year + season as i32;
        let window = NaiveDate::from_ymd_opt(year, 7, 1).unwrap();
        if season > 0 {
            g.transfer_window(window);
        }
        g.truth.seasons.push(SeasonTruth { start: window, leagues: g.leagues.clone() });
        let kickoff = NaiveDate::from_ymd_opt(year, 8, 1).unwrap();
        let mut tables: BTreeMap<String, TableRow> = BTreeMap::new();
        for (league, teams) in g.leagues.clone() {
            for (r, games) in Generator::fixtures(&teams).into_iter().enumerate() {
                let date = kickoff + Duration::days(7 * r as i64);
                for (i, (h, a)) in games.into_iter().enumerate() {
                    let id = format!("S{season}-{league}-R{r:02}-{i}");
                    let (hg, ag) = g.play(id, date, &league, &teams[h], &teams[a], false, season);
                    let (hg, ag) = (hg as i64, ag as i64);
                    let pts = |x: i64, y: i64| if x > y { 3 } else if x == y { 1 } else { 0 };
                    for (team, gf, ga) in [(&teams[h], hg, ag), (&teams[a], ag, hg)] {
                        let row = tables.entry(team.clone()).or_default();
                        row.points += pts(gf, ga);
                        row.goal_diff += gf - ga;
                        row.goals += gf;
                    }
                }
            }
        }
        g.cups(season, kickoff);
        g.promote_and_relegate(&tables);
    }

    let mut records = g.records;
    records.sort_by(|a, b| (a.date, &a.match_id).cmp(&(b.date, &b.match_id)));
    debug_assert!(records.iter().all(|r| r.date.year() >= cfg.start_year));
    Ok(World { records, topology, metadata: CsvMetadata::from_rows(meta), truth: g.truth })
}
