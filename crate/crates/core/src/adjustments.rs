//! Prior models for data-poor entities.
//!
//! * The team model predicts a team's per-90 values in a new league from the
//!   league's naive expectation (used as an offset) and the team's robust
//!   z-score in its previous league: `y = x + α + β·z`.
//! * Team-position values are moved by the same per-metric percentage as the
//!   team values.
//! * The player model regresses the per-90 value in a new context on the
//!   player's previous value, the new teammates' average at the position,
//!   the old-vs-new teammate difference, and a cubic in the change of
//!   relative ability.
//!
//! All fits are per-metric ordinary least squares, and every prediction is
//! clamped at zero because per-90 counts cannot be negative.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ols;
use crate::metrics::{Metric, MetricVector, Position, METRIC_COUNT};

pub const SCHEMA_VERSION: u32 = 1;
pub const TEAM_MIN_ROWS: usize = 3;
pub const PLAYER_MIN_ROWS: usize = 10;
pub const PLAYER_COEFFICIENTS: usize = 7;

/// Linear-interpolated sample quantile (`q` in [0, 1]).
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

/// League median of the blended per-90 values at one level.
pub fn naive_league_expectation(league_id: &str, values: &[f64]) -> Result<f64> {
    median(values).ok_or_else(|| Error::EmptyLeague(league_id.to_string()))
}

/// Robust z-score `(v - median) / IQR`; 0 when the distribution is degenerate.
pub fn relative_feature_value(v: f64, distribution: &[f64]) -> f64 {
    if distribution.len() < 2 {
        return 0.0;
    }
    let (Some(p25), Some(p50), Some(p75)) =
        (quantile(distribution, 0.25), median(distribution), quantile(distribution, 0.75))
    else {
        return 0.0;
    };
    let iqr = p75 - p25;
    if iqr > 0.0 {
        (v - p50) / iqr
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub n: usize,
    pub residual_variance: f64,
    pub standard_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeamRow {
    pub team: String,
    pub date: NaiveDate,
    /// Naive league expectation in the new league.
    pub x: MetricVector,
    /// Relative feature value in the previous league.
    pub z: MetricVector,
    /// Team per-90 once the prior is fully discarded in the new league.
    pub y: MetricVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlayerRow {
    pub player: String,
    pub position: Position,
    pub date: NaiveDate,
    pub x1: MetricVector,
    pub x2: MetricVector,
    pub x3: MetricVector,
    pub x4: f64,
    pub y: MetricVector,
}

/// Per-metric `(α, β)` of `y = x + α + β·z`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TeamAdjustmentModel {
    pub coefficients: Option<[[f64; 2]; METRIC_COUNT]>,
    pub diagnostics: Vec<FitDiagnostics>,
}

impl TeamAdjustmentModel {
    /// α = β = 0: the prior is the naive league expectation itself.
    pub fn naive() -> Self {
        TeamAdjustmentModel { coefficients: Some([[0.0; 2]; METRIC_COUNT]), diagnostics: Vec::new() }
    }

    pub fn from_coefficients(coefficients: [[f64; 2]; METRIC_COUNT]) -> Self {
        TeamAdjustmentModel { coefficients: Some(coefficients), diagnostics: Vec::new() }
    }

    pub fn is_fitted(&self) -> bool {
        self.coefficients.is_some()
    }

    /// Unclamped `x + α + β·z`.
    pub fn predict_raw(&self, metric: Metric, x: f64, z: f64) -> Result<f64> {
        let c = self.coefficients.as_ref().ok_or(Error::UnfittedModel)?[metric.index()];
        Ok(x + c[0] + c[1] * z)
    }

    pub fn predict(&self, metric: Metric, x: f64, z: f64) -> Result<f64> {
        Ok(self.predict_raw(metric, x, z)?.max(0.0))
    }

    pub fn predict_vector(&self, x: &MetricVector, z: &MetricVector) -> Result<MetricVector> {
        let mut out = MetricVector::ZERO;
        for m in Metric::ALL {
            out[m] = self.predict(m, x[m], z[m])?;
        }
        Ok(out)
    }
}

pub fn predict_team_prior(model: &TeamAdjustmentModel, metric: Metric, x: f64, z: f64) -> Result<f64> {
    model.predict(metric, x, z)
}

pub fn fit_team_adjustment(rows: &[TeamRow]) -> Result<TeamAdjustmentModel> {
    if rows.len() < TEAM_MIN_ROWS {
        return Err(Error::InsufficientData { needed: TEAM_MIN_ROWS, got: rows.len() });
    }
    let mut coefficients = [[0.0; 2]; METRIC_COUNT];
    let mut diagnostics = Vec::with_capacity(METRIC_COUNT);
    for m in Metric::ALL {
        let design: Vec<f64> = rows.iter().flat_map(|r| [1.0, r.z[m]]).collect();
        let target: Vec<f64> = rows.iter().map(|r| r.y[m] - r.x[m]).collect();
        let fit = ols(&design, 2, &target)?;
        coefficients[m.index()] = [fit.coefficients[0], fit.coefficients[1]];
        diagnostics.push(FitDiagnostics {
            n: fit.n,
            residual_variance: fit.residual_variance,
            standard_errors: fit.standard_errors,
        });
    }
    Ok(TeamAdjustmentModel { coefficients: Some(coefficients), diagnostics })
}

/// Scales every position's value of metric j by `team_new_j / team_old_j`.
pub fn adjust_team_positions(
    team_old: &MetricVector,
    team_new: &MetricVector,
    positions: &BTreeMap<Position, MetricVector>,
) -> Result<BTreeMap<Position, MetricVector>> {
    let mut out = positions.clone();
    for m in Metric::ALL {
        let (old, new) = (team_old[m], team_new[m]);
        for (pos, v) in out.iter_mut() {
            if old == 0.0 {
                if v[m] != 0.0 {
                    return Err(Error::ZeroDenominator { metric: m.to_string(), position: pos.to_string() });
                }
                continue;
            }
            v[m] *= new / old;
        }
    }
    Ok(out)
}

/// Per-metric `[α, β1..β6]` over `[1, x1, x2, x3, x4, x4², x4³]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlayerAdjustmentModel {
    pub coefficients: Option<[[f64; PLAYER_COEFFICIENTS]; METRIC_COUNT]>,
    pub diagnostics: Vec<FitDiagnostics>,
}

fn player_regressors(x1: f64, x2: f64, x3: f64, x4: f64) -> [f64; PLAYER_COEFFICIENTS] {
    [1.0, x1, x2, x3, x4, x4 * x4, x4 * x4 * x4]
}

impl PlayerAdjustmentModel {
    /// β1 = 1, everything else 0: the player carries their previous value.
    pub fn persistence() -> Self {
        let mut c = [[0.0; PLAYER_COEFFICIENTS]; METRIC_COUNT];
        for row in &mut c {
            row[1] = 1.0;
        }
        PlayerAdjustmentModel { coefficients: Some(c), diagnostics: Vec::new() }
    }

    pub fn from_coefficients(coefficients: [[f64; PLAYER_COEFFICIENTS]; METRIC_COUNT]) -> Self {
        PlayerAdjustmentModel { coefficients: Some(coefficients), diagnostics: Vec::new() }
    }

    pub fn is_fitted(&self) -> bool {
        self.coefficients.is_some()
    }

    pub fn predict_raw(&self, metric: Metric, x1: f64, x2: f64, x3: f64, x4: f64) -> Result<f64> {
        let c = self.coefficients.as_ref().ok_or(Error::UnfittedModel)?[metric.index()];
        Ok(player_regressors(x1, x2, x3, x4).iter().zip(c).map(|(a, b)| a * b).sum())
    }

    pub fn predict(&self, metric: Metric, x1: f64, x2: f64, x3: f64, x4: f64) -> Result<f64> {
        Ok(self.predict_raw(metric, x1, x2, x3, x4)?.max(0.0))
    }

    pub fn predict_vector(
        &self,
        x1: &MetricVector,
        x2: &MetricVector,
        x3: &MetricVector,
        x4: f64,
    ) -> Result<MetricVector> {
        let mut out = MetricVector::ZERO;
        for m in Metric::ALL {
            out[m] = self.predict(m, x1[m], x2[m], x3[m], x4)?;
        }
        Ok(out)
    }
}

pub fn predict_player_prior(
    model: &PlayerAdjustmentModel,
    metric: Metric,
    x1: f64,
    x2: f64,
    x3: f64,
    x4: f64,
) -> Result<f64> {
    model.predict(metric, x1, x2, x3, x4)
}

pub fn fit_player_adjustment(rows: &[PlayerRow]) -> Result<PlayerAdjustmentModel> {
    if rows.len() < PLAYER_MIN_ROWS {
        return Err(Error::InsufficientData { needed: PLAYER_MIN_ROWS, got: rows.len() });
    }
    let mut coefficients = [[0.0; PLAYER_COEFFICIENTS]; METRIC_COUNT];
    let mut diagnostics = Vec::with_capacity(METRIC_COUNT);
    for m in Metric::ALL {
        let design: Vec<f64> =
            rows.iter().flat_map(|r| player_regressors(r.x1[m], r.x2[m], r.x3[m], r.x4)).collect();
        let target: Vec<f64> = rows.iter().map(|r| r.y[m]).collect();
        let fit = ols(&design, PLAYER_COEFFICIENTS, &target)?;
        coefficients[m.index()].copy_from_slice(&fit.coefficients);
        diagnostics.push(FitDiagnostics {
            n: fit.n,
            residual_variance: fit.residual_variance,
            standard_errors: fit.standard_errors,
        });
    }
    Ok(PlayerAdjustmentModel { coefficients: Some(coefficients), diagnostics })
}

/// The pair of fitted prior models used by the feature pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentModels {
    pub team: TeamAdjustmentModel,
    pub player: PlayerAdjustmentModel,
}

impl Default for AdjustmentModels {
    /// Naive team priors and persistence player priors.
    fn default() -> Self {
        AdjustmentModels { team: TeamAdjustmentModel::naive(), player: PlayerAdjustmentModel::persistence() }
    }
}

#[derive(Serialize, Deserialize)]
struct CoefficientFile {
    schema_version: u32,
    team: BTreeMap<Metric, Vec<f64>>,
    player: BTreeMap<Metric, Vec<f64>>,
}

impl AdjustmentModels {
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        let team = self.team.coefficients.ok_or(Error::UnfittedModel)?;
        let player = self.player.coefficients.ok_or(Error::UnfittedModel)?;
        let file = CoefficientFile {
            schema_version: SCHEMA_VERSION,
            team: Metric::ALL.iter().map(|&m| (m, team[m.index()].to_vec())).collect(),
            player: Metric::ALL.iter().map(|&m| (m, player[m.index()].to_vec())).collect(),
        };
        serde_json::to_writer_pretty(out, &file)?;
        Ok(())
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        let file: CoefficientFile = serde_json::from_reader(input)?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion(file.schema_version));
        }
        let mut team = [[0.0; 2]; METRIC_COUNT];
        let mut player = [[0.0; PLAYER_COEFFICIENTS]; METRIC_COUNT];
        for m in Metric::ALL {
            let t = file.team.get(&m).ok_or_else(|| Error::Config(format!("team coefficients missing `{m}`")))?;
            let p = file.player.get(&m).ok_or_else(|| Error::Config(format!("player coefficients missing `{m}`")))?;
            if t.len() != 2 || p.len() != PLAYER_COEFFICIENTS {
                return Err(Error::Config(format!("wrong coefficient count for `{m}`")));
            }
            team[m.index()].copy_from_slice(t);
            player[m.index()].copy_from_slice(p);
        }
        Ok(AdjustmentModels {
            team: TeamAdjustmentModel::from_coefficients(team),
            player: PlayerAdjustmentModel::from_coefficients(player),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2022, 8, 1).unwrap()
    }

    #[test]
    fn medians_and_quantiles() {
        assert_eq!(naive_league_expectation("L", &[1.2]).unwrap(), 1.2);
        assert_eq!(naive_league_expectation("L", &[1.6, 0.8, 1.0]).unwrap(), 1.0);
        assert_eq!(naive_league_expectation("L", &[1.6, 0.8, 1.0, 1.0]).unwrap(), 1.0);
        assert!(matches!(naive_league_expectation("L", &[]), Err(Error::EmptyLeague(_))));
        assert_eq!(quantile(&[0.0, 1.0, 2.0, 3.0, 4.0], 0.25), Some(1.0));
    }

    #[test]
    fn robust_z() {
        let d = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(relative_feature_value(2.0, &d), 0.0);
        assert_eq!(relative_feature_value(4.0, &d), 1.0);
        assert_eq!(relative_feature_value(9.0, &[3.0, 3.0, 3.0]), 0.0);
        assert_eq!(relative_feature_value(9.0, &[3.0]), 0.0);
    }

    fn team_rows(alpha: f64, beta: f64, sigma: f64, n: usize, seed: u64) -> Vec<TeamRow> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let x = MetricVector::from_fn(|_| rng.random_range(0.2..2.0));
                let z = MetricVector::from_fn(|_| rng.random_range(-2.0..2.0));
                let y = MetricVector::from_fn(|j| {
                    let noise: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                    x.0[j] + alpha + beta * z.0[j] + sigma * noise
                });
                TeamRow { team: format!("t{i}"), date: day(), x, z, y }
            })
            .collect()
    }

    #[test]
    fn team_fit_noiseless_exact() {
        let model = fit_team_adjustment(&team_rows(0.1, 0.4, 0.0, 30, 1)).unwrap();
        for c in model.coefficients.unwrap() {
            assert!((c[0] - 0.1).abs() < 1e-10 && (c[1] - 0.4).abs() < 1e-10, "{c:?}");
        }
    }

    #[test]
    fn team_fit_errors() {
        let rows = team_rows(0.1, 0.4, 0.0, 2, 1);
        assert!(matches!(fit_team_adjustment(&rows), Err(Error::InsufficientData { .. })));
        let mut rows = team_rows(0.1, 0.4, 0.0, 10, 1);
        for r in &mut rows {
            r.z = MetricVector::ZERO;
        }
        assert!(matches!(fit_team_adjustment(&rows), Err(Error::SingularDesign)));
    }

    #[test]
    fn team_prediction() {
        assert!(matches!(TeamAdjustmentModel::default().predict(Metric::Xg, 1.0, 0.0), Err(Error::UnfittedModel)));
        let naive = TeamAdjustmentModel::naive();
        assert_eq!(naive.predict(Metric::Xg, 1.37, 2.0).unwrap(), 1.37);
        let m = TeamAdjustmentModel::from_coefficients([[0.1, 0.4]; METRIC_COUNT]);
        assert!((predict_team_prior(&m, Metric::Xg, 1.0, 0.5).unwrap() - 1.3).abs() < 1e-15);
        let neg = TeamAdjustmentModel::from_coefficients([[-0.2, 0.0]; METRIC_COUNT]);
        assert_eq!(neg.predict(Metric::Xg, 0.05, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn team_position_scaling() {
        let mut old = MetricVector::ZERO;
        old[Metric::Xg] = 1.5;
        old[Metric::TotalPasses] = 400.0;
        let mut new = old;
        new[Metric::Xg] = 0.9;
        let mut st = MetricVector::ZERO;
        st[Metric::Xg] = 1.0;
        st[Metric::TotalPasses] = 20.0;
        let mut cb = MetricVector::ZERO;
        cb[Metric::Xg] = 0.05;
        cb[Metric::TotalPasses] = 60.0;
        let positions = BTreeMap::from([(Position::ST, st), (Position::CB, cb)]);
        let out = adjust_team_positions(&old, &new, &positions).unwrap();
        assert!((out[&Position::ST][Metric::Xg] - 0.6).abs() < 1e-12);
        assert!((out[&Position::CB][Metric::Xg] - 0.03).abs() < 1e-12);
        assert_eq!(out[&Position::ST][Metric::TotalPasses], 20.0);
        assert_eq!(adjust_team_positions(&old, &old, &positions).unwrap(), positions);

        let mut bad = positions.clone();
        bad.get_mut(&Position::ST).unwrap()[Metric::Shots] = 1.0;
        assert!(matches!(adjust_team_positions(&old, &new, &bad), Err(Error::ZeroDenominator { .. })));
    }

    #[test]
    fn player_persistence_limit() {
        let m = PlayerAdjustmentModel::persistence();
        assert_eq!(m.predict(Metric::Xa, 0.31, 0.9, -0.2, 17.0).unwrap(), 0.31);
        assert!(matches!(
            PlayerAdjustmentModel::default().predict(Metric::Xa, 0.0, 0.0, 0.0, 0.0),
            Err(Error::UnfittedModel)
        ));
    }

    #[test]
    fn player_fit_noiseless_exact() {
        let truth = [0.05, 0.6, 0.3, -0.2, 0.004, -0.0002, 0.00001];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<PlayerRow> = (0..200)
            .map(|i| {
                let x1 = MetricVector::from_fn(|_| rng.random_range(0.0..3.0));
                let x2 = MetricVector::from_fn(|_| rng.random_range(0.0..3.0));
                let x3 = MetricVector::from_fn(|_| rng.random_range(-1.0..1.0));
                let x4: f64 = rng.random_range(-40.0..40.0);
                let y = MetricVector::from_fn(|j| {
                    player_regressors(x1.0[j], x2.0[j], x3.0[j], x4).iter().zip(truth).map(|(a, b)| a * b).sum()
                });
                PlayerRow { player: format!("p{i}"), position: Position::W, date: day(), x1, x2, x3, x4, y }
            })
            .collect();
        let model = fit_player_adjustment(&rows).unwrap();
        for c in model.coefficients.unwrap() {
            for (got, want) in c.iter().zip(truth) {
                assert!((got - want).abs() < 1e-8, "{got} vs {want}");
            }
        }
        assert!(matches!(fit_player_adjustment(&rows[..5]), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let models = AdjustmentModels {
            team: TeamAdjustmentModel::from_coefficients([[0.1, -0.3]; METRIC_COUNT]),
            player: PlayerAdjustmentModel::persistence(),
        };
        let mut buf = Vec::new();
        models.write_json(&mut buf).unwrap();
        assert_eq!(AdjustmentModels::read_json(&buf[..]).unwrap(), models);
        let bumped = String::from_utf8(buf).unwrap().replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(matches!(AdjustmentModels::read_json(bumped.as_bytes()), Err(Error::SchemaVersion(9))));
    }
}
