//! Invariants as property tests.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use chrono::NaiveDate;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use transfer_portal::adjustments::{adjust_team_positions, TeamAdjustmentModel};
use transfer_portal::features::{blend, blend_weight, rolling_per90, FeatureTimeline, FixedPrior, TimelineKey};
use transfer_portal::ingest::{
    aggregate_player_positions, parse_corpus, rollup, write_csv, write_ndjson, CorpusFormat, EntityKey, GameLine,
    MatchRecord,
};
use transfer_portal::linalg::ols;
use transfer_portal::nn::Standardizer;
use transfer_portal::predictor::{CohortMember, TargetGroup};
use transfer_portal::ratings::{EloConfig, Level, LeagueInfo, MatchResult, Outcome, RatingHierarchy, Topology};
use transfer_portal::recruitment::{swarm_from_cohort, weighted_scores, Highlight};
use transfer_portal::synthworld::{generate, WorldConfig};
use transfer_portal::{Metric, MetricVector, Position};

fn small_world() -> &'static Vec<MatchRecord> {
    static RECORDS: OnceLock<Vec<MatchRecord>> = OnceLock::new();
    RECORDS.get_or_init(|| generate(&WorldConfig::small(3)).expect("small world").records)
}

fn metric_vector(max: f64) -> impl Strategy<Value = MetricVector> {
    proptest::array::uniform13(0.0..max).prop_map(MetricVector)
}

fn day(n: i64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Duration::days(n)
}

fn close(a: &MetricVector, b: &MetricVector, tol: f64) -> bool {
    a.0.iter().zip(&b.0).all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

// ingest

fn sum_lines(lines: &[GameLine]) -> (f64, MetricVector) {
    lines.iter().fold((0.0, MetricVector::ZERO), |(m, v), l| (m + l.minutes, v + l.metrics))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rollup_ignores_line_order(idx in 0usize..10_000, seed in any::<u64>()) {
        let records = small_world();
        let lines = aggregate_player_positions(&records[idx % records.len()]);
        let mut shuffled = lines.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(rollup(&lines).unwrap(), rollup(&shuffled).unwrap());
    }

    #[test]
    fn rollup_conserves_minutes_and_counts(idx in 0usize..10_000) {
        let records = small_world();
        let m = &records[idx % records.len()];
        let lines = aggregate_player_positions(m);
        let (tp, team) = rollup(&lines).unwrap();
        let (pm, pv) = sum_lines(&lines);
        for agg in [&tp, &team] {
            let (am, av) = sum_lines(agg);
            prop_assert!((am - pm).abs() < 1e-9);
            prop_assert!(close(&av, &pv, 1e-12));
        }
        let (appearance_minutes, _) = m.appearances.iter().fold((0.0, ()), |(s, _), a| (s + a.minutes, ()));
        prop_assert!((appearance_minutes - pm).abs() < 1e-9);
        for t in &team {
            let children: Vec<GameLine> = tp.iter().filter(|l| l.entity_key.team() == t.entity_key.team()).cloned().collect();
            let (cm, cv) = sum_lines(&children);
            prop_assert!((cm - t.minutes).abs() < 1e-9 && close(&cv, &t.metrics, 1e-12));
        }
    }
}

#[test]
fn corpus_round_trips_through_both_formats() {
    let records = small_world();
    let mut nd = Vec::new();
    write_ndjson(records, &mut nd).unwrap();
    assert_eq!(&parse_corpus(nd.as_slice(), CorpusFormat::Ndjson).unwrap(), records);
    let mut csv = Vec::new();
    write_csv(records, &mut csv).unwrap();
    assert_eq!(&parse_corpus(csv.as_slice(), CorpusFormat::Csv).unwrap(), records);
}

// synthworld

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn synthetic_corpus_is_valid(seed in any::<u64>()) {
        let world = generate(&WorldConfig::small(seed)).unwrap();
        for r in &world.records {
            prop_assert!(r.validate().is_ok(), "{}: {:?}", r.match_id, r.validate());
        }
        let mut nd = Vec::new();
        write_ndjson(&world.records, &mut nd).unwrap();
        prop_assert_eq!(parse_corpus(nd.as_slice(), CorpusFormat::Ndjson).unwrap(), world.records);
    }
}

// ratings

fn topology() -> Topology {
    let leagues = (0..8)
        .map(|i| LeagueInfo {
            league_id: format!("L{i}"),
            country: format!("C{}", i / 2),
            continent: format!("K{}", i / 4),
        })
        .collect();
    Topology { leagues }
}

fn hierarchy() -> (RatingHierarchy, Vec<String>) {
    let mut h = RatingHierarchy::new(topology(), EloConfig::default());
    let mut teams = Vec::new();
    for i in 0..8 {
        for j in 0..3 {
            let t = format!("T{i}{j}");
            h.register_team(&t, &format!("L{i}")).unwrap();
            teams.push(t);
        }
    }
    (h, teams)
}

fn fixtures() -> impl Strategy<Value = Vec<(usize, usize, u8, bool)>> {
    proptest::collection::vec((0usize..24, 1usize..24, 0u8..3, proptest::bool::weighted(0.1)), 1..200)
}

fn replay(fixtures: &[(usize, usize, u8, bool)]) -> RatingHierarchy {
    let (mut h, teams) = hierarchy();
    for (i, &(a, off, o, neutral)) in fixtures.iter().enumerate() {
        let b = (a + off) % teams.len();
        let outcome = [Outcome::H, Outcome::D, Outcome::A][o as usize];
        let r = MatchResult { home: teams[a].clone(), away: teams[b].clone(), outcome, date: day(i as i64 / 4), neutral };
        h.apply_match(&r).unwrap();
    }
    h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn elo_updates_are_zero_sum_and_single_level(fixtures in fixtures()) {
        let (mut h, teams) = hierarchy();
        for (i, &(a, off, o, neutral)) in fixtures.iter().enumerate() {
            let b = (a + off) % teams.len();
            let outcome = [Outcome::H, Outcome::D, Outcome::A][o as usize];
            let r = MatchResult { home: teams[a].clone(), away: teams[b].clone(), outcome, date: day(i as i64), neutral };
            let u = h.apply_match(&r).unwrap();
            prop_assert_eq!(u.home_team_delta + u.away_team_delta, 0.0);
            let same_league = h.league_of(&teams[a]) == h.league_of(&teams[b]);
            match &u.group {
                Some(g) => {
                    prop_assert!(!same_league);
                    prop_assert_eq!(g.home_delta + g.away_delta, 0.0);
                    prop_assert_ne!(g.level, Level::Team);
                    prop_assert_ne!(&g.home_node, &g.away_node);
                }
                None => prop_assert!(same_league),
            }
        }
    }

    #[test]
    fn replay_is_deterministic(fixtures in fixtures()) {
        let a = replay(&fixtures).scale_daily(day(1000));
        let b = replay(&fixtures).scale_daily(day(1000));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn power_ranking_ignores_level_shifts(fixtures in fixtures(), delta in -500.0..500.0f64, level in 0usize..4) {
        let h = replay(&fixtures);
        let before = h.scale_daily(day(1000));
        let mut shifted = h.clone();
        shifted.shift_level([Level::Team, Level::League, Level::Country, Level::Continent][level], delta);
        let after = shifted.scale_daily(day(1000));
        for (t, v) in &before.scores {
            prop_assert!((v - after.scores[t]).abs() < 1e-9);
        }
        let lo = before.scores.values().copied().fold(f64::INFINITY, f64::min);
        let hi = before.scores.values().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo == 0.0 && hi == 100.0 || lo == hi);
    }
}

// features

fn stints() -> impl Strategy<Value = Vec<(f64, MetricVector)>> {
    proptest::collection::vec((1.0..120.0f64, metric_vector(5.0)), 1..40)
}

fn line(team: &str, date: NaiveDate, minutes: f64, metrics: MetricVector) -> GameLine {
    GameLine {
        entity_key: EntityKey::PlayerPosition {
            player: "P".into(),
            position: Position::W,
            team: team.into(),
            league: "L".into(),
        },
        match_id: format!("{team}{date}"),
        date,
        minutes,
        metrics,
    }
}

proptest! {
    #[test]
    fn blend_is_the_convex_combination(p in metric_vector(50.0), r in metric_vector(50.0), m in 0.0..5000.0f64, c in 1.0..3000.0f64) {
        let (x, w) = blend(&p, &r, m, c);
        prop_assert_eq!(w, f64::min(1.0, m / c));
        for j in 0..13 {
            prop_assert!((x.0[j] - ((1.0 - w) * p.0[j] + w * r.0[j])).abs() <= 1e-12);
        }
    }

    #[test]
    fn trust_is_monotone_in_minutes(m1 in 0.0..5000.0f64, dm in 0.0..5000.0f64, c in 1.0..3000.0f64) {
        let (a, b) = (blend_weight(m1, c), blend_weight(m1 + dm, c));
        prop_assert!((0.0..=1.0).contains(&a) && a <= b);
    }

    #[test]
    fn window_beyond_history_is_the_plain_rate(s in stints()) {
        let lines: Vec<GameLine> = s.iter().enumerate().map(|(i, (m, v))| line("A", day(i as i64), *m, *v)).collect();
        let (total_m, total_v) = sum_lines(&lines);
        let (rate, cum) = rolling_per90(&lines, total_m + 1.0).unwrap();
        prop_assert!((cum - total_m).abs() < 1e-9);
        prop_assert!(close(&rate, &total_v.scale(90.0 / total_m), 1e-12));
    }

    #[test]
    fn window_conserves_a_constant_rate(minutes in proptest::collection::vec(1.0..120.0f64, 1..40), per90 in metric_vector(5.0), window in 50.0..3000.0f64) {
        let lines: Vec<GameLine> = minutes.iter().enumerate().map(|(i, &m)| line("A", day(i as i64), m, per90.scale(m / 90.0))).collect();
        let (rate, _) = rolling_per90(&lines, window).unwrap();
        prop_assert!(close(&rate, &per90, 1e-9));
    }

    #[test]
    fn a_new_context_resets_the_epoch(first in stints(), second in stints()) {
        let key = TimelineKey::PlayerPosition { player: "P".into(), position: Position::W };
        let mut tl = FeatureTimeline::new(key, 3000.0, 1000.0);
        let mut prior = FixedPrior(MetricVector::splat(1.0));
        let mut d = 0;
        for (team, stints) in [("A", &first), ("B", &second)] {
            for (m, v) in stints {
                tl.advance(&line(team, day(d), *m, *v), &mut prior).unwrap();
                d += 1;
            }
        }
        prop_assert_eq!(tl.epochs.len(), 2);
        let s = tl.state(1, 0);
        prop_assert!((s.cum_minutes - second[0].0).abs() < 1e-12);
        let expected: f64 = second.iter().map(|(m, _)| m).sum();
        prop_assert!((tl.current().unwrap().cum_minutes - expected).abs() < 1e-9);
    }
}

// adjustments

proptest! {
    #[test]
    fn ols_residuals_are_orthogonal_to_the_design(
        rows in proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -20.0..20.0f64), 10..200)
    ) {
        let design: Vec<f64> = rows.iter().flat_map(|&(a, b, _)| [1.0, a, b]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let fit = ols(&design, 3, &y);
        prop_assume!(fit.is_ok());
        let beta = fit.unwrap().coefficients;
        let mut grad = [0.0; 3];
        let mut scale = [0.0; 3];
        for (row, yi) in design.chunks_exact(3).zip(&y) {
            let r = yi - row.iter().zip(&beta).map(|(x, b)| x * b).sum::<f64>();
            for k in 0..3 {
                grad[k] += row[k] * r;
                scale[k] += (row[k] * yi).abs() + 1.0;
            }
        }
        for k in 0..3 {
            prop_assert!(grad[k].abs() <= 1e-6 * scale[k], "gradient {} vs scale {}", grad[k], scale[k]);
        }
    }

    #[test]
    fn team_model_offsets_the_expectation(alpha in -2.0..2.0f64, beta in -2.0..2.0f64, x in 0.0..10.0f64, z in -3.0..3.0f64) {
        let model = TeamAdjustmentModel::from_coefficients([[alpha, beta]; 13]);
        for m in Metric::ALL {
            let raw = model.predict_raw(m, x, z).unwrap();
            prop_assert!((raw - (x + alpha + beta * z)).abs() < 1e-12);
            prop_assert_eq!(model.predict(m, x, z).unwrap(), raw.max(0.0));
        }
        prop_assert_eq!(TeamAdjustmentModel::naive().predict_raw(Metric::Xg, x, z).unwrap(), x);
    }

    #[test]
    fn position_adjustment_preserves_ratios(old in metric_vector(10.0), new in metric_vector(10.0), st in metric_vector(5.0), cb in metric_vector(5.0)) {
        let old = old.map(|v| v + 0.01);
        let positions: BTreeMap<Position, MetricVector> = [(Position::ST, st), (Position::CB, cb)].into();
        let out = adjust_team_positions(&old, &new, &positions).unwrap();
        for (p, v) in &positions {
            for m in Metric::ALL {
                prop_assert!((out[p][m] - v[m] * new[m] / old[m]).abs() <= 1e-12 * (1.0 + out[p][m].abs()));
            }
        }
    }
}

// nn and predictor

proptest! {
    #[test]
    fn standardizer_round_trips(rows in proptest::collection::vec(proptest::array::uniform4(-1e3..1e3f64), 1..50)) {
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let s = Standardizer::fit(&flat, 4);
        for row in &rows {
            let mut r = *row;
            s.apply(&mut r);
            s.invert(&mut r);
            for (a, b) in r.iter().zip(row) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
        }
    }
}

#[test]
fn target_groups_partition_the_metrics() {
    for m in Metric::ALL {
        let owners: Vec<TargetGroup> = TargetGroup::ALL.into_iter().filter(|g| g.targets().contains(&m)).collect();
        assert_eq!(owners, vec![TargetGroup::of(m)], "{m}");
    }
    let total: usize = TargetGroup::ALL.iter().map(|g| g.targets().len()).sum();
    assert_eq!(total, Metric::ALL.len());
}

// recruitment

fn values_and_weights() -> impl Strategy<Value = (Vec<MetricVector>, Vec<(Metric, f64)>)> {
    (
        proptest::collection::vec(metric_vector(10.0), 1..15),
        proptest::collection::vec((0usize..13, 0.0..=1.0f64), 1..6),
    )
        .prop_map(|(v, w)| {
            let mut weights: Vec<(Metric, f64)> = w.into_iter().map(|(i, x)| (Metric::ALL[i], x)).collect();
            weights.sort_by_key(|(m, _)| *m);
            weights.dedup_by_key(|(m, _)| *m);
            weights[0].1 = weights[0].1.max(0.1);
            (v, weights)
        })
}

proptest! {
    #[test]
    fn scores_stay_in_unit_interval((values, weights) in values_and_weights()) {
        let s = weighted_scores(&values, &weights).unwrap();
        prop_assert!(s.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn scores_ignore_weight_scale((values, weights) in values_and_weights(), k in 0.01..100.0f64) {
        let scaled: Vec<(Metric, f64)> = weights.iter().map(|&(m, w)| (m, w * k)).collect();
        let (a, b) = (weighted_scores(&values, &weights).unwrap(), weighted_scores(&values, &scaled).unwrap());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn raising_a_weighted_metric_never_lowers_a_score((values, weights) in values_and_weights(), who in 0usize..15, t in 0.0..1.0f64) {
        let i = who % values.len();
        let m = weights[0].0;
        let hi = values.iter().map(|v| v[m]).fold(f64::NEG_INFINITY, f64::max);
        let mut better = values.clone();
        better[i][m] += t * (hi - better[i][m]);
        let (a, b) = (weighted_scores(&values, &weights).unwrap(), weighted_scores(&better, &weights).unwrap());
        prop_assert!(b[i] >= a[i] - 1e-12);
    }

    #[test]
    fn swarm_is_permutation_equivariant(vals in proptest::collection::vec(0.0..5.0f64, 1..30), subject in 0.0..5.0f64, seed in any::<u64>()) {
        let cohort: Vec<CohortMember> = vals
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let mut values = MetricVector::ZERO;
                values[Metric::Xg] = v;
                CohortMember { player: format!("P{i}"), team: format!("T{}", i % 3), values }
            })
            .collect();
        let mut shuffled = cohort.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let subject = ("S", "T0", subject);
        let a = swarm_from_cohort(Metric::Xg, "L", Position::W, subject, &cohort);
        let b = swarm_from_cohort(Metric::Xg, "L", Position::W, subject, &shuffled);
        prop_assert_eq!(a.subject_percentile, b.subject_percentile);
        prop_assert_eq!(&a.points[0], &b.points[0]);
        prop_assert_eq!(a.points[0].highlight, Highlight::Subject);
        let key = |d: &transfer_portal::recruitment::SwarmDataset| {
            let mut p: Vec<String> = d.points.iter().map(|p| format!("{}:{}:{:?}", p.player_id, p.value, p.highlight)).collect();
            p.sort();
            p
        };
        prop_assert_eq!(key(&a), key(&b));
        prop_assert!((0.0..=100.0).contains(&a.subject_percentile));
    }
}
