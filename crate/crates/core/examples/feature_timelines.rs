//! Rolling per-90 features with prior blending: how a player's value moves
//! from the prior to their own rate as minutes accrue, and how a transfer
//! opens a fresh epoch.

use chrono::NaiveDate;
use transfer_portal::features::{FeatureTimeline, FixedPrior, RagStatus, TimelineKey, WindowConfig};
use transfer_portal::ingest::{EntityKey, GameLine};
use transfer_portal::{Metric, MetricVector, Position};

fn game(team: &str, league: &str, day: i64, xg: f64) -> GameLine {
    let mut metrics = MetricVector::ZERO;
    metrics[Metric::Xg] = xg;
    GameLine {
        entity_key: EntityKey::PlayerPosition { player: "P1".into(), position: Position::ST, team: team.into(), league: league.into() },
        match_id: format!("M{day}"),
        date: NaiveDate::from_ymd_opt(2023, 8, 1).unwrap() + chrono::Duration::days(day),
        minutes: 90.0,
        metrics,
    }
}

fn main() -> anyhow::Result<()> {
    let cfg = WindowConfig::default();
    let key = TimelineKey::PlayerPosition { player: "P1".into(), position: Position::ST };
    let mut tl = FeatureTimeline::new(key, cfg.player_window_minutes, cfg.prior_constant);
    let mut prior = MetricVector::ZERO;
    prior[Metric::Xg] = 0.30;
    let mut provider = FixedPrior(prior);

    println!("window {} min, prior constant {} min, red under {} min", cfg.player_window_minutes, cfg.prior_constant, cfg.red_minutes);
    println!("{:>4} {:>6} {:>8} {:>8} {:>7} {:>8} rag", "game", "team", "minutes", "raw xG", "weight", "blended");
    for g in 0..24 {
        let (team, league) = if g < 14 { ("T01", "L1") } else { ("T22", "L2") };
        tl.advance(&game(team, league, 7 * g, 0.6), &mut provider)?;
        let s = tl.current().unwrap();
        let rag: RagStatus = tl.rag_at(s.date, cfg.red_minutes);
        println!(
            "{g:>4} {:>6} {:>8.0} {:>8.3} {:>7.2} {:>8.3} {rag:?}",
            s.context.team, s.cum_minutes, s.raw[Metric::Xg], s.weight, s.blended[Metric::Xg]
        );
    }
    println!("epochs: {}", tl.epochs.len());
    Ok(())
}
