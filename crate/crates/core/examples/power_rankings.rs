//! Replay a synthetic corpus through the hierarchical Elo and show the
//! resulting 0-100 Power Rankings, including their immunity to shifting a
//! whole level of the hierarchy.

use transfer_portal::ratings::{EloConfig, Level, RatingHistory};
use transfer_portal::synthworld::{generate, WorldConfig};

fn main() -> anyhow::Result<()> {
    let world = generate(&WorldConfig::small(7))?;
    let (hierarchy, history) = RatingHistory::replay(&world.records, &world.topology, &EloConfig::default())?;
    let latest = history.latest().expect("rated matches");

    let mut table: Vec<(&String, f64)> = latest.scores.iter().map(|(t, s)| (t, *s)).collect();
    table.sort_by(|a, b| b.1.total_cmp(&a.1));
    println!("Power Rankings on {}", latest.date);
    for (team, score) in &table {
        let league = &latest.league_of[*team];
        let truth = world.truth.teams[*team].ability;
        println!("  {team}  {league:<6} {score:6.1}  raw {:8.1}  latent ability {truth:+.2}", latest.raw[*team]);
    }
    for l in &world.topology.leagues {
        println!("league {} mean {:.1}", l.league_id, latest.league_mean(&l.league_id).unwrap_or(f64::NAN));
    }

    let mut shifted = hierarchy.clone();
    shifted.shift_level(Level::Country, 400.0);
    let moved = shifted.scale_daily(latest.date);
    let worst = latest.scores.iter().map(|(t, s)| (s - moved.scores[t]).abs()).fold(0.0, f64::max);
    println!("shifting every country by +400 moves scores by at most {worst:e}");

    let (best, _) = table[0];
    println!("history of {best}:");
    for p in history.team_history(best).iter().step_by(60) {
        println!("  {}  {:6.1}", p.date, p.scaled);
    }
    Ok(())
}
