//! Compare one player's forecasts at several destinations: verdicts against
//! staying put, and where each forecast sits in the destination league.

use transfer_portal::pipeline::{PipelineConfig, PipelineState};
use transfer_portal::predictor::Predictor;
use transfer_portal::recruitment::{swarm, verdict, WeightProfile};
use transfer_portal::synthworld::{generate, WorldConfig};
use transfer_portal::{Metric, Position};

fn main() -> anyhow::Result<()> {
    let world = generate(&WorldConfig::small(7))?;
    let (state, _) = PipelineState::build(&world.records, world.topology, world.metadata, PipelineConfig::default())?;
    let predictor = Predictor::new(state.stores(), &state.transfer_model);
    let date = state.stores().next_date().expect("rated");
    let weights = WeightProfile::winger();

    let ((player, _), tl) = state
        .features
        .players
        .iter()
        .rev()
        .find(|((_, p), tl)| *p == Position::W && tl.current().is_some_and(|s| s.cum_minutes >= 1000.0))
        .expect("an established winger");
    let home = tl.current().unwrap().context.clone();
    let origin = predictor.predict(&predictor.stay_scenario(player, Position::W, date)?)?;
    println!("{player} at {} ({}): xG {:.3}, xA {:.3}", home.team, home.league, origin.values[Metric::Xg], origin.values[Metric::Xa]);

    let latest = state.ratings.latest().unwrap();
    let mut teams: Vec<(&String, f64)> = latest.scores.iter().map(|(t, s)| (t, *s)).collect();
    teams.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (team, pr) in teams.iter().step_by(teams.len() / 4).take(4) {
        if **team == home.team {
            continue;
        }
        let scenario = predictor.move_scenario(player, Position::W, team, date)?;
        let p = predictor.predict(&scenario)?;
        let v = verdict(&p, &origin, &weights, &state.config.verdict);
        let s = swarm(&predictor, &scenario.destination_league, Position::W, Metric::Xg, &scenario)?;
        println!(
            "  -> {team} (PR {pr:5.1}, {}): xG {:.3}  {:?} (percentile {:.0}, retention {:.2}); xG swarm of {} puts them at {:.0}",
            scenario.destination_league, p.values[Metric::Xg], v.verdict, v.percentile, v.retention, s.points.len(), s.subject_percentile
        );
    }
    Ok(())
}
