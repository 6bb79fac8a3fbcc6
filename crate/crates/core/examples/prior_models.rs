//! Fit the team and player prior models on a synthetic world and show the
//! proportional rescaling of team-position values.

use std::collections::BTreeMap;

use transfer_portal::adjustments::adjust_team_positions;
use transfer_portal::ingest::aggregate_corpus;
use transfer_portal::pipeline::{fit_adjustments, rate, PipelineConfig};
use transfer_portal::synthworld::{generate, WorldConfig};
use transfer_portal::{Metric, MetricVector, Position};

fn main() -> anyhow::Result<()> {
    let cfg = PipelineConfig::default();
    let world = generate(&WorldConfig::small(7))?;
    let ratings = rate(&world.records, &world.topology, &cfg)?;
    let models = fit_adjustments(&aggregate_corpus(&world.records), &ratings, &cfg)?;

    let team = models.team.coefficients.expect("fitted");
    println!("team model  y = x + α + β·z");
    for m in Metric::ALL {
        let [a, b] = team[m.index()];
        let se = &models.team.diagnostics[m.index()].standard_errors;
        println!("  {:<18} α {a:+.4} ({:.4})  β {b:+.4} ({:.4})", m.name(), se[0], se[1]);
    }
    let player = models.player.coefficients.expect("fitted");
    println!("player model  [α, β1..β6], n = {}", models.player.diagnostics[0].n);
    for m in Metric::ALL {
        let c: Vec<String> = player[m.index()].iter().map(|v| format!("{v:+.3}")).collect();
        println!("  {:<18} {}", m.name(), c.join(" "));
    }

    let mut old = MetricVector::splat(1.0);
    let mut new = MetricVector::splat(1.0);
    old[Metric::Xg] = 1.5;
    new[Metric::Xg] = 0.9;
    let mut st = MetricVector::ZERO;
    st[Metric::Xg] = 1.0;
    let mut cb = MetricVector::ZERO;
    cb[Metric::Xg] = 0.05;
    let positions = BTreeMap::from([(Position::ST, st), (Position::CB, cb)]);
    let scaled = adjust_team_positions(&old, &new, &positions)?;
    println!("team xG 1.5 -> 0.9: ST {:.2} -> {:.2}, CB {:.2} -> {:.3}", 1.0, scaled[&Position::ST][Metric::Xg], 0.05, scaled[&Position::CB][Metric::Xg]);
    Ok(())
}
