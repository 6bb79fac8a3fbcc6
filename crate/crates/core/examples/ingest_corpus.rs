//! Parse a match corpus, reject malformed rows with a reason, and roll one
//! match up to team-position and team lines.

use transfer_portal::ingest::{aggregate_player_positions, parse_corpus, rollup, write_csv, CorpusFormat};
use transfer_portal::synthworld::{generate, WorldConfig};
use transfer_portal::Metric;

fn main() -> anyhow::Result<()> {
    let world = generate(&WorldConfig::small(7))?;
    let mut csv = Vec::new();
    write_csv(&world.records[..20], &mut csv)?;
    let records = parse_corpus(csv.as_slice(), CorpusFormat::Csv)?;
    println!("parsed {} matches from {} bytes of CSV", records.len(), csv.len());

    let m = &records[0];
    let lines = aggregate_player_positions(m);
    let (team_positions, teams) = rollup(&lines)?;
    println!("{} {} {}-{} {}: {} player lines", m.match_id, m.home_team_id, m.home_goals, m.away_goals, m.away_team_id, lines.len());
    for l in team_positions.iter().chain(&teams) {
        let position = l.entity_key.position().map_or("-".to_string(), |p| p.to_string());
        println!(
            "  {} {:<14} {position:<3} {:>5.0} min  shots {:>4.1}  xG {:.2}",
            l.entity_key.team(),
            l.entity_key.level(),
            l.minutes,
            l.metrics[Metric::Shots],
            l.metrics[Metric::Xg]
        );
    }

    let broken = String::from_utf8(csv)?.replacen(",90,", ",130,", 1);
    match parse_corpus(broken.as_bytes(), CorpusFormat::Csv) {
        Ok(_) => println!("(no 90-minute row to corrupt)"),
        Err(e) => println!("corrupted corpus rejected: {e}"),
    }
    Ok(())
}
