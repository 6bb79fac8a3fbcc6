//! Generate a synthetic world and write the corpus, league map, player
//! metadata and latent truth into a pipeline directory.
//!
//! `cargo run --example synth_world -- [DIR] [--small]`

use transfer_portal::pipeline::Workspace;
use transfer_portal::synthworld::{generate, WorldConfig};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let small = args.iter().any(|a| a == "--small");
    let dir = args.iter().find(|a| !a.starts_with("--")).cloned().unwrap_or_else(|| "portal-data".into());
    let cfg = if small { WorldConfig::small(7) } else { WorldConfig::default() };

    let world = generate(&cfg)?;
    let appearances: usize = world.records.iter().map(|r| r.appearances.len()).sum();
    println!("{} leagues, {} matches, {appearances} appearances", cfg.league_count(), world.records.len());
    println!(
        "{} players, {} teams, {} seasons, {} transfers",
        world.truth.players.len(),
        world.truth.teams.len(),
        world.truth.seasons.len(),
        world.truth.transfers.len()
    );
    for l in &world.topology.leagues {
        let n = world.records.iter().filter(|r| r.league_id == l.league_id).count();
        println!("  {:<6} {} / {}: {n} matches", l.league_id, l.country, l.continent);
    }

    Workspace::new(&dir).write_world(&world)?;
    println!("wrote {dir}/");
    Ok(())
}
