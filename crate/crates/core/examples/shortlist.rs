//! Rank candidates for a destination club with the shipped winger weights
//! and a set of hard filters, printed as CSV.

use transfer_portal::pipeline::{PipelineConfig, PipelineState};
use transfer_portal::predictor::Predictor;
use transfer_portal::recruitment::{build_shortlist, write_shortlist_csv, FilterSet, ShortlistRequest, WeightProfile};
use transfer_portal::synthworld::{generate, WorldConfig};
use transfer_portal::Position;

fn main() -> anyhow::Result<()> {
    let world = generate(&WorldConfig::small(7))?;
    let (state, _) = PipelineState::build(&world.records, world.topology, world.metadata, PipelineConfig::default())?;
    let weights = WeightProfile::from_toml(include_str!("../data/winger_weights.toml"))?;
    let latest = state.ratings.latest().expect("rated");
    let (team, _) = latest.scores.iter().max_by(|a, b| a.1.total_cmp(b.1)).expect("teams");

    let request = ShortlistRequest {
        destination_team: team.clone(),
        position: Position::W,
        weights: weights.into(),
        filters: FilterSet { max_age: Some(30), min_position_minutes: Some(900.0), ..FilterSet::default() },
        k: 10,
        date: None,
    };
    let predictor = Predictor::new(state.stores(), &state.transfer_model);
    let entries = build_shortlist(&predictor, &state.metadata, &request)?;
    println!("wingers for {team} (Power Ranking {:.1}):", latest.scores[team]);
    write_shortlist_csv(&entries, std::io::stdout().lock())?;
    Ok(())
}
