//! Shared fixtures for the integration tests.

#![allow(dead_code)]

use transfer_portal::pipeline::PipelineState;
use transfer_portal::Position;

/// A winger active on the last match day, with a club in another league.
pub struct Subject {
    pub player: String,
    pub position: Position,
    pub team: String,
    pub league: String,
    pub destination: String,
    pub destination_league: String,
}

pub fn subject(state: &PipelineState) -> Subject {
    let last = state.stores().next_date().expect("rated corpus");
    let ((player, position), tl) = state
        .features
        .players
        .iter()
        .filter(|((_, p), _)| *p == Position::W)
        .max_by(|a, b| {
            let (x, y) = (a.1.current().unwrap(), b.1.current().unwrap());
            (x.date, x.cum_minutes).partial_cmp(&(y.date, y.cum_minutes)).unwrap()
        })
        .expect("a winger");
    let s = tl.current().unwrap();
    assert!(s.date < last);
    let snapshot = state.ratings.latest().unwrap();
    let (destination, destination_league) = snapshot
        .league_of
        .iter()
        .find(|(_, l)| **l != s.context.league)
        .map(|(t, l)| (t.clone(), l.clone()))
        .expect("a second league");
    Subject {
        player: player.clone(),
        position: *position,
        team: s.context.team.clone(),
        league: s.context.league.clone(),
        destination,
        destination_league,
    }
}
