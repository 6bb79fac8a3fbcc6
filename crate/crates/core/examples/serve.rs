//! Build a small synthetic pipeline in memory and serve the JSON API.
//!
//! `cargo run --example serve -- [ADDR]`, then e.g. `curl localhost:8080/version`.

use std::sync::Arc;

use transfer_portal::pipeline::{PipelineConfig, PipelineState};
use transfer_portal::server::{serve, StateHandle};
use transfer_portal::synthworld::{generate, WorldConfig};

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let addr = std::env::args().nth(1).unwrap_or_else(|| "127.0.0.1:8080".into()).parse()?;
    let world = generate(&WorldConfig::small(7))?;
    let (state, _) = tokio::task::spawn_blocking(move || {
        PipelineState::build(&world.records, world.topology, world.metadata, PipelineConfig::default())
    })
    .await??;
    println!("serving version {} on http://{addr}", state.version);
    serve(Arc::new(StateHandle::new(state)), addr).await?;
    Ok(())
}
