//! Generate a synthetic world, build the whole pipeline and score the
//! held-out forecasts against the latent truth.

use std::time::Instant;

use transfer_portal::pipeline::{PipelineConfig, PipelineState};
use transfer_portal::predictor::Split;
use transfer_portal::synthworld::{generate, oracle_compare, WorldConfig};

fn main() -> anyhow::Result<()> {
    let small = std::env::args().any(|a| a == "--small");
    let world_cfg = if small { WorldConfig::small(7) } else { WorldConfig::default() };
    let t = Instant::now();
    let world = generate(&world_cfg)?;
    println!("generated {} matches in {:.1?}", world.records.len(), t.elapsed());

    let (state, report) = PipelineState::build(&world.records, world.topology, world.metadata, PipelineConfig::default())?;
    println!("pipeline built in {:.1?}, version {}", t.elapsed(), state.version);
    println!("train examples {}, test examples {}", report.train_examples, report.test_examples.len());
    for g in &report.groups {
        println!("  {:>10}: loss {:.4} -> {:.4}, validation {:.4}", g.group.name(), g.initial_loss, g.final_loss, g.validation_mse);
    }
    for split in Split::ALL {
        if let Some(x) = report.evaluation.mean_improvement(split) {
            println!("{:>12}: realized mean improvement {:.1}%", split.name(), 100.0 * x);
        }
    }
    for transfer in [true, false] {
        let test: Vec<_> = report.test_examples.iter().filter(|e| e.is_transfer == transfer).cloned().collect();
        let forecasts = test
            .iter()
            .map(|e| state.transfer_model.predict_values(&e.input))
            .collect::<Result<Vec<_>, _>>()?;
        let o = oracle_compare(&world.truth, &test, &forecasts)?;
        let label = if transfer { "transfer" } else { "non_transfer" };
        println!("{label:>12}: oracle mean improvement {:.1}% over {} scenarios", 100.0 * o.mean_improvement(), o.n);
        for m in transfer_portal::Metric::ALL {
            println!("      {:<18} {:6.1}%", m.name(), 100.0 * o.improvement(m));
        }
    }
    Ok(())
}
