//! Train one shared-trunk, multi-head network from scratch on a toy
//! regression and verify its gradients numerically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transfer_portal::nn::{gradient_check, train, Architecture, Dataset, HyperParams, TrainConfig};

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut make = |n: usize| {
        let mut d = Dataset::new(4, 2);
        for _ in 0..n {
            let x: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let y = [x[0] * x[1] + 0.5 * x[2], (x[3] * 2.0).sin()];
            d.push(&x, &y);
        }
        d
    };
    let (data, valid) = (make(2000), make(500));

    let hp = HyperParams { learning_rate: 0.05, batch_size: 32, dropout: 0.0, trunk_units: 32, head_units: 16 };
    let out = train(&data, Some(&valid), &hp, &TrainConfig::default(), 3)?;
    println!("loss {:.4} -> {:.4}, validation {:.4} after {} epochs", out.initial_loss, out.final_loss, out.best_validation, out.epochs);
    println!("f(0.5, 0.5, 0.2, 0.3) = {:?}, truth [0.35, {:.3}]", out.net.forward(&[0.5, 0.5, 0.2, 0.3])?, 0.6f64.sin());

    let arch = Architecture { input_dim: 4, trunk_units: 32, head_units: 16, outputs: 2 };
    let check = gradient_check(arch, 100, 64, 1e-6, 9)?;
    println!("{} parameters; gradient check over {} points: max relative error {:.2e}", arch.parameter_count(), check.points, check.max_relative_error);
    Ok(())
}
