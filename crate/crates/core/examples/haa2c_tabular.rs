//! Tabular softmax HAA2C, with exact advantages and with sampled GAE advantages.
//!
//! cargo run --example haa2c_tabular

use haml::baselines::{haa2c_step, Critic, Haa2cConfig, Haa2cMode, SoftmaxPolicyParams};
use haml::game::{random_game, RandomGameSpec};

fn main() -> haml::Result<()> {
    let game = random_game(&RandomGameSpec::new(2, 3, &[2, 2], 0.9, (-1.0, 1.0)))?;
    let modes = [
        ("exact", Haa2cConfig::default()),
        (
            "monte carlo, batch-average critic",
            Haa2cConfig { mode: Haa2cMode::MonteCarlo, critic: Critic::BatchAverage, ..Haa2cConfig::default() },
        ),
    ];
    for (name, cfg) in modes {
        let mut params = SoftmaxPolicyParams::zeros(&game);
        println!("{name}");
        for k in 0..20 {
            let (next, rec) = haa2c_step(&game, &params, &cfg, 11, k)?;
            params = next;
            if k % 4 == 0 || k == 19 {
                println!("  k={k:>2} order {:?} J {:.6} -> {:.6}", rec.permutation, rec.j_before, rec.j_after);
            }
        }
    }
    Ok(())
}
