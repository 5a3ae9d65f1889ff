//! Mirror learning on a random game: J never decreases and the Nash gap shrinks.
//!
//! cargo run --example haml_random_game -- [seed]

use haml::drift::HadfSpec;
use haml::engine::{run, EngineConfig, InnerSolver};
use haml::game::{random_game, uniform_joint_policy, RandomGameSpec};
use haml::neighborhood::NeighborhoodSpec;

fn main() -> haml::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1);
    let game = random_game(&RandomGameSpec::new(seed, 4, &[3, 2, 2], 0.9, (-1.0, 1.0)))?;
    let start = uniform_joint_policy(&game);

    let configs = [
        ("greedy", EngineConfig::greedy(30)),
        ("kl(0.5) in per-state kl ball 0.05", EngineConfig::with(HadfSpec::kl_penalty(0.5), NeighborhoodSpec::per_state_kl(0.05), 30)),
        ("clip(0.2) via exponentiated gradient", {
            let mut c = EngineConfig::with(HadfSpec::clip_relu(0.2), NeighborhoodSpec::unconstrained(), 30);
            c.inner_solver = InnerSolver::exp_gradient();
            c
        }),
    ];
    for (name, cfg) in configs {
        let out = run(&game, &start, &cfg, seed)?;
        println!("{name}");
        for r in out.records.iter().filter(|r| r.k % 5 == 0 || r.k + 1 == out.records.len()) {
            println!(
                "  k={:>2} order {:?} J {:.8} -> {:.8}  nash gap {:.3e}  reverts {}",
                r.k, r.permutation, r.j_before, r.j_after, r.nash_gap, r.fallbacks
            );
        }
    }
    Ok(())
}
