//! Two agents each improving against the *old* policy of the other can jointly make
//! things worse. Sequential updates, where the second agent sees the first one's new
//! policy, cannot.
//!
//! Rewards: r(0,0) = 0, r(0,1) = r(1,0) = 2, r(1,1) = -1.
//!
//! cargo run --example trap_of_heterogeneity

use haml::baselines::naive_simultaneous_step;
use haml::engine::{haml_step, EngineConfig, PermutationSampler};
use haml::game::{argmax, build_prop2_game, first_action_policy};
use haml::evaluate;

fn main() -> haml::Result<()> {
    let game = build_prop2_game();
    let start = first_action_policy(&game, 0.7)?;
    println!("start: both agents play action 0 w.p. 0.7, J = {}", evaluate(&game, &start)?.j);

    let naive = naive_simultaneous_step(&game, &start)?;
    println!(
        "simultaneous best responses: agents pick ({}, {}) -> J = {}",
        argmax(naive.agent(0).row(0)),
        argmax(naive.agent(1).row(0)),
        evaluate(&game, &naive)?.j
    );

    for order in [vec![0, 1], vec![1, 0]] {
        let mut cfg = EngineConfig::greedy(1);
        cfg.permutations = PermutationSampler::fixed(order.clone());
        let (next, rec) = haml_step(&game, &start, &cfg, 0)?;
        println!(
            "sequential order {:?}: agents pick ({}, {}) -> J = {}",
            rec.permutation,
            argmax(next.agent(0).row(0)),
            argmax(next.agent(1).row(0)),
            rec.j_after
        );
    }
    Ok(())
}
