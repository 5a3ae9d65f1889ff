//! Multi-agent advantages telescope: the joint advantage of an ordered group equals the
//! sum of each member's advantage given the members before it.
//!
//! cargo run --example advantage_decomposition

use haml::eval::{check_advantage_decomposition, multi_agent_advantage};
use haml::game::{random_game, random_joint_policy, RandomGameSpec};
use haml::evaluate;

fn main() -> haml::Result<()> {
    let game = random_game(&RandomGameSpec::new(3, 2, &[2, 3, 2], 0.9, (-1.0, 1.0)))?;
    let pi = random_joint_policy(&game, 3);
    let eval = evaluate(&game, &pi)?;

    let s = 0;
    let order = [2, 0, 1];
    let actions = [1, 0, 2]; // agent 2 plays 1, agent 0 plays 0, agent 1 plays 2
    let joint = multi_agent_advantage(&game, &eval, &pi, s, &[], &[], &order, &actions)?;
    println!("joint advantage A(s={s}, {order:?} -> {actions:?}) = {joint:+.10}");
    let mut sum = 0.0;
    for m in 0..order.len() {
        let a = multi_agent_advantage(&game, &eval, &pi, s, &order[..m], &actions[..m], &order[m..=m], &actions[m..=m])?;
        sum += a;
        println!("  agent {} given {:?}: {a:+.10}", order[m], &order[..m]);
    }
    println!("  sum                  : {sum:+.10}");

    let mut worst: f64 = 0.0;
    for s in 0..game.n_states() {
        for (_, acts) in game.space().iter() {
            let ordered: Vec<usize> = order.iter().map(|&i| acts[i]).collect();
            worst = worst.max(check_advantage_decomposition(&game, &eval, &pi, s, &order, &ordered)?);
        }
    }
    println!("largest residual over all states and joint actions: {worst:e}");
    Ok(())
}
