//! Seeded rollouts. With gamma = 0 a one-step rollout starts from the initial
//! distribution and its reward is an unbiased sample of J.
//!
//! cargo run --example trajectories

use haml::baselines::{mean_reward, sample_trajectories, trajectories_to_csv, visit_frequencies};
use haml::game::{random_game, random_joint_policy, RandomGameSpec};

fn main() -> haml::Result<()> {
    let game = random_game(&RandomGameSpec::new(9, 3, &[2, 2], 0.0, (-1.0, 1.0)))?;
    let pi = random_joint_policy(&game, 9);
    let eval = haml::evaluate(&game, &pi)?;
    let batch = sample_trajectories(&game, &pi, 1, 20_000, 42)?;
    println!("gamma = 0: one-step rollouts");
    println!("  visit frequencies {:?}", visit_frequencies(&batch, game.n_states()));
    println!("  initial distribution {:?}", game.initial());
    println!("  mean reward {:.4} vs J {:.4}", mean_reward(&batch), eval.j);
    let csv = trajectories_to_csv(&batch[..2], game.n_agents())?;
    println!("first two trajectories as CSV:\n{csv}");
    Ok(())
}
