//! Games and policies round-trip through JSON; the CLI reads the same files.
//!
//! cargo run --example game_files

use haml::game::{random_game, random_joint_policy, RandomGameSpec};
use haml::{evaluate, nash_gap, JointPolicy, MarkovGame};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("haml-game-files-example");
    std::fs::create_dir_all(&dir)?;
    let game = random_game(&RandomGameSpec::new(8, 2, &[2, 3], 0.85, (0.0, 1.0)))?;
    let pi = random_joint_policy(&game, 8);
    let (game_path, policy_path) = (dir.join("game.json"), dir.join("policy.json"));
    game.save(&game_path)?;
    pi.save(&policy_path)?;

    let game2 = MarkovGame::load(&game_path)?;
    let pi2 = JointPolicy::load(&policy_path)?;
    assert_eq!(game, game2);
    assert_eq!(pi, pi2);
    let eval = evaluate(&game2, &pi2)?;
    println!("wrote {} and {}", game_path.display(), policy_path.display());
    println!("J = {:.10}, V = {:?}, nash gap = {:.6}", eval.j, eval.v, nash_gap(&game2, &pi2)?);
    println!("same as: haml eval --game {} --policy {}", game_path.display(), policy_path.display());
    Ok(())
}
