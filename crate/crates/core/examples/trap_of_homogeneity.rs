//! Agents forced to share one policy lose exponentially much on the "split the team"
//! matrix game: the best shared policy earns 2/2^n of the heterogeneous optimum.
//!
//! cargo run --example trap_of_homogeneity

use haml::baselines::{brute_force_optimum, shared_policy_optimum};
use haml::engine::{run, EngineConfig};
use haml::game::{build_prop1_game, random_joint_policy};

fn main() -> haml::Result<()> {
    println!("{:>3} {:>12} {:>8} {:>12} {:>12} {:>10}", "n", "shared J", "p", "optimum J", "ratio", "2/2^n");
    for n in [2, 4, 6, 8] {
        let game = build_prop1_game(n)?;
        let (p, shared) = shared_policy_optimum(&game, 1000)?;
        let (_, best) = brute_force_optimum(&game)?;
        println!(
            "{n:>3} {shared:>12.8} {p:>8.4} {best:>12.8} {:>12.8} {:>10.8}",
            shared / best,
            2.0 / 2f64.powi(n as i32)
        );
    }

    // Heterogeneous sequential updates escape the trap from a generic start.
    let game = build_prop1_game(6)?;
    let start = random_joint_policy(&game, 7);
    let out = run(&game, &start, &EngineConfig::greedy(10), 7)?;
    let last = out.records.last().expect("at least one iteration");
    println!("sequential greedy updates on n = 6: J = {} after {} iterations", last.j_after, out.records.len());
    Ok(())
}
