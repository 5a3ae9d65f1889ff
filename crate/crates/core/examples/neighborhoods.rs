//! Trust regions around the old policy, and pulling a far candidate back inside.
//!
//! cargo run --example neighborhoods

use haml::game::{random_game, random_joint_policy, uniform_joint_policy, AgentPolicy, RandomGameSpec};
use haml::neighborhood::{closed_ball_witness, contains, project_by_rejection, NeighborhoodSpec};
use haml::evaluate;

fn main() -> haml::Result<()> {
    let game = random_game(&RandomGameSpec::new(4, 3, &[3, 2], 0.9, (-1.0, 1.0)))?;
    let old = random_joint_policy(&game, 4);
    let eval = evaluate(&game, &old)?;
    let far = uniform_joint_policy(&game).agent(0).clone();
    let far = AgentPolicy::new(far.rows().iter().map(|_| vec![1.0, 0.0, 0.0]).collect())?;

    for spec in [
        NeighborhoodSpec::unconstrained(),
        NeighborhoodSpec::per_state_kl(0.05),
        NeighborhoodSpec::expected_kl(0.05),
        NeighborhoodSpec::per_state_tv(0.1),
    ] {
        let weights = spec.weights(&eval)?;
        let projected = project_by_rejection(&spec, &weights, old.agent(0), &far)?;
        println!(
            "{:<14} delta {:<5} witness radius {:.4}  dirac inside: {:<5}  after projection: {}  (max tv moved {:.4})",
            format!("{:?}", spec.kind),
            spec.delta,
            closed_ball_witness(&spec, &old, 0),
            contains(&spec, &game, &eval, &old, 0, &far)?,
            contains(&spec, &game, &eval, &old, 0, &projected)?,
            projected.max_tv(old.agent(0)),
        );
    }
    Ok(())
}
