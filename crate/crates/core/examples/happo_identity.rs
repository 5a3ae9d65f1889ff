//! The clipped ratio objective is a mirror-learning objective: it equals the expected
//! joint advantage under the candidate minus the clipped drift.
//!
//! cargo run --example happo_identity

use haml::conditional::{AdvantageTable, Predecessors};
use haml::drift::HadfSpec;
use haml::game::{random_game, random_joint_policy, AgentPolicy, RandomGameSpec};
use haml::mirror::{happo_identity_residual, happo_objective, happo_objective_table, HamoContext};
use haml::evaluate;

fn main() -> haml::Result<()> {
    let table = AdvantageTable::from_parts(vec![1.0], vec![vec![1.0, -1.0]], vec![vec![1.0, -1.0]])?;
    let v = happo_objective_table(&table, &[0.5, 0.5], &[0.8, 0.2], 0.2)?;
    println!("old (0.5, 0.5), candidate (0.8, 0.2), eps 0.2, A = (1, -1): objective {v:.6}");

    let game = random_game(&RandomGameSpec::new(5, 3, &[3, 2], 0.8, (-1.0, 1.0)))?;
    let old = random_joint_policy(&game, 5);
    let new = random_joint_policy(&game, 6);
    let eval = evaluate(&game, &old)?;
    let preds = Predecessors::new(&[1], &new);
    let rho = eval.rho_normalized.clone();
    let ctx = HamoContext::new(&game, &eval, &old, 0, &preds, HadfSpec::clip_relu(0.2), rho.clone(), rho)?;
    let candidate = AgentPolicy::new(
        (0..game.n_states())
            .map(|s| {
                let r = old.agent(0).row(s);
                vec![r[0] * 0.6, r[1] * 0.6, 1.0 - 0.6 * (r[0] + r[1])]
            })
            .collect(),
    )?;
    for s in 0..game.n_states() {
        println!(
            "state {s}: clipped objective {:+.8}, identity residual {:.1e}",
            happo_objective(&ctx, &candidate, s)?,
            happo_identity_residual(&ctx, &candidate, s)?
        );
    }
    Ok(())
}
