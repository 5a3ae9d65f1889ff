//! The drift functionals that regularise each agent's update, evaluated on one state.
//! The clipped drift is measured under the predecessors' *new* policies, so the same
//! candidate can cost nothing or a lot depending on what came before it.
//!
//! cargo run --example drift_functionals

use haml::conditional::Predecessors;
use haml::drift::{drift_state, HadfSpec, KlDirection};
use haml::game::{build_prop2_game, uniform_joint_policy, AgentPolicy, JointPolicy};
use haml::evaluate;

fn main() -> haml::Result<()> {
    let game = build_prop2_game();
    let old = uniform_joint_policy(&game);
    let eval = evaluate(&game, &old)?;
    let candidate = [0.9, 0.1];

    let kinds = [
        ("trivial", HadfSpec::trivial()),
        ("kl(new||old), tau 1", HadfSpec::kl_penalty(1.0)),
        ("kl(old||new), tau 1", HadfSpec::kl_penalty_with(1.0, KlDirection::OldToNew)),
        ("clip, eps 0.2", HadfSpec::clip_relu(0.2)),
        ("squared l2, tau 1", HadfSpec::squared_l2(1.0)),
    ];
    let none = Predecessors::none(&old);
    println!("agent 1 moves (0.5, 0.5) -> {candidate:?}, no predecessors:");
    for (name, hadf) in &kinds {
        let d = drift_state(hadf, &game, &eval, &old, 1, &candidate, 0, &none)?;
        println!("  {name:<22} {d:.6}");
    }

    let clip = HadfSpec::clip_relu(0.2);
    for a in [0, 1] {
        let mut new = old.clone();
        new.set_agent(0, AgentPolicy::dirac(1, 2, a)?);
        let new = JointPolicy::new(new.agents().to_vec())?;
        let preds = Predecessors::new(&[0], &new);
        let d = drift_state(&clip, &game, &eval, &old, 1, &candidate, 0, &preds)?;
        println!("clip drift when agent 0 has switched to action {a}: {d:.6}");
    }
    Ok(())
}
