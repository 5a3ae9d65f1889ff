//! Per-state advantage tables conditioned on predecessors' updated policies.
//!
//! For an agent `i`, a set of predecessors `j_{1:m}` and a state `s`, the table holds,
//! for every predecessor joint action `a^j` and every own action `aⁱ`:
//!
//! - `local[a^j][aⁱ] = Aⁱ_π(s, a^j, aⁱ) = Q^{j,i} − Q^j` (the mirror-operator integrand),
//! - `joint[a^j][aⁱ] = A^{j∪i}_π(s, a^j, aⁱ) = Q^{j,i} − V` (the clipped-surrogate term),
//!
//! together with `pred_weights[a^j] = ∏ π̄^{j_k}(a^{j_k}|s)` under the predecessors'
//! *updated* policies. All Q values belong to the frozen old policy.

use crate::error::{HamlError, Result};
use crate::eval::EvalBundle;
use crate::game::{JointActionSpace, JointPolicy, MarkovGame};

/// Agents that already updated in this sweep, with a joint policy carrying their new
/// rows (entries of other agents are ignored).
#[derive(Clone, Copy, Debug)]
pub struct Predecessors<'a> {
    pub agents: &'a [usize],
    pub policy: &'a JointPolicy,
}

impl<'a> Predecessors<'a> {
    pub fn new(agents: &'a [usize], policy: &'a JointPolicy) -> Self {
        Self { agents, policy }
    }

    pub fn none(policy: &'a JointPolicy) -> Self {
        Self { agents: &[], policy }
    }

    pub(crate) fn check(&self, n_agents: usize, agent: usize) -> Result<()> {
        for (k, &j) in self.agents.iter().enumerate() {
            if j >= n_agents {
                return Err(HamlError::InvalidArgument(format!("predecessor {j} out of range")));
            }
            if j == agent {
                return Err(HamlError::InvalidArgument(format!(
                    "agent {agent} cannot be its own predecessor"
                )));
            }
            if self.agents[..k].contains(&j) {
                return Err(HamlError::InvalidArgument(format!("predecessor {j} listed twice")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdvantageTable {
    pub pred_weights: Vec<f64>,
    pub local: Vec<Vec<f64>>,
    pub joint: Vec<Vec<f64>>,
}

impl AdvantageTable {
    /// Table for an arbitrary instance. With no predecessors pass a single weight of 1.
    pub fn from_parts(pred_weights: Vec<f64>, local: Vec<Vec<f64>>, joint: Vec<Vec<f64>>) -> Result<Self> {
        if pred_weights.is_empty() || local.len() != pred_weights.len() || joint.len() != pred_weights.len() {
            return Err(HamlError::InvalidArgument("advantage table shape mismatch".into()));
        }
        let width = local[0].len();
        if width == 0 || local.iter().chain(&joint).any(|r| r.len() != width) {
            return Err(HamlError::InvalidArgument("advantage table rows differ in width".into()));
        }
        Ok(Self {
            pred_weights,
            local,
            joint,
        })
    }

    /// Single-combination table where the local and joint advantages coincide.
    pub fn without_predecessors(advantage: Vec<f64>) -> Self {
        Self {
            pred_weights: vec![1.0],
            local: vec![advantage.clone()],
            joint: vec![advantage],
        }
    }

    pub fn build(
        game: &MarkovGame,
        eval: &EvalBundle,
        pi_old: &JointPolicy,
        agent: usize,
        preds: &Predecessors<'_>,
        s: usize,
    ) -> Result<Self> {
        preds.check(game.n_agents(), agent)?;
        let counts = game.action_counts();
        let pred_counts: Vec<usize> = preds.agents.iter().map(|&j| counts[j]).collect();
        let pred_space = if pred_counts.is_empty() {
            None
        } else {
            Some(JointActionSpace::new(&pred_counts)?)
        };
        let n_combos = pred_space.as_ref().map_or(1, JointActionSpace::size);
        let k = counts[agent];

        let mut q_cond = vec![vec![0.0; k]; n_combos];
        let mut actions = vec![0; game.n_agents()];
        let mut pred_actions = vec![0; preds.agents.len()];
        for j in 0..game.n_joint() {
            game.space().decode_into(j, &mut actions);
            let mut w = 1.0;
            for (other, &a) in actions.iter().enumerate() {
                if other != agent && !preds.agents.contains(&other) {
                    w *= pi_old.agent(other).prob(s, a);
                }
            }
            if w == 0.0 {
                continue;
            }
            for (slot, &p) in pred_actions.iter_mut().zip(preds.agents) {
                *slot = actions[p];
            }
            let combo = match &pred_space {
                Some(space) => space.encode(&pred_actions)?,
                None => 0,
            };
            q_cond[combo][actions[agent]] += w * eval.q[s][j];
        }

        let own_old = pi_old.agent(agent).row(s);
        let mut pred_weights = vec![1.0; n_combos];
        let mut local = Vec::with_capacity(n_combos);
        let mut joint = Vec::with_capacity(n_combos);
        for (combo, q_row) in q_cond.iter().enumerate() {
            if let Some(space) = &pred_space {
                space.decode_into(combo, &mut pred_actions);
                pred_weights[combo] = preds
                    .agents
                    .iter()
                    .zip(&pred_actions)
                    .map(|(&p, &a)| preds.policy.agent(p).prob(s, a))
                    .product();
            }
            let q_pred: f64 = own_old.iter().zip(q_row).map(|(p, q)| p * q).sum();
            local.push(q_row.iter().map(|q| q - q_pred).collect());
            joint.push(q_row.iter().map(|q| q - eval.v[s]).collect());
        }
        Ok(Self {
            pred_weights,
            local,
            joint,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.local[0].len()
    }

    /// `g(aⁱ) = E_{a^j∼π̄}[Aⁱ(s, a^j, aⁱ)]`: the mirror operator's advantage term is
    /// `⟨g, π̂ⁱ(·|s)⟩`.
    pub fn linear_term(&self) -> Vec<f64> {
        weighted_rows(&self.pred_weights, &self.local)
    }

    /// `E_{a^j∼π̄}[A^{j∪i}(s, a^j, aⁱ)]` per own action.
    pub fn joint_linear_term(&self) -> Vec<f64> {
        weighted_rows(&self.pred_weights, &self.joint)
    }
}

fn weighted_rows(weights: &[f64], rows: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; rows[0].len()];
    for (w, row) in weights.iter().zip(rows) {
        if *w == 0.0 {
            continue;
        }
        for (o, x) in out.iter_mut().zip(row) {
            *o += w * x;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{evaluate, multi_agent_advantage};
    use crate::game::{random_game, random_joint_policy, RandomGameSpec};

    #[test]
    fn table_matches_enumerated_advantages() {
        let g = random_game(&RandomGameSpec::new(31, 2, &[2, 3, 2], 0.8, (-1.0, 1.0))).unwrap();
        let old = random_joint_policy(&g, 1);
        let new = random_joint_policy(&g, 2);
        let e = evaluate(&g, &old).unwrap();
        let preds = [2, 0];
        let table = AdvantageTable::build(&g, &e, &old, 1, &Predecessors::new(&preds, &new), 1).unwrap();
        let pred_space = JointActionSpace::new(&[2, 2]).unwrap();
        for (c, pa) in pred_space.iter() {
            let w = new.agent(2).prob(1, pa[0]) * new.agent(0).prob(1, pa[1]);
            assert!((table.pred_weights[c] - w).abs() < 1e-15);
            for a in 0..3 {
                let local = multi_agent_advantage(&g, &e, &old, 1, &preds, &pa, &[1], &[a]).unwrap();
                let joint = multi_agent_advantage(&g, &e, &old, 1, &[], &[], &[2, 0, 1], &[pa[0], pa[1], a]).unwrap();
                assert!((table.local[c][a] - local).abs() < 1e-12);
                assert!((table.joint[c][a] - joint).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_self_predecessor() {
        let g = random_game(&RandomGameSpec::new(1, 1, &[2, 2], 0.0, (0.0, 1.0))).unwrap();
        let pi = random_joint_policy(&g, 1);
        let e = evaluate(&g, &pi).unwrap();
        assert!(AdvantageTable::build(&g, &e, &pi, 0, &Predecessors::new(&[0], &pi), 0).is_err());
    }
}
