//! Exact policy evaluation on the tabular game.
//!
//! `V` and the discounted visitation `ρ` come from dense LU solves of
//! `(I − γP_π) v = r_π` and `(I − γP_π)ᵀ ρ = d`. Multi-agent Q values marginalise the
//! agents outside the conditioning set by exhaustive enumeration of joint actions.

use nalgebra::{DMatrix, DVector};

use crate::error::{HamlError, Result};
use crate::game::{argmax, AgentPolicy, JointActionSpace, JointPolicy, MarkovGame};

/// Exact quantities for a fixed joint policy.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalBundle {
    /// `V_π(s)`.
    pub v: Vec<f64>,
    /// `Q_π(s, a)` indexed `[s][joint]`.
    pub q: Vec<Vec<f64>>,
    /// Improper discounted visitation, sums to `1/(1−γ)`.
    pub rho: Vec<f64>,
    /// `(1−γ)ρ`, a probability distribution over states.
    pub rho_normalized: Vec<f64>,
    /// `J(π) = Σ_s d(s) V(s)`.
    pub j: f64,
}

impl EvalBundle {
    /// Joint advantage `Q(s, a) − V(s)`.
    pub fn advantage(&self, s: usize, joint: usize) -> f64 {
        self.q[s][joint] - self.v[s]
    }
}

/// State-to-state kernel and expected reward under `pi`.
pub(crate) fn induced_chain(game: &MarkovGame, pi: &JointPolicy) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = game.n_states();
    let mut p = vec![vec![0.0; n]; n];
    let mut r = vec![0.0; n];
    for s in 0..n {
        let dist = pi.joint_distribution(game.space(), s);
        for (j, &w) in dist.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            r[s] += w * game.reward(s, j);
            for (t, &pt) in game.transition(s, j).iter().enumerate() {
                p[s][t] += w * pt;
            }
        }
    }
    (p, r)
}

pub fn evaluate(game: &MarkovGame, pi: &JointPolicy) -> Result<EvalBundle> {
    pi.check_against(game)?;
    let n = game.n_states();
    let gamma = game.gamma();
    let (p, r) = induced_chain(game, pi);
    let system = DMatrix::from_fn(n, n, |s, t| {
        let identity = if s == t { 1.0 } else { 0.0 };
        identity - gamma * p[s][t]
    });
    let lu = system.clone().lu();
    let v = lu
        .solve(&DVector::from_vec(r))
        .ok_or_else(|| HamlError::Numerical("singular Bellman system".into()))?;
    let rho = system
        .transpose()
        .lu()
        .solve(&DVector::from_column_slice(game.initial()))
        .ok_or_else(|| HamlError::Numerical("singular visitation system".into()))?;
    let v: Vec<f64> = v.iter().copied().collect();
    let rho: Vec<f64> = rho.iter().copied().collect();
    let q = (0..n)
        .map(|s| {
            (0..game.n_joint())
                .map(|j| {
                    let next: f64 = game.transition(s, j).iter().zip(&v).map(|(p, v)| p * v).sum();
                    game.reward(s, j) + gamma * next
                })
                .collect()
        })
        .collect();
    let j = game.initial().iter().zip(&v).map(|(d, v)| d * v).sum();
    let rho_normalized = rho.iter().map(|x| (1.0 - gamma) * x).collect();
    Ok(EvalBundle {
        v,
        q,
        rho,
        rho_normalized,
        j,
    })
}

/// Largest `|V(s) − Σ_a π(a|s)[r + γ Σ P V]|` over states.
pub fn bellman_residual(game: &MarkovGame, pi: &JointPolicy, eval: &EvalBundle) -> f64 {
    let (p, r) = induced_chain(game, pi);
    (0..game.n_states())
        .map(|s| {
            let backup = r[s] + game.gamma() * p[s].iter().zip(&eval.v).map(|(a, b)| a * b).sum::<f64>();
            (eval.v[s] - backup).abs()
        })
        .fold(0.0, f64::max)
}

/// `E[values[a]]` under a product of per-agent distributions `rows[i]` over the joint
/// space. Entries with zero weight are skipped.
pub(crate) fn product_expectation(space: &JointActionSpace, values: &[f64], rows: &[&[f64]]) -> f64 {
    let mut actions = vec![0; space.n_agents()];
    let mut total = 0.0;
    for (j, &value) in values.iter().enumerate() {
        space.decode_into(j, &mut actions);
        let mut w = 1.0;
        for (row, &a) in rows.iter().zip(&actions) {
            w *= row[a];
            if w == 0.0 {
                break;
            }
        }
        if w != 0.0 {
            total += w * value;
        }
    }
    total
}

fn check_distinct(game: &MarkovGame, agents: &[usize], what: &str) -> Result<()> {
    for (k, &i) in agents.iter().enumerate() {
        if i >= game.n_agents() {
            return Err(HamlError::InvalidArgument(format!("{what}: agent {i} out of range")));
        }
        if agents[..k].contains(&i) {
            return Err(HamlError::InvalidArgument(format!("{what}: agent {i} listed twice")));
        }
    }
    Ok(())
}

/// `Q^{i_{1:m}}_π(s, a^{i_{1:m}})`: the remaining agents' actions are drawn from `pi`.
/// With every agent listed this is `q[s][a]`; with none it is `v[s]`.
pub fn multi_agent_q(
    game: &MarkovGame,
    eval: &EvalBundle,
    pi: &JointPolicy,
    s: usize,
    subset: &[usize],
    actions: &[usize],
) -> Result<f64> {
    check_distinct(game, subset, "multi-agent Q")?;
    if subset.len() != actions.len() {
        return Err(HamlError::InvalidArgument(format!(
            "{} agents but {} actions",
            subset.len(),
            actions.len()
        )));
    }
    let mut fixed: Vec<Option<Vec<f64>>> = vec![None; game.n_agents()];
    for (&i, &a) in subset.iter().zip(actions) {
        let c = game.action_counts()[i];
        if a >= c {
            return Err(HamlError::InvalidArgument(format!(
                "action {a} out of range for agent {i} with {c} actions"
            )));
        }
        fixed[i] = Some(crate::game::one_hot(c, a));
    }
    let rows: Vec<&[f64]> = fixed
        .iter()
        .enumerate()
        .map(|(i, f)| f.as_deref().unwrap_or_else(|| pi.agent(i).row(s)))
        .collect();
    Ok(product_expectation(game.space(), &eval.q[s], &rows))
}

/// `A^{i_{1:m}}_π(s, a^{j_{1:k}}, a^{i_{1:m}}) = Q^{j,i}(s, a^j, a^i) − Q^j(s, a^j)`.
#[allow(clippy::too_many_arguments)]
pub fn multi_agent_advantage(
    game: &MarkovGame,
    eval: &EvalBundle,
    pi: &JointPolicy,
    s: usize,
    predecessors: &[usize],
    pred_actions: &[usize],
    subset: &[usize],
    actions: &[usize],
) -> Result<f64> {
    if let Some(i) = subset.iter().find(|i| predecessors.contains(i)) {
        return Err(HamlError::InvalidArgument(format!(
            "agent {i} is both a predecessor and in the advantage subset"
        )));
    }
    let joint_agents: Vec<usize> = predecessors.iter().chain(subset).copied().collect();
    let joint_actions: Vec<usize> = pred_actions.iter().chain(actions).copied().collect();
    let with = multi_agent_q(game, eval, pi, s, &joint_agents, &joint_actions)?;
    let without = multi_agent_q(game, eval, pi, s, predecessors, pred_actions)?;
    Ok(with - without)
}

/// `|A^{i_{1:m}}(s, a) − Σ_j A^{i_j}(s, a^{i_{1:j−1}}, a^{i_j})|` for an ordered subset.
pub fn check_advantage_decomposition(
    game: &MarkovGame,
    eval: &EvalBundle,
    pi: &JointPolicy,
    s: usize,
    order: &[usize],
    actions: &[usize],
) -> Result<f64> {
    let joint = multi_agent_advantage(game, eval, pi, s, &[], &[], order, actions)?;
    let mut sum = 0.0;
    for m in 0..order.len() {
        sum += multi_agent_advantage(
            game,
            eval,
            pi,
            s,
            &order[..m],
            &actions[..m],
            &order[m..=m],
            &actions[m..=m],
        )?;
    }
    Ok((joint - sum).abs())
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestResponse {
    pub agent: usize,
    /// Deterministic greedy policy for `agent`.
    pub policy: AgentPolicy,
    /// `J(BR, π⁻ⁱ)`, evaluated exactly.
    pub value: f64,
}

/// Best response of `agent` to the other agents' fixed policies.
///
/// The others are marginalised into a single-agent MDP over `(S, Aⁱ)`, solved by value
/// iteration until the sup-norm step is at most `1e-12·(1−γ)/γ` (one sweep when γ = 0,
/// floored at a few ulps of `‖V‖∞`). The greedy policy is then evaluated exactly.
pub fn best_response(game: &MarkovGame, pi: &JointPolicy, agent: usize) -> Result<BestResponse> {
    pi.check_against(game)?;
    if agent >= game.n_agents() {
        return Err(HamlError::InvalidArgument(format!("agent {agent} out of range")));
    }
    let n = game.n_states();
    let k = game.action_counts()[agent];
    let gamma = game.gamma();
    // Marginal reward and kernel of the induced MDP.
    let mut r = vec![vec![0.0; k]; n];
    let mut p = vec![vec![vec![0.0; n]; k]; n];
    let mut actions = vec![0; game.n_agents()];
    for s in 0..n {
        for j in 0..game.n_joint() {
            game.space().decode_into(j, &mut actions);
            let w: f64 = (0..game.n_agents())
                .filter(|&i| i != agent)
                .map(|i| pi.agent(i).prob(s, actions[i]))
                .product();
            if w == 0.0 {
                continue;
            }
            let a = actions[agent];
            r[s][a] += w * game.reward(s, j);
            for (t, &pt) in game.transition(s, j).iter().enumerate() {
                p[s][a][t] += w * pt;
            }
        }
    }
    let backup = |v: &[f64], s: usize| -> Vec<f64> {
        (0..k)
            .map(|a| r[s][a] + gamma * p[s][a].iter().zip(v).map(|(x, y)| x * y).sum::<f64>())
            .collect()
    };
    let mut v = vec![0.0; n];
    if gamma == 0.0 {
        v = (0..n).map(|s| backup(&v, s).into_iter().fold(f64::MIN, f64::max)).collect();
    } else {
        let tol = 1e-12 * (1.0 - gamma) / gamma;
        for _ in 0..10_000_000usize {
            let next: Vec<f64> = (0..n)
                .map(|s| backup(&v, s).into_iter().fold(f64::MIN, f64::max))
                .collect();
            let step = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let scale = next.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            v = next;
            if step <= tol.max(16.0 * f64::EPSILON * scale) {
                break;
            }
        }
    }
    let greedy: Vec<usize> = (0..n).map(|s| argmax(&backup(&v, s))).collect();
    let policy = AgentPolicy::dirac_per_state(&greedy, k)?;
    let mut deviated = pi.clone();
    deviated.set_agent(agent, policy.clone());
    let value = evaluate(game, &deviated)?.j;
    Ok(BestResponse { agent, policy, value })
}

/// `max_i (J(BRⁱ, π⁻ⁱ) − J(π))`: zero (up to tolerance) exactly at Nash equilibria.
pub fn nash_gap(game: &MarkovGame, pi: &JointPolicy) -> Result<f64> {
    let j = evaluate(game, pi)?.j;
    nash_gap_given(game, pi, j)
}

pub(crate) fn nash_gap_given(game: &MarkovGame, pi: &JointPolicy, j: f64) -> Result<f64> {
    let mut gap = f64::NEG_INFINITY;
    for i in 0..game.n_agents() {
        gap = gap.max(best_response(game, pi, i)?.value - j);
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{
        build_prop2_game, dirac_joint_policy, first_action_policy, random_game,
        random_joint_policy, uniform_joint_policy, RandomGameSpec,
    };

    /// Oracle: J of a one-state γ=0 game by direct enumeration of the joint table.
    fn matrix_game_value(rewards: &[f64], p1: &[f64], p2: &[f64]) -> f64 {
        let mut total = 0.0;
        for a in 0..p1.len() {
            for b in 0..p2.len() {
                total += p1[a] * p2[b] * rewards[a * p2.len() + b];
            }
        }
        total
    }

    #[test]
    fn constant_reward_geometric_series() {
        let g = MarkovGame::new(&[2], vec![vec![vec![1.0]; 2]], vec![vec![1.0; 2]], 0.9, vec![1.0]).unwrap();
        let e = evaluate(&g, &uniform_joint_policy(&g)).unwrap();
        assert!((e.v[0] - 10.0).abs() < 1e-12);
        assert!((e.rho[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn prop2_values() {
        let g = build_prop2_game();
        let oracle = matrix_game_value(&[0.0, 2.0, 2.0, -1.0], &[0.7, 0.3], &[0.7, 0.3]);
        assert!((oracle - 0.75).abs() < 1e-15);
        let e = evaluate(&g, &first_action_policy(&g, 0.7).unwrap()).unwrap();
        assert!((e.j - oracle).abs() < 1e-12);
        let u = evaluate(&g, &uniform_joint_policy(&g)).unwrap();
        assert!((u.j - 0.75).abs() < 1e-12);
    }

    #[test]
    fn prop2_multi_agent_q_and_advantages() {
        let g = build_prop2_game();
        let pi = uniform_joint_policy(&g);
        let e = evaluate(&g, &pi).unwrap();
        let q1 = multi_agent_q(&g, &e, &pi, 0, &[0], &[0]).unwrap();
        assert!((q1 - 1.0).abs() < 1e-12);
        let a2 = multi_agent_advantage(&g, &e, &pi, 0, &[0], &[0], &[1], &[1]).unwrap();
        assert!((a2 - 1.0).abs() < 1e-12);
        let a12 = multi_agent_advantage(&g, &e, &pi, 0, &[], &[], &[0, 1], &[0, 1]).unwrap();
        assert!((a12 - 1.25).abs() < 1e-12);
        let r = check_advantage_decomposition(&g, &e, &pi, 0, &[0, 1], &[0, 1]).unwrap();
        assert!(r < 1e-12);
        assert!(multi_agent_advantage(&g, &e, &pi, 0, &[0], &[0], &[0], &[1]).is_err());
        assert!(multi_agent_q(&g, &e, &pi, 0, &[1, 1], &[0, 0]).is_err());
    }

    #[test]
    fn full_and_empty_subsets() {
        let g = random_game(&RandomGameSpec::new(4, 3, &[2, 3], 0.8, (-1.0, 1.0))).unwrap();
        let pi = random_joint_policy(&g, 4);
        let e = evaluate(&g, &pi).unwrap();
        for s in 0..3 {
            assert!((multi_agent_q(&g, &e, &pi, s, &[], &[]).unwrap() - e.v[s]).abs() < 1e-12);
            for (j, a) in g.space().iter() {
                let q = multi_agent_q(&g, &e, &pi, s, &[0, 1], &a).unwrap();
                assert!((q - e.q[s][j]).abs() < 1e-12);
                // listing agents in another order gives the same joint value
                let q_rev = multi_agent_q(&g, &e, &pi, s, &[1, 0], &[a[1], a[0]]).unwrap();
                assert!((q_rev - e.q[s][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn advantage_is_centered() {
        let g = random_game(&RandomGameSpec::new(8, 2, &[3, 2, 2], 0.7, (-1.0, 1.0))).unwrap();
        let pi = random_joint_policy(&g, 8);
        let e = evaluate(&g, &pi).unwrap();
        for s in 0..2 {
            for a0 in 0..3 {
                let mean: f64 = (0..2)
                    .map(|a| {
                        pi.agent(2).prob(s, a)
                            * multi_agent_advantage(&g, &e, &pi, s, &[0], &[a0], &[2], &[a]).unwrap()
                    })
                    .sum();
                assert!(mean.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn visitation_matches_power_series() {
        let g = random_game(&RandomGameSpec::new(21, 3, &[2, 2], 0.9, (-1.0, 1.0))).unwrap();
        let pi = random_joint_policy(&g, 21);
        let e = evaluate(&g, &pi).unwrap();
        // Oracle: Σ_{t≤T} γᵗ dᵀ P_πᵗ
        let (p, _) = induced_chain(&g, &pi);
        let t_max = 200;
        let mut dist = g.initial().to_vec();
        let mut acc = [0.0; 3];
        let mut discount = 1.0;
        for _ in 0..=t_max {
            for (a, d) in acc.iter_mut().zip(&dist) {
                *a += discount * d;
            }
            dist = (0..3).map(|t| (0..3).map(|s| dist[s] * p[s][t]).sum()).collect();
            discount *= g.gamma();
        }
        let bound = g.gamma().powi(t_max + 1) / (1.0 - g.gamma()) * 3.0;
        for (a, r) in acc.iter().zip(&e.rho) {
            assert!((a - r).abs() <= bound);
        }
        assert!((e.rho.iter().sum::<f64>() - 10.0).abs() < 1e-9);
        assert!((e.rho_normalized.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(bellman_residual(&g, &pi, &e) < 1e-9);
    }

    #[test]
    fn best_responses_on_prop2() {
        let g = build_prop2_game();
        let pi = dirac_joint_policy(&g, &[1, 1]).unwrap();
        let br = best_response(&g, &pi, 0).unwrap();
        assert_eq!(br.policy.row(0), &[1.0, 0.0]);
        assert_eq!(br.value, 2.0);
        assert!((nash_gap(&g, &pi).unwrap() - 3.0).abs() < 1e-12);

        let ne = dirac_joint_policy(&g, &[0, 1]).unwrap();
        for i in 0..2 {
            assert_eq!(best_response(&g, &ne, i).unwrap().value, 2.0);
        }
        assert!(nash_gap(&g, &ne).unwrap().abs() < 1e-12);
    }

    #[test]
    fn single_agent_optimum_has_zero_gap() {
        let g = random_game(&RandomGameSpec::new(2, 3, &[3], 0.9, (-1.0, 1.0))).unwrap();
        let br = best_response(&g, &uniform_joint_policy(&g), 0).unwrap();
        let opt = JointPolicy::new(vec![br.policy]).unwrap();
        assert!(nash_gap(&g, &opt).unwrap().abs() < 1e-9);
    }

    #[test]
    fn nash_gap_is_nonnegative() {
        for seed in 0..20 {
            let g = random_game(&RandomGameSpec::new(seed, 2, &[2, 3], 0.85, (-1.0, 1.0))).unwrap();
            let pi = random_joint_policy(&g, seed);
            assert!(nash_gap(&g, &pi).unwrap() >= -1e-9);
        }
    }
}
