//! Reference algorithms: uncoordinated simultaneous greedy updates, the best shared
//! policy, exhaustive search over deterministic joint policies, a trajectory sampler,
//! and a tabular softmax HAA2C in exact and Monte-Carlo form.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HamlError, Result};
use crate::eval::{evaluate, EvalBundle};
use crate::game::{argmax, one_hot, AgentPolicy, JointActionSpace, JointPolicy, MarkovGame};
use crate::seeding::{derive_seed, rng_for, STREAM_HAA2C, STREAM_TRAJECTORY};

/// Every agent jumps to its greedy action against the *old* policies of all others,
/// and all agents move at once.
pub fn naive_simultaneous_step(game: &MarkovGame, pi: &JointPolicy) -> Result<JointPolicy> {
    let eval = evaluate(game, pi)?;
    let mut next = pi.clone();
    for agent in 0..game.n_agents() {
        let k = game.action_counts()[agent];
        let mut actions = vec![0; game.n_agents()];
        let rows = (0..game.n_states())
            .map(|s| {
                let mut q = vec![0.0; k];
                for j in 0..game.n_joint() {
                    game.space().decode_into(j, &mut actions);
                    let w: f64 = (0..game.n_agents())
                        .filter(|&i| i != agent)
                        .map(|i| pi.agent(i).prob(s, actions[i]))
                        .product();
                    q[actions[agent]] += w * eval.q[s][j];
                }
                one_hot(k, argmax(&q))
            })
            .collect();
        next.set_agent(agent, AgentPolicy::new(rows)?);
    }
    Ok(next)
}

/// Best joint return when all agents must play the same Bernoulli row on a
/// single-state binary game. Returns `(p, J)` with `p` the probability of action 0.
pub fn shared_policy_optimum(game: &MarkovGame, grid_resolution: usize) -> Result<(f64, f64)> {
    if game.n_states() != 1 || game.action_counts().iter().any(|&c| c != 2) {
        return Err(HamlError::InvalidArgument(
            "shared-policy search needs a single-state game with two actions per agent".into(),
        ));
    }
    if grid_resolution == 0 {
        return Err(HamlError::InvalidArgument("grid_resolution must be positive".into()));
    }
    let value = |p: f64| -> Result<f64> {
        let row = AgentPolicy::new(vec![vec![p, 1.0 - p]])?;
        Ok(evaluate(game, &JointPolicy::new(vec![row; game.n_agents()])?)?.j)
    };
    let mut best = (0.0, value(0.0)?);
    for i in 1..=grid_resolution {
        let p = i as f64 / grid_resolution as f64;
        let v = value(p)?;
        if v > best.1 {
            best = (p, v);
        }
    }
    // Golden-section refinement inside the bracketing grid cell pair.
    let h = 1.0 / grid_resolution as f64;
    let (mut lo, mut hi) = ((best.0 - h).max(0.0), (best.0 + h).min(1.0));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (value(x1)?, value(x2)?);
    while hi - lo > 1e-10 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = value(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = value(x1)?;
        }
    }
    let mid = 0.5 * (lo + hi);
    let v = value(mid)?;
    if v > best.1 {
        best = (mid, v);
    }
    Ok(best)
}

/// Upper limit on the number of deterministic joint policies [`brute_force_optimum`]
/// will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

/// Exhaustive search over deterministic joint policies; the first maximiser in
/// enumeration order wins.
pub fn brute_force_optimum(game: &MarkovGame) -> Result<(JointPolicy, f64)> {
    let per_state = game.n_joint() as u128;
    let total = (0..game.n_states()).try_fold(1u128, |acc, _| acc.checked_mul(per_state));
    let total = match total {
        Some(t) if t <= BRUTE_FORCE_LIMIT => t as usize,
        other => return Err(HamlError::SearchSpaceTooLarge(other.unwrap_or(u128::MAX))),
    };
    let state_space = JointActionSpace::new(&vec![game.n_joint(); game.n_states()])?;
    let mut choice = vec![0; game.n_states()];
    let mut best: Option<(JointPolicy, f64)> = None;
    for index in 0..total {
        state_space.decode_into(index, &mut choice);
        let per_agent: Vec<Vec<usize>> = {
            let decoded: Vec<Vec<usize>> = choice.iter().map(|&j| game.space().decode(j)).collect();
            (0..game.n_agents()).map(|i| decoded.iter().map(|a| a[i]).collect()).collect()
        };
        let agents = per_agent
            .iter()
            .zip(game.action_counts())
            .map(|(acts, &c)| AgentPolicy::dirac_per_state(acts, c))
            .collect::<Result<Vec<_>>>()?;
        let pi = JointPolicy::new(agents)?;
        let j = evaluate(game, &pi)?.j;
        if best.as_ref().is_none_or(|(_, b)| j > *b) {
            best = Some((pi, j));
        }
    }
    Ok(best.expect("at least one joint policy"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub actions: Vec<usize>,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    pub steps: Vec<Step>,
    /// State reached after the last step.
    pub final_state: usize,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    fn next_state(&self, t: usize) -> usize {
        self.steps.get(t + 1).map_or(self.final_state, |s| s.state)
    }
}

fn draw<R: rand::Rng>(rng: &mut R, probs: &[f64]) -> Result<usize> {
    let dist = WeightedIndex::new(probs).map_err(|e| HamlError::Numerical(format!("sampling weights: {e}")))?;
    Ok(dist.sample(rng))
}

/// `count` trajectories of length `horizon`; trajectory `b` uses its own stream
/// `derive_seed(seed, trajectory, b)`, so the batch is identical however it is scheduled.
pub fn sample_trajectories(
    game: &MarkovGame,
    pi: &JointPolicy,
    horizon: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    if horizon == 0 || count == 0 {
        return Err(HamlError::InvalidArgument("horizon and count must be at least 1".into()));
    }
    pi.check_against(game)?;
    (0..count)
        .into_par_iter()
        .map(|b| {
            let traj_seed = derive_seed(seed, STREAM_TRAJECTORY, b as u64);
            let mut rng = rng_for(traj_seed, 0, 0);
            let mut state = draw(&mut rng, game.initial())?;
            let mut steps = Vec::with_capacity(horizon);
            for _ in 0..horizon {
                let actions = (0..game.n_agents())
                    .map(|i| draw(&mut rng, pi.agent(i).row(state)))
                    .collect::<Result<Vec<_>>>()?;
                let j = game.space().encode(&actions)?;
                let reward = game.reward(state, j);
                let next = draw(&mut rng, game.transition(state, j))?;
                steps.push(Step { state, actions, reward });
                state = next;
            }
            Ok(Trajectory {
                seed: traj_seed,
                steps,
                final_state: state,
            })
        })
        .collect()
}

/// Undiscounted state-visit frequencies over all steps of the batch.
pub fn visit_frequencies(trajectories: &[Trajectory], n_states: usize) -> Vec<f64> {
    let mut counts = vec![0.0; n_states];
    let mut total = 0.0;
    for step in trajectories.iter().flat_map(|t| &t.steps) {
        counts[step.state] += 1.0;
        total += 1.0;
    }
    counts.iter().map(|c| c / total).collect()
}

pub fn mean_reward(trajectories: &[Trajectory]) -> f64 {
    let (sum, n) = trajectories
        .iter()
        .flat_map(|t| &t.steps)
        .fold((0.0, 0usize), |(s, n), step| (s + step.reward, n + 1));
    sum / n as f64
}

/// CSV with columns `trajectory,step,state,action_0..action_{n-1},reward`.
pub fn trajectories_to_csv(trajectories: &[Trajectory], n_agents: usize) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["trajectory".to_string(), "step".into(), "state".into()];
    header.extend((0..n_agents).map(|i| format!("action_{i}")));
    header.push("reward".into());
    let csv_err = |e: csv::Error| HamlError::Numerical(format!("csv: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for (b, traj) in trajectories.iter().enumerate() {
        for (t, step) in traj.steps.iter().enumerate() {
            let mut row = vec![b.to_string(), t.to_string(), step.state.to_string()];
            row.extend(step.actions.iter().map(usize::to_string));
            row.push(format!("{:.16e}", step.reward));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| HamlError::Numerical(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Tabular softmax logits indexed `[agent][state][action]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPolicyParams {
    pub logits: Vec<Vec<Vec<f64>>>,
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / z).collect()
}

impl SoftmaxPolicyParams {
    /// All-zero logits, i.e. uniform policies.
    pub fn zeros(game: &MarkovGame) -> Self {
        Self {
            logits: game
                .action_counts()
                .iter()
                .map(|&c| vec![vec![0.0; c]; game.n_states()])
                .collect(),
        }
    }

    /// Log-probabilities of a strictly positive joint policy.
    pub fn from_policy(pi: &JointPolicy) -> Result<Self> {
        let logits = pi
            .agents()
            .iter()
            .map(|a| {
                a.rows()
                    .iter()
                    .map(|row| {
                        if row.iter().any(|&p| p <= 0.0) {
                            Err(HamlError::InvalidPolicy("softmax parameters need strictly positive rows".into()))
                        } else {
                            Ok(row.iter().map(|p| p.ln()).collect())
                        }
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { logits })
    }

    pub fn agent_policy(&self, agent: usize) -> Result<AgentPolicy> {
        AgentPolicy::new(self.logits[agent].iter().map(|l| softmax(l)).collect())
    }

    pub fn joint_policy(&self) -> Result<JointPolicy> {
        JointPolicy::new((0..self.logits.len()).map(|i| self.agent_policy(i)).collect::<Result<Vec<_>>>()?)
    }

    fn check(&self) -> Result<()> {
        if self.logits.iter().flatten().flatten().any(|l| !l.is_finite()) {
            return Err(HamlError::Numerical("non-finite logit".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Haa2cMode {
    #[default]
    Exact,
    MonteCarlo,
}

/// Baseline used inside the advantage estimate in Monte-Carlo mode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Critic {
    /// Exact `V` of the current policy.
    #[default]
    Exact,
    /// Per-state mean of the truncated discounted returns observed in the batch.
    BatchAverage,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Haa2cConfig {
    #[serde(default)]
    pub mode: Haa2cMode,
    #[serde(default = "d_epochs")]
    pub mini_epochs: usize,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_lambda")]
    pub gae_lambda: f64,
    #[serde(default = "d_batch")]
    pub batch: usize,
    #[serde(default = "d_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub critic: Critic,
    /// Exact mode only: halve the step until the objective does not decrease.
    #[serde(default = "d_true")]
    pub backtracking: bool,
}

fn d_epochs() -> usize {
    5
}
fn d_lr() -> f64 {
    0.5
}
fn d_lambda() -> f64 {
    0.95
}
fn d_batch() -> usize {
    32
}
fn d_horizon() -> usize {
    32
}
fn d_true() -> bool {
    true
}

impl Default for Haa2cConfig {
    fn default() -> Self {
        Self {
            mode: Haa2cMode::Exact,
            mini_epochs: d_epochs(),
            learning_rate: d_lr(),
            gae_lambda: d_lambda(),
            batch: d_batch(),
            horizon: d_horizon(),
            critic: Critic::Exact,
            backtracking: true,
        }
    }
}

impl Haa2cConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mini_epochs == 0 || self.batch == 0 || self.horizon == 0 {
            return Err(HamlError::Config("haa2c mini_epochs, batch and horizon must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(HamlError::Config(format!("haa2c.learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(HamlError::Config(format!("haa2c.gae_lambda must lie in [0, 1], got {}", self.gae_lambda)));
        }
        Ok(())
    }
}

/// Exact objective of one agent's update:
/// `L(θ) = Σ_s ρ̃(s) Σ_c π_θ(c|s)·u_s(c)`, where `u_s(c)` is the joint advantage of the
/// old policy averaged over predecessors at their new rows and the remaining agents at
/// their old rows, with the updating agent fixed to `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct Haa2cExactObjective {
    pub weights: Vec<f64>,
    pub terms: Vec<Vec<f64>>,
}

impl Haa2cExactObjective {
    pub fn new(
        game: &MarkovGame,
        eval: &EvalBundle,
        pi_old: &JointPolicy,
        pi_new: &JointPolicy,
        agent: usize,
        preds: &[usize],
    ) -> Self {
        let k = game.action_counts()[agent];
        let mut actions = vec![0; game.n_agents()];
        let terms = (0..game.n_states())
            .map(|s| {
                let mut u = vec![0.0; k];
                for j in 0..game.n_joint() {
                    game.space().decode_into(j, &mut actions);
                    let w: f64 = (0..game.n_agents())
                        .filter(|&i| i != agent)
                        .map(|i| {
                            let source = if preds.contains(&i) { pi_new } else { pi_old };
                            source.agent(i).prob(s, actions[i])
                        })
                        .product();
                    if w != 0.0 {
                        u[actions[agent]] += w * eval.advantage(s, j);
                    }
                }
                u
            })
            .collect();
        Self {
            weights: eval.rho_normalized.clone(),
            terms,
        }
    }

    pub fn value(&self, logits: &[Vec<f64>]) -> f64 {
        self.weights
            .iter()
            .zip(&self.terms)
            .zip(logits)
            .map(|((w, u), l)| w * softmax(l).iter().zip(u).map(|(p, x)| p * x).sum::<f64>())
            .sum()
    }

    /// `∂L/∂θ_{s,b} = ρ̃(s)·π(b|s)·(u_s(b) − Σ_c π(c|s)u_s(c))`.
    pub fn gradient(&self, logits: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.weights
            .iter()
            .zip(&self.terms)
            .zip(logits)
            .map(|((w, u), l)| {
                let p = softmax(l);
                let mean: f64 = p.iter().zip(u).map(|(a, b)| a * b).sum();
                p.iter().zip(u).map(|(pb, ub)| w * pb * (ub - mean)).collect()
            })
            .collect()
    }
}

/// The same objective in importance-weighted form: an expectation under the old joint
/// policy of the joint ratio of the updated agents times the joint advantage.
pub fn haa2c_objective_ratio(
    game: &MarkovGame,
    eval: &EvalBundle,
    pi_old: &JointPolicy,
    pi_new: &JointPolicy,
    agent: usize,
    preds: &[usize],
    candidate: &AgentPolicy,
) -> f64 {
    let mut actions = vec![0; game.n_agents()];
    let mut total = 0.0;
    for s in 0..game.n_states() {
        let mut inner = 0.0;
        for j in 0..game.n_joint() {
            game.space().decode_into(j, &mut actions);
            let p_old = pi_old.prob(s, &actions);
            if p_old == 0.0 {
                continue;
            }
            let mut ratio = candidate.prob(s, actions[agent]) / pi_old.agent(agent).prob(s, actions[agent]);
            for &p in preds {
                ratio *= pi_new.agent(p).prob(s, actions[p]) / pi_old.agent(p).prob(s, actions[p]);
            }
            inner += p_old * ratio * eval.advantage(s, j);
        }
        total += eval.rho_normalized[s] * inner;
    }
    total
}

/// One sample of the Monte-Carlo objective.
#[derive(Clone, Debug, PartialEq)]
pub struct McSample {
    pub state: usize,
    pub actions: Vec<usize>,
    pub advantage: f64,
    /// `γ^t`, so weighted averages target the discounted visitation.
    pub weight: f64,
}

/// Generalised advantage estimates `Â_t = Σ_l (γλ)^l δ_{t+l}` with
/// `δ_t = r_t + γV(s_{t+1}) − V(s_t)`, truncated at the horizon.
pub fn gae(trajectory: &Trajectory, values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let t_max = trajectory.horizon();
    let mut out = vec![0.0; t_max];
    let mut running = 0.0;
    for t in (0..t_max).rev() {
        let step = &trajectory.steps[t];
        let delta = step.reward + gamma * values[trajectory.next_state(t)] - values[step.state];
        running = delta + gamma * lambda * running;
        out[t] = running;
    }
    out
}

/// Per-state average of truncated discounted returns-to-go; unvisited states get 0.
pub fn batch_average_values(trajectories: &[Trajectory], n_states: usize, gamma: f64) -> Vec<f64> {
    let mut sum = vec![0.0; n_states];
    let mut count = vec![0usize; n_states];
    for traj in trajectories {
        let mut ret = 0.0;
        for step in traj.steps.iter().rev() {
            ret = step.reward + gamma * ret;
            sum[step.state] += ret;
            count[step.state] += 1;
        }
    }
    sum.iter()
        .zip(&count)
        .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect()
}

pub fn mc_samples(trajectories: &[Trajectory], values: &[f64], gamma: f64, lambda: f64) -> Vec<McSample> {
    let mut out = Vec::new();
    for traj in trajectories {
        let adv = gae(traj, values, gamma, lambda);
        for (t, (step, a)) in traj.steps.iter().zip(adv).enumerate() {
            out.push(McSample {
                state: step.state,
                actions: step.actions.clone(),
                advantage: a,
                weight: gamma.powi(t as i32),
            });
        }
    }
    out
}

/// `Σ w·M·(π_θ/π_old)·Â / Σ w` where `M` is the product of the predecessors'
/// new-to-old ratios at the sampled actions.
#[derive(Clone, Debug, PartialEq)]
pub struct Haa2cMcObjective {
    agent: usize,
    /// `(state, own action, w·M·Â / (π_old(a|s)·Σw))` per sample.
    terms: Vec<(usize, usize, f64)>,
}

impl Haa2cMcObjective {
    pub fn new(samples: &[McSample], pi_old: &JointPolicy, pi_new: &JointPolicy, agent: usize, preds: &[usize]) -> Self {
        let total: f64 = samples.iter().map(|x| x.weight).sum();
        let terms = samples
            .iter()
            .map(|x| {
                let m: f64 = preds
                    .iter()
                    .map(|&p| pi_new.agent(p).prob(x.state, x.actions[p]) / pi_old.agent(p).prob(x.state, x.actions[p]))
                    .product();
                let own = x.actions[agent];
                let coef = x.weight * m * x.advantage / (pi_old.agent(agent).prob(x.state, own) * total);
                (x.state, own, coef)
            })
            .collect();
        Self { agent, terms }
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn value(&self, logits: &[Vec<f64>]) -> f64 {
        let probs: Vec<Vec<f64>> = logits.iter().map(|l| softmax(l)).collect();
        self.terms.iter().map(|&(s, a, c)| c * probs[s][a]).sum()
    }

    pub fn gradient(&self, logits: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let probs: Vec<Vec<f64>> = logits.iter().map(|l| softmax(l)).collect();
        let mut grad: Vec<Vec<f64>> = logits.iter().map(|l| vec![0.0; l.len()]).collect();
        for &(s, a, c) in &self.terms {
            let p = &probs[s];
            for (b, g) in grad[s].iter_mut().enumerate() {
                let indicator = if a == b { 1.0 } else { 0.0 };
                *g += c * p[a] * (indicator - p[b]);
            }
        }
        grad
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Haa2cRecord {
    pub k: usize,
    pub permutation: Vec<usize>,
    pub j_before: f64,
    pub j_after: f64,
    /// Objective gain of each agent's update (indexed by agent).
    pub objective_gain: Vec<f64>,
}

fn ascend<V, G>(logits: &mut Vec<Vec<f64>>, cfg: &Haa2cConfig, value: V, gradient: G, backtrack: bool) -> Result<f64>
where
    V: Fn(&[Vec<f64>]) -> f64,
    G: Fn(&[Vec<f64>]) -> Vec<Vec<f64>>,
{
    let start = value(logits);
    for _ in 0..cfg.mini_epochs {
        let g = gradient(logits);
        if g.iter().flatten().any(|x| !x.is_finite()) {
            return Err(HamlError::Numerical("non-finite policy gradient".into()));
        }
        if g.iter().flatten().all(|&x| x == 0.0) {
            break;
        }
        let current = value(logits);
        let mut alpha = cfg.learning_rate;
        loop {
            let trial: Vec<Vec<f64>> = logits
                .iter()
                .zip(&g)
                .map(|(l, d)| l.iter().zip(d).map(|(a, b)| a + alpha * b).collect())
                .collect();
            if !backtrack || value(&trial) >= current {
                *logits = trial;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-12 * cfg.learning_rate {
                break;
            }
        }
    }
    Ok(value(logits) - start)
}

/// One HAA2C iteration: draw a permutation, then let each agent take `mini_epochs`
/// gradient steps on its objective given its predecessors' new rows.
pub fn haa2c_step(
    game: &MarkovGame,
    params: &SoftmaxPolicyParams,
    cfg: &Haa2cConfig,
    seed: u64,
    k: usize,
) -> Result<(SoftmaxPolicyParams, Haa2cRecord)> {
    cfg.validate()?;
    params.check()?;
    let pi_old = params.joint_policy()?;
    let eval = evaluate(game, &pi_old)?;
    let n = game.n_agents();
    let mut permutation: Vec<usize> = (0..n).collect();
    permutation.shuffle(&mut rng_for(seed, STREAM_HAA2C, 2 * k as u64));

    let samples = match cfg.mode {
        Haa2cMode::Exact => Vec::new(),
        Haa2cMode::MonteCarlo => {
            let batch_seed = derive_seed(seed, STREAM_HAA2C, 2 * k as u64 + 1);
            let trajs = sample_trajectories(game, &pi_old, cfg.horizon, cfg.batch, batch_seed)?;
            let values = match cfg.critic {
                Critic::Exact => eval.v.clone(),
                Critic::BatchAverage => batch_average_values(&trajs, game.n_states(), game.gamma()),
            };
            mc_samples(&trajs, &values, game.gamma(), cfg.gae_lambda)
        }
    };

    let mut next = params.clone();
    let mut pi_new = pi_old.clone();
    let mut gains = vec![0.0; n];
    for (m, &agent) in permutation.iter().enumerate() {
        let preds = &permutation[..m];
        let mut logits = next.logits[agent].clone();
        gains[agent] = match cfg.mode {
            Haa2cMode::Exact => {
                let obj = Haa2cExactObjective::new(game, &eval, &pi_old, &pi_new, agent, preds);
                ascend(&mut logits, cfg, |l| obj.value(l), |l| obj.gradient(l), cfg.backtracking)?
            }
            Haa2cMode::MonteCarlo => {
                let obj = Haa2cMcObjective::new(&samples, &pi_old, &pi_new, agent, preds);
                ascend(&mut logits, cfg, |l| obj.value(l), |l| obj.gradient(l), false)?
            }
        };
        next.logits[agent] = logits;
        pi_new.set_agent(agent, next.agent_policy(agent)?);
    }
    next.check()?;
    let j_after = evaluate(game, &pi_new)?.j;
    Ok((
        next,
        Haa2cRecord {
            k,
            permutation,
            j_before: eval.j,
            j_after,
            objective_gain: gains,
        },
    ))
}
