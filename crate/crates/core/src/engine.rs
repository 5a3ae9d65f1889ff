//! The sequential update loop.
//!
//! Each iteration freezes the advantages of the current joint policy, draws a
//! permutation of the agents, and lets every agent in turn maximise its expected
//! mirror operator given the rows its predecessors have just adopted. Any state whose
//! solver row scores below the old row is reverted, so every state's value is
//! non-decreasing by construction.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::conditional::Predecessors;
use crate::drift::{drift_gradient, drift_row, HadfKind, HadfSpec, KlDirection, StateWeighting};
use crate::error::{HamlError, Result};
use crate::eval::{evaluate, nash_gap_given};
use crate::game::{argmax, normalise, one_hot, AgentPolicy, JointPolicy, MarkovGame};
use crate::mirror::{expected_hamo, HamoContext};
use crate::neighborhood::{project_by_rejection, NeighborhoodKind, NeighborhoodSpec};
use crate::seeding::{rng_for, STREAM_PERMUTATION};

/// The greedy solver keeps the old row unless the best action beats it by more than this.
pub const GREEDY_MARGIN: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationKind {
    #[default]
    Uniform,
    /// `schedule[k % len]`; an empty schedule cycles through the rotations of `0..n`.
    FixedCycle,
    /// `schedule[k]`, an error once exhausted.
    FixedList,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PermutationSampler {
    #[serde(default)]
    pub kind: PermutationKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub schedule: Vec<Vec<usize>>,
}

impl PermutationSampler {
    pub fn uniform(seed: u64) -> Self {
        Self {
            kind: PermutationKind::Uniform,
            seed,
            schedule: Vec::new(),
        }
    }

    pub fn fixed(order: Vec<usize>) -> Self {
        Self {
            kind: PermutationKind::FixedCycle,
            seed: 0,
            schedule: vec![order],
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for (idx, perm) in self.schedule.iter().enumerate() {
            let mut seen = vec![false; n];
            let ok = perm.len() == n
                && perm.iter().all(|&i| i < n && !std::mem::replace(&mut seen[i], true));
            if !ok {
                return Err(HamlError::Config(format!(
                    "permutations.schedule[{idx}] = {perm:?} is not a permutation of 0..{n}"
                )));
            }
        }
        if self.kind == PermutationKind::FixedList && self.schedule.is_empty() {
            return Err(HamlError::Config("permutations.schedule is empty for fixed_list".into()));
        }
        Ok(())
    }

    /// The permutation used at iteration `k`; a pure function of `(seed, k)`.
    pub fn draw(&self, n: usize, k: usize) -> Result<Vec<usize>> {
        match self.kind {
            PermutationKind::Uniform => {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng_for(self.seed, STREAM_PERMUTATION, k as u64));
                Ok(perm)
            }
            PermutationKind::FixedCycle if self.schedule.is_empty() => Ok((0..n).map(|i| (i + k) % n).collect()),
            PermutationKind::FixedCycle => Ok(self.schedule[k % self.schedule.len()].clone()),
            PermutationKind::FixedList => self.schedule.get(k).cloned().ok_or_else(|| {
                HamlError::InvalidArgument(format!(
                    "fixed permutation list has {} entries, iteration {k} requested",
                    self.schedule.len()
                ))
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InnerSolver {
    /// Exact maximiser where one exists (trivial drift: greedy vertex; `KL(π̂‖π)`:
    /// exponential tilt), otherwise exponentiated gradient with default settings.
    #[default]
    ClosedFormGreedy,
    ExpGradient {
        #[serde(default = "default_steps")]
        steps: usize,
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
        #[serde(default = "default_backtracking")]
        backtracking_factor: f64,
    },
}

fn default_steps() -> usize {
    200
}
fn default_learning_rate() -> f64 {
    1.0
}
fn default_backtracking() -> f64 {
    0.5
}


impl InnerSolver {
    pub fn exp_gradient() -> Self {
        InnerSolver::ExpGradient {
            steps: default_steps(),
            learning_rate: default_learning_rate(),
            backtracking_factor: default_backtracking(),
        }
    }

    fn validate(&self) -> Result<()> {
        if let InnerSolver::ExpGradient {
            steps,
            learning_rate,
            backtracking_factor,
        } = *self
        {
            if steps == 0 || !(learning_rate > 0.0) || !(backtracking_factor > 0.0 && backtracking_factor < 1.0) {
                return Err(HamlError::Config(format!(
                    "inner_solver needs steps >= 1, learning_rate > 0, backtracking_factor in (0, 1); got {steps}, {learning_rate}, {backtracking_factor}"
                )));
            }
        }
        Ok(())
    }
}

/// A single setting shared by all agents, or one per agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAgent<T> {
    Shared(T),
    Each(Vec<T>),
}

impl<T> PerAgent<T> {
    pub fn get(&self, agent: usize) -> &T {
        match self {
            PerAgent::Shared(x) => x,
            PerAgent::Each(xs) => &xs[agent],
        }
    }

    fn check_len(&self, n: usize, field: &str) -> Result<()> {
        match self {
            PerAgent::Each(xs) if xs.len() != n => Err(HamlError::Config(format!(
                "{field} lists {} entries for {n} agents",
                xs.len()
            ))),
            _ => Ok(()),
        }
    }

    fn all(&self) -> Box<dyn Iterator<Item = &T> + '_> {
        match self {
            PerAgent::Shared(x) => Box::new(std::iter::once(x)),
            PerAgent::Each(xs) => Box::new(xs.iter()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub hadf: PerAgent<HadfSpec>,
    #[serde(default = "default_neighborhood")]
    pub neighborhood: PerAgent<NeighborhoodSpec>,
    #[serde(default)]
    pub beta: StateWeighting,
    #[serde(default = "default_nu")]
    pub nu: StateWeighting,
    #[serde(default)]
    pub permutations: PermutationSampler,
    #[serde(default)]
    pub inner_solver: InnerSolver,
    pub iterations: usize,
    #[serde(default)]
    pub stop_gap: f64,
}

fn default_neighborhood() -> PerAgent<NeighborhoodSpec> {
    PerAgent::Shared(NeighborhoodSpec::unconstrained())
}

fn default_nu() -> StateWeighting {
    StateWeighting::Beta
}

impl EngineConfig {
    /// Trivial drift, no constraint, greedy solver, uniform permutations.
    pub fn greedy(iterations: usize) -> Self {
        Self::with(HadfSpec::trivial(), NeighborhoodSpec::unconstrained(), iterations)
    }

    pub fn with(hadf: HadfSpec, neighborhood: NeighborhoodSpec, iterations: usize) -> Self {
        Self {
            hadf: PerAgent::Shared(hadf),
            neighborhood: PerAgent::Shared(neighborhood),
            beta: StateWeighting::RhoNormalized,
            nu: default_nu(),
            permutations: PermutationSampler::uniform(0),
            inner_solver: InnerSolver::ClosedFormGreedy,
            iterations,
            stop_gap: 0.0,
        }
    }

    pub fn validate(&self, n_agents: usize) -> Result<()> {
        if self.iterations == 0 {
            return Err(HamlError::Config("iterations must be at least 1".into()));
        }
        if !(self.stop_gap >= 0.0) {
            return Err(HamlError::Config(format!("stop_gap must be >= 0, got {}", self.stop_gap)));
        }
        if self.beta == StateWeighting::Beta {
            return Err(HamlError::Config(
                "beta must be rho_normalized or uniform".into(),
            ));
        }
        self.hadf.check_len(n_agents, "hadf")?;
        self.neighborhood.check_len(n_agents, "neighborhood")?;
        for h in self.hadf.all() {
            h.validate()?;
        }
        for nb in self.neighborhood.all() {
            nb.validate()?;
        }
        self.permutations.validate(n_agents)?;
        self.inner_solver.validate()
    }
}

/// Audit record of one iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub permutation: Vec<usize>,
    pub j_before: f64,
    pub j_after: f64,
    pub v_before: Vec<f64>,
    pub v_after: Vec<f64>,
    pub nash_gap: f64,
    /// Indexed by agent, not by position in the permutation.
    pub expected_hamo: Vec<f64>,
    pub drift: Vec<f64>,
    pub fallbacks: usize,
}

/// Per-state maximiser before projection.
fn solve_row(ctx: &HamoContext, s: usize, solver: &InnerSolver) -> Vec<f64> {
    let table = ctx.table(s);
    let old = ctx.old_policy().row(s);
    let g = table.linear_term();
    let weight = ctx.drift_weight(s);
    match *solver {
        InnerSolver::ClosedFormGreedy => match ctx.hadf.kind {
            HadfKind::Trivial => greedy_row(&g, old),
            HadfKind::KlPenalty if ctx.hadf.kl_direction == KlDirection::NewToOld => {
                let c = ctx.hadf.tau * weight;
                if c == 0.0 {
                    greedy_row(&g, old)
                } else {
                    exponential_tilt(old, &g, c)
                }
            }
            _ => exp_gradient_row(ctx, s, default_steps(), default_learning_rate(), default_backtracking()),
        },
        InnerSolver::ExpGradient {
            steps,
            learning_rate,
            backtracking_factor,
        } => exp_gradient_row(ctx, s, steps, learning_rate, backtracking_factor),
    }
}

/// Lowest-index argmax vertex, or the old row when it is already within
/// [`GREEDY_MARGIN`] of the best action.
pub fn greedy_row(g: &[f64], old: &[f64]) -> Vec<f64> {
    let best = argmax(g);
    let current: f64 = g.iter().zip(old).map(|(a, p)| a * p).sum();
    if g[best] - current <= GREEDY_MARGIN {
        old.to_vec()
    } else {
        one_hot(g.len(), best)
    }
}

/// `π̂ ∝ π_old·exp(g/c)`, the maximiser of `⟨g, π̂⟩ − c·KL(π̂‖π_old)`.
pub fn exponential_tilt(old: &[f64], g: &[f64], c: f64) -> Vec<f64> {
    let shift = old
        .iter()
        .zip(g)
        .filter(|(p, _)| **p > 0.0)
        .map(|(_, x)| x / c)
        .fold(f64::NEG_INFINITY, f64::max);
    normalise(
        old.iter()
            .zip(g)
            .map(|(&p, &x)| if p > 0.0 { p * (x / c - shift).exp() } else { 0.0 })
            .collect(),
    )
}

fn exp_gradient_row(ctx: &HamoContext, s: usize, steps: usize, lr: f64, bt: f64) -> Vec<f64> {
    let table = ctx.table(s);
    let old = ctx.old_policy().row(s);
    let g = table.linear_term();
    let weight = ctx.drift_weight(s);
    let hadf = &ctx.hadf;
    let objective = |x: &[f64]| -> f64 {
        let lin: f64 = g.iter().zip(x).map(|(a, p)| a * p).sum();
        match drift_row(hadf, table, old, x) {
            Ok(0.0) => lin,
            Ok(d) => lin - weight * d,
            Err(_) => f64::NEG_INFINITY,
        }
    };

    let mut best = old.to_vec();
    let mut best_h = objective(old);
    let k = old.len() as f64;
    let mut x = if hadf.allows_new_support() && old.contains(&0.0) {
        normalise(old.iter().map(|p| 0.9 * p + 0.1 / k).collect())
    } else {
        old.to_vec()
    };
    let mut h = objective(&x);
    if h > best_h {
        best = x.clone();
        best_h = h;
    }
    for _ in 0..steps {
        let grad: Vec<f64> = if hadf.kind == HadfKind::Trivial {
            g.clone()
        } else {
            drift_gradient(hadf, table, old, &x)
                .iter()
                .zip(&g)
                .map(|(d, a)| a - weight * d)
                .collect()
        };
        let top = x
            .iter()
            .zip(&grad)
            .filter(|(p, _)| **p > 0.0)
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            break;
        }
        let mut eta = lr;
        let mut accepted = None;
        while eta > 1e-12 {
            let y = normalise(x.iter().zip(&grad).map(|(p, v)| p * (eta * (v - top)).exp()).collect());
            let hy = objective(&y);
            if hy >= h {
                accepted = Some((y, hy));
                break;
            }
            eta *= bt;
        }
        let Some((y, hy)) = accepted else { break };
        let moved = y.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = y;
        h = hy;
        if h > best_h {
            best = x.clone();
            best_h = h;
        }
        if moved < 1e-15 {
            break;
        }
    }
    best
}

fn resolve_weights(nb: &NeighborhoodSpec, eval: &crate::eval::EvalBundle) -> Result<Vec<f64>> {
    if nb.kind == NeighborhoodKind::ExpectedKl {
        nb.weights(eval)
    } else {
        Ok(Vec::new())
    }
}

fn solve_and_project(
    ctx: &HamoContext,
    neighborhood: &NeighborhoodSpec,
    weights: &[f64],
    solver: &InnerSolver,
) -> Result<AgentPolicy> {
    let rows = (0..ctx.n_states()).map(|s| solve_row(ctx, s, solver)).collect();
    let raw = AgentPolicy::new(rows)?;
    project_by_rejection(neighborhood, weights, ctx.old_policy(), &raw)
}

/// Reverts every state whose row scores below the old row; returns the number reverted.
fn enforce_improvement(ctx: &HamoContext, candidate: &mut AgentPolicy) -> Result<usize> {
    let mut reverted = 0;
    for s in 0..ctx.n_states() {
        let score = ctx.hamo_row(candidate.row(s), s)?;
        if !(score >= 0.0) {
            candidate.set_row(s, ctx.old_policy().row(s).to_vec())?;
            reverted += 1;
        }
    }
    Ok(reverted)
}

/// Maximises the expected mirror operator within the neighborhood. The result is
/// contained in the neighborhood and never scores below the old policy at any state.
///
/// `weights` is the state distribution of an `expected_kl` neighborhood (ignored
/// otherwise).
pub fn inner_maximize(
    ctx: &HamoContext,
    neighborhood: &NeighborhoodSpec,
    weights: &[f64],
    solver: &InnerSolver,
) -> Result<AgentPolicy> {
    let mut policy = solve_and_project(ctx, neighborhood, weights, solver)?;
    enforce_improvement(ctx, &mut policy)?;
    Ok(policy)
}

/// One iteration from `pi`, using permutation draw `k`.
pub fn haml_step(game: &MarkovGame, pi: &JointPolicy, cfg: &EngineConfig, k: usize) -> Result<(JointPolicy, IterationRecord)> {
    cfg.validate(game.n_agents())?;
    let eval = evaluate(game, pi)?;
    let beta = cfg.beta.sampling(&eval)?;
    let nu = cfg.nu.resolve(&eval, &beta);
    let permutation = cfg.permutations.draw(game.n_agents(), k)?;

    let n = game.n_agents();
    let mut next = pi.clone();
    let mut hamo = vec![0.0; n];
    let mut drift = vec![0.0; n];
    let mut fallbacks = 0;
    for (m, &agent) in permutation.iter().enumerate() {
        let preds = Predecessors::new(&permutation[..m], &next);
        let ctx = HamoContext::new(game, &eval, pi, agent, &preds, *cfg.hadf.get(agent), nu.clone(), beta.clone())?;
        let nb = cfg.neighborhood.get(agent);
        let weights = resolve_weights(nb, &eval)?;
        let mut candidate = solve_and_project(&ctx, nb, &weights, &cfg.inner_solver)?;
        fallbacks += enforce_improvement(&ctx, &mut candidate)?;
        let score = expected_hamo(&ctx, &candidate)?;
        if !score.value.is_finite() {
            return Err(HamlError::Numerical(format!(
                "iteration {k}, agent {agent}: expected mirror objective is {}",
                score.value
            )));
        }
        hamo[agent] = score.value;
        drift[agent] = score.drift;
        next.set_agent(agent, candidate);
    }

    let after = evaluate(game, &next)?;
    let nash_gap = nash_gap_given(game, &next, after.j)?;
    let record = IterationRecord {
        k,
        permutation,
        j_before: eval.j,
        j_after: after.j,
        v_before: eval.v,
        v_after: after.v,
        nash_gap,
        expected_hamo: hamo,
        drift,
        fallbacks,
    };
    log::debug!(
        "iteration {k}: J {:.12} -> {:.12}, gap {:.3e}, fallbacks {}",
        record.j_before,
        record.j_after,
        record.nash_gap,
        record.fallbacks
    );
    Ok((next, record))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub records: Vec<IterationRecord>,
    pub policy: JointPolicy,
}

/// Iterates [`haml_step`] up to `cfg.iterations` times. `seed` replaces the
/// permutation sampler's seed. With `stop_gap > 0` the loop ends as soon as the Nash
/// gap falls to `stop_gap` or below.
pub fn run(game: &MarkovGame, pi0: &JointPolicy, cfg: &EngineConfig, seed: u64) -> Result<RunOutput> {
    cfg.validate(game.n_agents())?;
    pi0.check_against(game)?;
    let mut cfg = cfg.clone();
    cfg.permutations.seed = seed;
    let mut pi = pi0.clone();
    let mut records = Vec::with_capacity(cfg.iterations);
    for k in 0..cfg.iterations {
        let (next, record) = haml_step(game, &pi, &cfg, k)?;
        pi = next;
        let stop = cfg.stop_gap > 0.0 && record.nash_gap <= cfg.stop_gap;
        records.push(record);
        if stop {
            break;
        }
    }
    Ok(RunOutput { records, policy: pi })
}
