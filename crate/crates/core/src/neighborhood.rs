//! Hard constraint sets around an agent's current policy.

use serde::{Deserialize, Serialize};

use crate::drift::{kl_divergence, StateWeighting};
use crate::error::{HamlError, Result};
use crate::eval::EvalBundle;
use crate::game::{tv_distance, AgentPolicy, JointPolicy, MarkovGame};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborhoodKind {
    #[default]
    Unconstrained,
    PerStateKl,
    ExpectedKl,
    PerStateTv,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeighborhoodSpec {
    pub kind: NeighborhoodKind,
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub weighting: StateWeighting,
}

impl Default for NeighborhoodSpec {
    fn default() -> Self {
        Self::unconstrained()
    }
}

impl NeighborhoodSpec {
    pub fn unconstrained() -> Self {
        Self {
            kind: NeighborhoodKind::Unconstrained,
            delta: 0.0,
            weighting: StateWeighting::RhoNormalized,
        }
    }

    pub fn per_state_kl(delta: f64) -> Self {
        Self {
            kind: NeighborhoodKind::PerStateKl,
            delta,
            ..Self::unconstrained()
        }
    }

    pub fn expected_kl(delta: f64) -> Self {
        Self {
            kind: NeighborhoodKind::ExpectedKl,
            delta,
            ..Self::unconstrained()
        }
    }

    pub fn per_state_tv(delta: f64) -> Self {
        Self {
            kind: NeighborhoodKind::PerStateTv,
            delta,
            ..Self::unconstrained()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != NeighborhoodKind::Unconstrained && !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(HamlError::Config(format!(
                "neighborhood.delta must be positive, got {}",
                self.delta
            )));
        }
        if self.kind == NeighborhoodKind::ExpectedKl && self.weighting == StateWeighting::Beta {
            return Err(HamlError::Config(
                "expected_kl weighting must be rho_normalized or uniform".into(),
            ));
        }
        Ok(())
    }

    /// Whether membership is decided state by state.
    pub fn is_per_state(&self) -> bool {
        self.kind != NeighborhoodKind::ExpectedKl
    }

    /// Membership of a single row; meaningless for `expected_kl`.
    pub(crate) fn row_contained(&self, old: &[f64], candidate: &[f64]) -> bool {
        match self.kind {
            NeighborhoodKind::Unconstrained => true,
            NeighborhoodKind::PerStateKl | NeighborhoodKind::ExpectedKl => kl_divergence(old, candidate) <= self.delta,
            NeighborhoodKind::PerStateTv => tv_distance(old, candidate) <= self.delta,
        }
    }

    /// Membership given an already-resolved state weighting (only used by `expected_kl`).
    pub(crate) fn contains_weighted(&self, weights: &[f64], old: &AgentPolicy, candidate: &AgentPolicy) -> bool {
        match self.kind {
            NeighborhoodKind::ExpectedKl => {
                let mut total = 0.0;
                for (s, &w) in weights.iter().enumerate() {
                    let d = kl_divergence(old.row(s), candidate.row(s));
                    if d.is_infinite() {
                        return false;
                    }
                    total += w * d;
                }
                total <= self.delta
            }
            _ => (0..old.n_states()).all(|s| self.row_contained(old.row(s), candidate.row(s))),
        }
    }

    pub fn weights(&self, eval: &EvalBundle) -> Result<Vec<f64>> {
        self.weighting.sampling(eval)
    }
}

/// Whether `candidate` lies in agent `agent`'s neighborhood around its policy in `pi`.
pub fn contains(
    spec: &NeighborhoodSpec,
    game: &MarkovGame,
    eval: &EvalBundle,
    pi: &JointPolicy,
    agent: usize,
    candidate: &AgentPolicy,
) -> Result<bool> {
    spec.validate()?;
    if agent >= game.n_agents() {
        return Err(HamlError::InvalidArgument(format!("agent {agent} out of range")));
    }
    let old = pi.agent(agent);
    if candidate.n_states() != old.n_states() || candidate.n_actions() != old.n_actions() {
        return Err(HamlError::InvalidPolicy(format!(
            "candidate is {}x{}, agent {agent} policy is {}x{}",
            candidate.n_states(),
            candidate.n_actions(),
            old.n_states(),
            old.n_actions()
        )));
    }
    let weights = match spec.kind {
        NeighborhoodKind::ExpectedKl => spec.weights(eval)?,
        _ => Vec::new(),
    };
    Ok(spec.contains_weighted(&weights, old, candidate))
}

/// Total-variation radius `δ'` such that every candidate whose rows are all within `δ'`
/// of the old rows is contained.
///
/// For the KL kinds this uses `KL(p‖q) ≤ χ²(p‖q) ≤ 2t²/(p_min − t) + t`, where `p_min` is
/// the smallest positive old probability and the trailing `t` covers mass moved onto
/// actions the old row never plays.
pub fn closed_ball_witness(spec: &NeighborhoodSpec, pi: &JointPolicy, agent: usize) -> f64 {
    match spec.kind {
        NeighborhoodKind::Unconstrained => 1.0,
        NeighborhoodKind::PerStateTv => spec.delta.min(1.0),
        NeighborhoodKind::PerStateKl | NeighborhoodKind::ExpectedKl => {
            let p_min = pi
                .agent(agent)
                .rows()
                .iter()
                .flatten()
                .copied()
                .filter(|&p| p > 0.0)
                .fold(1.0, f64::min);
            // Positive root of t² + (p_min + δ)t − δ·p_min = 0.
            let b = p_min + spec.delta;
            let t = (-b + (b * b + 4.0 * spec.delta * p_min).sqrt()) / 2.0;
            (t * (1.0 - 1e-6)).min(1.0)
        }
    }
}

const MAX_HALVINGS: usize = 64;

fn blend(old: &[f64], candidate: &[f64], t: f64) -> Vec<f64> {
    old.iter().zip(candidate).map(|(o, c)| o + t * (c - o)).collect()
}

/// Pulls `candidate` back toward `old` along the segment between them, halving the step
/// until it is contained: per state for the state-wise kinds, jointly for `expected_kl`.
/// Falls back to the old rows if no step is accepted.
pub fn project_by_rejection(
    spec: &NeighborhoodSpec,
    weights: &[f64],
    old: &AgentPolicy,
    candidate: &AgentPolicy,
) -> Result<AgentPolicy> {
    if spec.is_per_state() {
        let mut rows = Vec::with_capacity(old.n_states());
        for s in 0..old.n_states() {
            let (o, c) = (old.row(s), candidate.row(s));
            let mut t = 1.0;
            let mut row = None;
            for _ in 0..MAX_HALVINGS {
                let trial = blend(o, c, t);
                if spec.row_contained(o, &trial) {
                    row = Some(trial);
                    break;
                }
                t *= 0.5;
            }
            rows.push(row.unwrap_or_else(|| o.to_vec()));
        }
        AgentPolicy::new(rows)
    } else {
        let mut t = 1.0;
        for _ in 0..MAX_HALVINGS {
            let trial = AgentPolicy::new(
                (0..old.n_states())
                    .map(|s| blend(old.row(s), candidate.row(s), t))
                    .collect(),
            )?;
            if spec.contains_weighted(weights, old, &trial) {
                return Ok(trial);
            }
            t *= 0.5;
        }
        Ok(old.clone())
    }
}
