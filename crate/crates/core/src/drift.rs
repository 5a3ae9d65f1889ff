//! Drift functionals: non-negative, zero at the current policy, zero directional
//! derivatives there, and allowed to depend on the predecessors' fresh updates.
//!
//! Four kinds are provided:
//!
//! | kind         | per-state value                                                        |
//! |--------------|------------------------------------------------------------------------|
//! | `trivial`    | `0`                                                                    |
//! | `kl_penalty` | `τ·KL(π̂‖π)` (default) or `τ·KL(π‖π̂)`                                    |
//! | `squared_l2` | `τ·‖π̂ − π‖²`                                                            |
//! | `clip_relu`  | `E_{a^j∼π̄, aⁱ∼π}[ReLU((r − clip(r, 1±ε))·A^{j∪i}(s, a^j, aⁱ))]`, `r = π̂/π` |
//!
//! The last one is exactly the penalty hidden inside the clipped surrogate objective,
//! see [`crate::mirror::happo_identity_residual`].

use serde::{Deserialize, Serialize};

use crate::conditional::{AdvantageTable, Predecessors};
use crate::error::{HamlError, Result};
use crate::eval::EvalBundle;
use crate::game::{normalise, AgentPolicy, JointPolicy, MarkovGame, STOCHASTIC_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HadfKind {
    Trivial,
    KlPenalty,
    ClipRelu,
    SquaredL2,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    OldToNew,
    /// `KL(π̂‖π_old)`; its penalised maximiser has the closed form `π_old·exp(g/τ)`.
    #[default]
    NewToOld,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HadfSpec {
    pub kind: HadfKind,
    #[serde(default)]
    pub tau: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub kl_direction: KlDirection,
}

fn default_epsilon() -> f64 {
    0.2
}

impl HadfSpec {
    pub fn trivial() -> Self {
        Self {
            kind: HadfKind::Trivial,
            tau: 0.0,
            epsilon: default_epsilon(),
            kl_direction: KlDirection::default(),
        }
    }

    pub fn kl_penalty(tau: f64) -> Self {
        Self {
            kind: HadfKind::KlPenalty,
            tau,
            ..Self::trivial()
        }
    }

    pub fn kl_penalty_with(tau: f64, kl_direction: KlDirection) -> Self {
        Self {
            kl_direction,
            ..Self::kl_penalty(tau)
        }
    }

    pub fn clip_relu(epsilon: f64) -> Self {
        Self {
            kind: HadfKind::ClipRelu,
            epsilon,
            ..Self::trivial()
        }
    }

    pub fn squared_l2(tau: f64) -> Self {
        Self {
            kind: HadfKind::SquaredL2,
            tau,
            ..Self::trivial()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return Err(HamlError::Config(format!("hadf.tau must be >= 0, got {}", self.tau)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(HamlError::Config(format!(
                "hadf.epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Whether the candidate may put mass where the old row has none.
    pub fn allows_new_support(&self) -> bool {
        !matches!(
            (self.kind, self.kl_direction),
            (HadfKind::ClipRelu, _) | (HadfKind::KlPenalty, KlDirection::NewToOld)
        )
    }
}

/// Distribution over states used for the sampling distribution `β` and the drift
/// weighting `ν`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateWeighting {
    /// Same vector as the sampling distribution (only meaningful for `ν`).
    Beta,
    #[default]
    RhoNormalized,
    Uniform,
}

impl StateWeighting {
    /// Resolves a sampling distribution `β_π`. Strictly positive because `ρ ≥ (1−γ)d`.
    pub fn sampling(&self, eval: &EvalBundle) -> Result<Vec<f64>> {
        match self {
            StateWeighting::Beta => Err(HamlError::Config(
                "the sampling distribution cannot be defined in terms of itself".into(),
            )),
            StateWeighting::RhoNormalized => Ok(normalise(eval.rho_normalized.clone())),
            StateWeighting::Uniform => {
                let n = eval.v.len();
                Ok(vec![1.0 / n as f64; n])
            }
        }
    }

    /// Resolves `ν`, given the already-resolved `β`.
    pub fn resolve(&self, eval: &EvalBundle, beta: &[f64]) -> Vec<f64> {
        match self {
            StateWeighting::Beta => beta.to_vec(),
            other => other.sampling(eval).expect("non-beta kinds always resolve"),
        }
    }
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            total += a * (a / b).ln();
        }
    }
    // Rounding can leave a tiny negative value when p ≈ q.
    total.max(0.0)
}

/// `KL(p‖q)` with the conventions `0·ln 0 = 0` and `+∞` off the support of `q`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    kl(p, q)
}

/// Per-state drift of `candidate` away from `old` given the conditional table. The
/// table is only consulted by `clip_relu`.
pub fn drift_row(hadf: &HadfSpec, table: &AdvantageTable, old: &[f64], candidate: &[f64]) -> Result<f64> {
    Ok(match hadf.kind {
        HadfKind::Trivial => 0.0,
        HadfKind::KlPenalty => {
            let d = match hadf.kl_direction {
                KlDirection::NewToOld => kl(candidate, old),
                KlDirection::OldToNew => kl(old, candidate),
            };
            if d == 0.0 {
                0.0
            } else {
                hadf.tau * d
            }
        }
        HadfKind::SquaredL2 => {
            hadf.tau * old.iter().zip(candidate).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        }
        HadfKind::ClipRelu => clip_relu_drift(table, old, candidate, hadf.epsilon)?,
    })
}

pub(crate) fn clip_excess(ratio: f64, epsilon: f64) -> f64 {
    ratio - ratio.clamp(1.0 - epsilon, 1.0 + epsilon)
}

/// `Σ_{a^j} π̄(a^j) Σ_{aⁱ} π(aⁱ)·ReLU((r − clip(r))·A^{j∪i})`.
pub fn clip_relu_drift(table: &AdvantageTable, old: &[f64], candidate: &[f64], epsilon: f64) -> Result<f64> {
    let mut total = 0.0;
    for (a, (&p_old, &p_new)) in old.iter().zip(candidate).enumerate() {
        if p_old == 0.0 {
            if p_new > 0.0 {
                return Err(HamlError::InvalidArgument(format!(
                    "clip ratio undefined: action {a} has zero old probability but candidate mass {p_new}"
                )));
            }
            continue;
        }
        let excess = clip_excess(p_new / p_old, epsilon);
        if excess == 0.0 {
            continue;
        }
        for (w, adv) in table.pred_weights.iter().zip(&table.joint) {
            total += w * p_old * (excess * adv[a]).max(0.0);
        }
    }
    Ok(total)
}

/// (Sub)gradient of [`drift_row`] with respect to the candidate row.
pub(crate) fn drift_gradient(hadf: &HadfSpec, table: &AdvantageTable, old: &[f64], candidate: &[f64]) -> Vec<f64> {
    match hadf.kind {
        HadfKind::Trivial => vec![0.0; old.len()],
        HadfKind::KlPenalty => old
            .iter()
            .zip(candidate)
            .map(|(&p, &x)| match hadf.kl_direction {
                KlDirection::NewToOld if p > 0.0 => hadf.tau * ((x.max(f64::MIN_POSITIVE) / p).ln() + 1.0),
                KlDirection::NewToOld => 0.0,
                KlDirection::OldToNew => -hadf.tau * p / x.max(f64::MIN_POSITIVE),
            })
            .collect(),
        HadfKind::SquaredL2 => old.iter().zip(candidate).map(|(p, x)| 2.0 * hadf.tau * (x - p)).collect(),
        HadfKind::ClipRelu => old
            .iter()
            .zip(candidate)
            .enumerate()
            .map(|(a, (&p, &x))| {
                if p == 0.0 {
                    return 0.0;
                }
                let excess = clip_excess(x / p, hadf.epsilon);
                table
                    .pred_weights
                    .iter()
                    .zip(&table.joint)
                    .filter(|(_, adv)| excess * adv[a] > 0.0)
                    .map(|(w, adv)| w * adv[a])
                    .sum()
            })
            .collect(),
    }
}

fn check_simplex(row: &[f64], n_actions: usize) -> Result<()> {
    if row.len() != n_actions {
        return Err(HamlError::InvalidArgument(format!(
            "candidate row has {} entries, expected {n_actions}",
            row.len()
        )));
    }
    let sum: f64 = row.iter().sum();
    if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(HamlError::InvalidArgument(format!(
            "candidate row is off the simplex (sum {sum})"
        )));
    }
    Ok(())
}

/// `𝔇ⁱ_π(π̂ⁱ | s, π̄^{j_{1:m}})` for one candidate row.
#[allow(clippy::too_many_arguments)]
pub fn drift_state(
    hadf: &HadfSpec,
    game: &MarkovGame,
    eval: &EvalBundle,
    pi: &JointPolicy,
    agent: usize,
    candidate: &[f64],
    s: usize,
    preds: &Predecessors<'_>,
) -> Result<f64> {
    hadf.validate()?;
    preds.check(game.n_agents(), agent)?;
    check_simplex(candidate, game.action_counts()[agent])?;
    let old = pi.agent(agent).row(s);
    let table = if hadf.kind == HadfKind::ClipRelu {
        AdvantageTable::build(game, eval, pi, agent, preds, s)?
    } else {
        AdvantageTable::without_predecessors(vec![0.0; old.len()])
    };
    drift_row(hadf, &table, old, candidate)
}

/// `E_{s∼ν}[𝔇ⁱ_π(π̂ⁱ | s, π̄)]`.
#[allow(clippy::too_many_arguments)]
pub fn drift_expected(
    hadf: &HadfSpec,
    nu: &[f64],
    game: &MarkovGame,
    eval: &EvalBundle,
    pi: &JointPolicy,
    agent: usize,
    candidate: &AgentPolicy,
    preds: &Predecessors<'_>,
) -> Result<f64> {
    let mut total = 0.0;
    for (s, &w) in nu.iter().enumerate() {
        let d = drift_state(hadf, game, eval, pi, agent, candidate.row(s), s, preds)?;
        if w != 0.0 {
            total += w * d;
        }
    }
    Ok(total)
}

/// Finite-difference directional derivative magnitude of the drift at the old row,
/// `|𝔇(π + h·u) − 𝔇(π)| / h`, with no predecessors.
#[allow(clippy::too_many_arguments)]
pub fn gateaux_residual(
    hadf: &HadfSpec,
    game: &MarkovGame,
    eval: &EvalBundle,
    pi: &JointPolicy,
    agent: usize,
    s: usize,
    direction: &[f64],
    step: f64,
) -> Result<f64> {
    if !(step > 0.0) {
        return Err(HamlError::InvalidArgument("step must be positive".into()));
    }
    if direction.iter().sum::<f64>().abs() > 1e-12 {
        return Err(HamlError::InvalidArgument("direction must sum to zero".into()));
    }
    let old = pi.agent(agent).row(s);
    let moved: Vec<f64> = old.iter().zip(direction).map(|(p, u)| p + step * u).collect();
    if moved.iter().any(|&p| p < 0.0) {
        return Err(HamlError::InvalidArgument("step leaves the simplex".into()));
    }
    let preds = Predecessors::none(pi);
    let at_old = drift_state(hadf, game, eval, pi, agent, old, s, &preds)?;
    // Rounding in `moved` can push its sum a hair away from one; rescale within tolerance.
    let total: f64 = moved.iter().sum();
    let moved: Vec<f64> = moved.iter().map(|p| p / total).collect();
    let at_moved = drift_state(hadf, game, eval, pi, agent, &moved, s, &preds)?;
    Ok((at_moved - at_old).abs() / step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::evaluate;
    use crate::game::{build_prop2_game, random_game, random_joint_policy, RandomGameSpec};

    fn no_table(k: usize) -> AdvantageTable {
        AdvantageTable::without_predecessors(vec![0.0; k])
    }

    #[test]
    fn kl_worked_value() {
        // Oracle: 0.75·ln(1.5) + 0.25·ln(0.5), summed directly.
        let oracle = 0.75 * (0.75f64 / 0.5).ln() + 0.25 * (0.25f64 / 0.5).ln();
        let d = drift_row(&HadfSpec::kl_penalty(1.0), &no_table(2), &[0.5, 0.5], &[0.75, 0.25]).unwrap();
        assert!((d - oracle).abs() < 1e-15);
        assert!((d - 0.1308).abs() < 1e-4);
    }

    #[test]
    fn clip_relu_worked_value() {
        let table = AdvantageTable::without_predecessors(vec![1.0, -1.0]);
        let d = clip_relu_drift(&table, &[0.5, 0.5], &[0.8, 0.2], 0.2).unwrap();
        // 0.5·ReLU((1.6 − 1.2)·1) + 0.5·ReLU((0.4 − 0.8)·(−1))
        assert!((d - 0.4).abs() < 1e-12);
    }

    #[test]
    fn zero_at_identity_for_every_kind() {
        let g = random_game(&RandomGameSpec::new(3, 2, &[3, 2], 0.9, (-1.0, 1.0))).unwrap();
        let pi = random_joint_policy(&g, 3);
        let e = evaluate(&g, &pi).unwrap();
        for hadf in kinds() {
            for s in 0..2 {
                let d = drift_state(&hadf, &g, &e, &pi, 0, pi.agent(0).row(s), s, &Predecessors::none(&pi)).unwrap();
                assert_eq!(d, 0.0, "{hadf:?}");
            }
        }
    }

    fn kinds() -> [HadfSpec; 5] {
        [
            HadfSpec::trivial(),
            HadfSpec::kl_penalty(1.0),
            HadfSpec::kl_penalty_with(1.0, KlDirection::OldToNew),
            HadfSpec::clip_relu(0.2),
            HadfSpec::squared_l2(1.0),
        ]
    }

    #[test]
    fn clip_relu_depends_on_predecessor_updates() {
        // Joint advantages at uniform play are r − 0.75; only a predecessor playing
        // action 1 makes the clipped terms fire: drift = 0.9·π̄(1).
        let g = build_prop2_game();
        let pi = crate::game::uniform_joint_policy(&g);
        let e = evaluate(&g, &pi).unwrap();
        let hadf = HadfSpec::clip_relu(0.2);
        let cand = [0.9, 0.1];
        let with = |p1: f64| {
            let new = JointPolicy::new(vec![
                AgentPolicy::new(vec![vec![1.0 - p1, p1]]).unwrap(),
                pi.agent(1).clone(),
            ])
            .unwrap();
            drift_state(&hadf, &g, &e, &pi, 1, &cand, 0, &Predecessors::new(&[0], &new)).unwrap()
        };
        assert_eq!(with(0.0), 0.0);
        assert!((with(1.0) - 0.9).abs() < 1e-12);
        assert!((with(0.5) - 0.45).abs() < 1e-12);
    }

    #[test]
    fn clip_relu_rejects_new_support() {
        let table = AdvantageTable::without_predecessors(vec![1.0, -1.0]);
        assert!(clip_relu_drift(&table, &[1.0, 0.0], &[0.9, 0.1], 0.2).is_err());
        assert_eq!(clip_relu_drift(&table, &[1.0, 0.0], &[1.0, 0.0], 0.2).unwrap(), 0.0);
    }

    #[test]
    fn kl_off_support_is_infinite() {
        let d = drift_row(&HadfSpec::kl_penalty(1.0), &no_table(2), &[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!(d.is_infinite());
    }

    #[test]
    fn off_simplex_candidate_is_rejected() {
        let g = build_prop2_game();
        let pi = crate::game::uniform_joint_policy(&g);
        let e = evaluate(&g, &pi).unwrap();
        let r = drift_state(&HadfSpec::trivial(), &g, &e, &pi, 0, &[0.7, 0.7], 0, &Predecessors::none(&pi));
        assert!(r.is_err());
    }

    #[test]
    fn expected_drift_on_single_state_equals_state_drift() {
        let g = build_prop2_game();
        let pi = crate::game::uniform_joint_policy(&g);
        let e = evaluate(&g, &pi).unwrap();
        let cand = AgentPolicy::new(vec![vec![0.9, 0.1]]).unwrap();
        for hadf in kinds() {
            let preds = Predecessors::none(&pi);
            let ds = drift_state(&hadf, &g, &e, &pi, 0, cand.row(0), 0, &preds).unwrap();
            let de = drift_expected(&hadf, &[1.0], &g, &e, &pi, 0, &cand, &preds).unwrap();
            assert_eq!(ds, de);
        }
        let de = drift_expected(&HadfSpec::trivial(), &[1.0], &g, &e, &pi, 0, &cand, &Predecessors::none(&pi)).unwrap();
        assert_eq!(de, 0.0);
    }

    #[test]
    fn gateaux_residuals_are_small() {
        let g = build_prop2_game();
        let pi = crate::game::first_action_policy(&g, 0.6).unwrap();
        let e = evaluate(&g, &pi).unwrap();
        let dir = [0.7, -0.7];
        for hadf in kinds() {
            let r = gateaux_residual(&hadf, &g, &e, &pi, 0, 0, &dir, 1e-5).unwrap();
            assert!(r <= 1e-4, "{hadf:?}: {r}");
        }
        let clip = gateaux_residual(&HadfSpec::clip_relu(0.2), &g, &e, &pi, 0, 0, &dir, 1e-2).unwrap();
        assert_eq!(clip, 0.0);
        assert!(gateaux_residual(&HadfSpec::trivial(), &g, &e, &pi, 0, 0, &dir, 1.0).is_err());
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let table = AdvantageTable::from_parts(
            vec![0.3, 0.7],
            vec![vec![0.2, -0.1, 0.4], vec![-0.3, 0.5, 0.1]],
            vec![vec![1.2, -0.4, 0.3], vec![-0.8, 0.6, 0.2]],
        )
        .unwrap();
        let old = [0.2, 0.5, 0.3];
        let cand = [0.35, 0.3, 0.35];
        for hadf in kinds() {
            let grad = drift_gradient(&hadf, &table, &old, &cand);
            for a in 0..3 {
                let h = 1e-7;
                let mut up = cand;
                let mut down = cand;
                up[a] += h;
                down[a] -= h;
                let fd = (drift_row(&hadf, &table, &old, &up).unwrap() - drift_row(&hadf, &table, &old, &down).unwrap())
                    / (2.0 * h);
                assert!((fd - grad[a]).abs() < 1e-5, "{hadf:?} a={a}: {fd} vs {}", grad[a]);
            }
        }
    }

    #[test]
    fn invalid_parameters() {
        assert!(HadfSpec::clip_relu(1.0).validate().is_err());
        assert!(HadfSpec::kl_penalty(-1.0).validate().is_err());
        assert!(StateWeighting::Beta.sampling(&evaluate(&build_prop2_game(), &crate::game::uniform_joint_policy(&build_prop2_game())).unwrap()).is_err());
    }
}
