//! Property sweeps that check the framework's guarantees numerically.
//!
//! Each suite returns a [`SuiteReport`] of named checks. Sweeps over random instances
//! fan out across threads; results are collected in instance order, so reports are
//! byte-for-byte reproducible.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{
    brute_force_optimum, haa2c_objective_ratio, mc_samples, naive_simultaneous_step, sample_trajectories,
    shared_policy_optimum, trajectories_to_csv, Haa2cExactObjective, Haa2cMcObjective, Step, Trajectory,
};
use crate::conditional::{AdvantageTable, Predecessors};
use crate::drift::{clip_relu_drift, drift_expected, drift_state, gateaux_residual, HadfSpec, KlDirection};
use crate::engine::{haml_step, run, EngineConfig, PermutationSampler};
use crate::error::{HamlError, Result};
use crate::eval::{check_advantage_decomposition, evaluate, nash_gap};
use crate::game::{
    build_prop1_game, build_prop2_game, first_action_policy, random_game, random_joint_policy, tv_distance,
    AgentPolicy, JointPolicy, MarkovGame, RandomGameSpec,
};
use crate::mirror::happo_identity_residual_table;
use crate::neighborhood::NeighborhoodSpec;
use crate::seeding::{derive_seed, rng_for, STREAM_GAME, STREAM_POLICY, STREAM_VERIFY};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Lemma1,
    Hadf,
    HappoIdentity,
    Prop1,
    Prop2,
    Monotone,
    Nash,
    Haa2c,
    Determinism,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 10] = [
        "lemma1",
        "hadf",
        "happo-identity",
        "prop1",
        "prop2",
        "monotone",
        "nash",
        "haa2c",
        "determinism",
        "all",
    ];

    pub fn name(&self) -> &'static str {
        Self::NAMES[*self as usize]
    }

    fn each() -> [Suite; 9] {
        use Suite::*;
        [Prop1, Prop2, Lemma1, Monotone, Nash, Hadf, HappoIdentity, Haa2c, Determinism]
    }
}

impl FromStr for Suite {
    type Err = HamlError;

    fn from_str(s: &str) -> Result<Self> {
        use Suite::*;
        let all = [Lemma1, Hadf, HappoIdentity, Prop1, Prop2, Monotone, Nash, Haa2c, Determinism, All];
        all.into_iter().find(|x| x.name() == s).ok_or_else(|| {
            HamlError::Config(format!("unknown suite '{s}'; valid suites: {}", Self::NAMES.join(", ")))
        })
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} {}/{}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                self.suite,
                c.name,
                c.detail
            )?;
        }
        Ok(())
    }
}

/// Sweep parameters. Unset fields take the per-suite defaults.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyParams {
    pub seeds: usize,
    /// Agent counts for the homogeneity trap.
    pub n: Vec<usize>,
    pub iterations: Option<usize>,
    /// Random instances for the clipped-objective identity.
    pub instances: usize,
    pub master_seed: u64,
}

impl Default for VerifyParams {
    fn default() -> Self {
        Self {
            seeds: 100,
            n: vec![2, 4, 6],
            iterations: None,
            instances: 1000,
            master_seed: 0,
        }
    }
}

pub fn run_suite(suite: Suite, params: &VerifyParams) -> Result<Vec<SuiteReport>> {
    if suite == Suite::All {
        return Suite::each()
            .iter()
            .map(|&s| run_suite(s, params).map(|mut r| r.remove(0)))
            .collect();
    }
    let checks = match suite {
        Suite::Lemma1 => lemma1(params)?,
        Suite::Hadf => hadf(params)?,
        Suite::HappoIdentity => happo_identity(params)?,
        Suite::Prop1 => prop1(params)?,
        Suite::Prop2 => prop2()?,
        Suite::Monotone => monotone(params)?,
        Suite::Nash => nash(params)?,
        Suite::Haa2c => haa2c(params)?,
        Suite::Determinism => determinism(params)?,
        Suite::All => unreachable!(),
    };
    Ok(vec![SuiteReport {
        suite: suite.name().to_string(),
        checks,
    }])
}

/// Shape limits of a sweep instance.
#[derive(Clone, Copy, Debug)]
pub struct SweepShape {
    pub agents: (usize, usize),
    pub states: (usize, usize),
    pub actions: (usize, usize),
    pub gamma_max: f64,
}

impl SweepShape {
    pub const SMALL: SweepShape = SweepShape {
        agents: (1, 3),
        states: (1, 3),
        actions: (1, 3),
        gamma_max: 0.95,
    };
}

/// Game `index` of a sweep: size, discount and contents are all derived from
/// `(master, index)`. At least one agent gets two or more actions whenever the shape
/// allows it, so the instance is never trivial.
pub fn sweep_game(master: u64, index: u64, shape: SweepShape) -> Result<MarkovGame> {
    let mut rng = rng_for(master, STREAM_VERIFY, index);
    let n_agents = rng.random_range(shape.agents.0..=shape.agents.1);
    let n_states = rng.random_range(shape.states.0..=shape.states.1);
    let mut counts: Vec<usize> = (0..n_agents)
        .map(|_| rng.random_range(shape.actions.0..=shape.actions.1))
        .collect();
    if counts.iter().all(|&c| c == 1) && shape.actions.1 >= 2 {
        counts[0] = 2;
    }
    let gamma = rng.random_range(0.0..shape.gamma_max);
    random_game(&RandomGameSpec::new(
        derive_seed(master, STREAM_GAME, index),
        n_states,
        &counts,
        gamma,
        (-1.0, 1.0),
    ))
}

pub fn sweep_policy(game: &MarkovGame, master: u64, index: u64) -> JointPolicy {
    random_joint_policy(game, derive_seed(master, STREAM_POLICY, index))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out.sort();
    out
}

/// Maximum with a floor of 0; any NaN makes the result NaN so it fails every check.
fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values
        .into_iter()
        .fold(0.0, |m: f64, x| if m.is_nan() || x.is_nan() { f64::NAN } else { m.max(x) })
}

fn lemma1(params: &VerifyParams) -> Result<Vec<Check>> {
    let residuals = (0..params.seeds as u64)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let g = sweep_game(params.master_seed, i, SweepShape::SMALL)?;
            let pi = sweep_policy(&g, params.master_seed, i);
            let e = evaluate(&g, &pi)?;
            let mut worst: f64 = 0.0;
            for order in permutations(g.n_agents()) {
                for s in 0..g.n_states() {
                    for (_, actions) in g.space().iter() {
                        let ordered: Vec<usize> = order.iter().map(|&i| actions[i]).collect();
                        worst = worst.max(check_advantage_decomposition(&g, &e, &pi, s, &order, &ordered)?);
                    }
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = max_of(residuals);
    Ok(vec![Check::new(
        "decomposition",
        worst <= 1e-10,
        format!(
            "max residual {worst:.3e} over {} games, all states, joint actions and orderings (tolerance 1e-10)",
            params.seeds
        ),
    )])
}

fn hadf_kinds() -> Vec<HadfSpec> {
    vec![
        HadfSpec::trivial(),
        HadfSpec::kl_penalty(1.0),
        HadfSpec::kl_penalty_with(1.0, KlDirection::OldToNew),
        HadfSpec::clip_relu(0.2),
        HadfSpec::squared_l2(1.0),
    ]
}

fn snake<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_value(value)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn kind_label(h: &HadfSpec) -> String {
    match h.kind {
        crate::drift::HadfKind::KlPenalty => format!("kl_penalty({})", snake(&h.kl_direction)),
        other => snake(&other),
    }
}

fn random_tangent<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mean = raw.iter().sum::<f64>() / k as f64;
    let centred: Vec<f64> = raw.iter().map(|x| x - mean).collect();
    let norm = centred.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-12 {
        // Degenerate draw; any unit tangent will do.
        let mut u = vec![0.0; k];
        u[0] = std::f64::consts::FRAC_1_SQRT_2;
        u[1] = -std::f64::consts::FRAC_1_SQRT_2;
        return u;
    }
    centred.iter().map(|x| x / norm).collect()
}

#[derive(Default, Clone, Copy)]
struct HadfStats {
    min_drift: f64,
    identity_max: f64,
    gateaux_max: f64,
    gateaux_ratio_max: f64,
    clip_inside_max: f64,
    positivity_min: f64,
    instances: usize,
    directions: usize,
}

fn hadf(params: &VerifyParams) -> Result<Vec<Check>> {
    let kinds = hadf_kinds();
    let per_game = (0..params.seeds as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<HadfStats>> {
            let shape = SweepShape {
                actions: (2, 3),
                ..SweepShape::SMALL
            };
            let g = sweep_game(params.master_seed, i, shape)?;
            let old = sweep_policy(&g, params.master_seed, i);
            let new = sweep_policy(&g, params.master_seed ^ 0x5EED, i);
            let e = evaluate(&g, &old)?;
            let mut rng = rng_for(params.master_seed, STREAM_VERIFY, 1_000_000 + i);
            let agent = rng.random_range(0..g.n_agents());
            let preds: Vec<usize> = (0..g.n_agents()).filter(|&j| j != agent && rng.random_bool(0.5)).collect();
            let p = Predecessors::new(&preds, &new);
            let k = g.action_counts()[agent];
            let mut out = Vec::new();
            for hadf in &kinds {
                let mut st = HadfStats {
                    min_drift: f64::INFINITY,
                    positivity_min: f64::INFINITY,
                    ..Default::default()
                };
                for s in 0..g.n_states() {
                    let row = old.agent(agent).row(s);
                    st.identity_max = st.identity_max.max(drift_state(hadf, &g, &e, &old, agent, row, s, &p)?.abs());
                    for _ in 0..10 {
                        let cand = new_row(&mut rng, k);
                        st.min_drift = st.min_drift.min(drift_state(hadf, &g, &e, &old, agent, &cand, s, &p)?);
                        st.instances += 1;
                    }
                    for _ in 0..100 {
                        let u = random_tangent(&mut rng, k);
                        let r = gateaux_residual(hadf, &g, &e, &old, agent, s, &u, 1e-5)?;
                        st.gateaux_max = st.gateaux_max.max(r);
                        if r > 1e-9 {
                            let fine = gateaux_residual(hadf, &g, &e, &old, agent, s, &u, 1e-6)?;
                            st.gateaux_ratio_max = st.gateaux_ratio_max.max(fine / r);
                        }
                        st.directions += 1;
                    }
                    if hadf.kind == crate::drift::HadfKind::ClipRelu {
                        let table = AdvantageTable::build(&g, &e, &old, agent, &p, s)?;
                        for _ in 0..20 {
                            let u = random_tangent(&mut rng, k);
                            let umax = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                            let pmin = row.iter().copied().fold(1.0, f64::min);
                            let scale = 0.9 * hadf.epsilon * pmin / umax.max(1e-300);
                            let cand: Vec<f64> = row.iter().zip(&u).map(|(o, x)| o + scale * x).collect();
                            st.clip_inside_max = st.clip_inside_max.max(clip_relu_drift(&table, row, &cand, hadf.epsilon)?);
                        }
                    }
                }
                if hadf.tau > 0.0 && matches!(hadf.kind, crate::drift::HadfKind::KlPenalty | crate::drift::HadfKind::SquaredL2) {
                    let nu = vec![1.0 / g.n_states() as f64; g.n_states()];
                    for _ in 0..10 {
                        let cand = AgentPolicy::new((0..g.n_states()).map(|_| new_row(&mut rng, k)).collect())?;
                        let far = (0..g.n_states()).any(|s| tv_distance(cand.row(s), old.agent(agent).row(s)) >= 1e-3);
                        if far {
                            st.positivity_min = st.positivity_min.min(drift_expected(hadf, &nu, &g, &e, &old, agent, &cand, &p)?);
                        }
                    }
                }
                out.push(st);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut checks = Vec::new();
    for (idx, hadf) in kinds.iter().enumerate() {
        let label = kind_label(hadf);
        let stats: Vec<HadfStats> = per_game.iter().map(|v| v[idx]).collect();
        let min_drift = stats.iter().map(|s| s.min_drift).fold(f64::INFINITY, f64::min);
        let identity = max_of(stats.iter().map(|s| s.identity_max));
        let gateaux = max_of(stats.iter().map(|s| s.gateaux_max));
        let n_inst: usize = stats.iter().map(|s| s.instances).sum();
        let n_dir: usize = stats.iter().map(|s| s.directions).sum();
        checks.push(Check::new(
            format!("{label}/non-negative"),
            min_drift >= 0.0,
            format!("min drift {min_drift:.3e} over {n_inst} random candidates"),
        ));
        checks.push(Check::new(
            format!("{label}/zero-at-identity"),
            identity == 0.0,
            format!("max |drift(old)| = {identity:e}"),
        ));
        checks.push(Check::new(
            format!("{label}/gateaux"),
            gateaux <= 1e-4,
            format!("max residual {gateaux:.3e} at step 1e-5 over {n_dir} unit directions (tolerance 1e-4)"),
        ));
        let ratio = max_of(stats.iter().map(|s| s.gateaux_ratio_max));
        checks.push(Check::new(
            format!("{label}/gateaux-vanishes"),
            ratio <= 0.2,
            format!("max residual(1e-6)/residual(1e-5) = {ratio:.3} (first order in the step, tolerance 0.2)"),
        ));
        if hadf.kind == crate::drift::HadfKind::ClipRelu {
            let inside = max_of(stats.iter().map(|s| s.clip_inside_max));
            checks.push(Check::new(
                format!("{label}/inactive-inside-band"),
                inside == 0.0,
                format!("max drift with all ratios in (1-eps, 1+eps): {inside:e}"),
            ));
        }
        if hadf.tau > 0.0 && matches!(hadf.kind, crate::drift::HadfKind::KlPenalty | crate::drift::HadfKind::SquaredL2) {
            let pos = stats.iter().map(|s| s.positivity_min).fold(f64::INFINITY, f64::min);
            checks.push(Check::new(
                format!("{label}/positive-away-from-old"),
                pos > 0.0,
                format!("min expected drift {pos:.3e} for candidates at TV >= 1e-3"),
            ));
        }
    }

    // Predecessor dependence on a crafted instance.
    let g = build_prop2_game();
    let u = crate::game::uniform_joint_policy(&g);
    let e = evaluate(&g, &u)?;
    let clip = HadfSpec::clip_relu(0.2);
    let with = |p1: f64| -> Result<f64> {
        let new = JointPolicy::new(vec![AgentPolicy::new(vec![vec![1.0 - p1, p1]])?, u.agent(1).clone()])?;
        drift_state(&clip, &g, &e, &u, 1, &[0.9, 0.1], 0, &Predecessors::new(&[0], &new))
    };
    let (a, b) = (with(0.0)?, with(1.0)?);
    checks.push(Check::new(
        "clip_relu/depends-on-predecessors",
        a != b,
        format!("same candidate, predecessor at action 0: {a}, at action 1: {b}"),
    ));
    Ok(checks)
}

fn new_row<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
    crate::game::normalise(raw)
}

fn happo_identity(params: &VerifyParams) -> Result<Vec<Check>> {
    let worked = AdvantageTable::without_predecessors(vec![1.0, -1.0]);
    let objective = crate::mirror::happo_objective_table(&worked, &[0.5, 0.5], &[0.8, 0.2], 0.2)?;
    let rhs = 0.6 - clip_relu_drift(&worked, &[0.5, 0.5], &[0.8, 0.2], 0.2)?;
    let worked_ok = (objective - 0.2).abs() <= 1e-12 && (rhs - 0.2).abs() <= 1e-12;

    let residuals = (0..params.instances as u64)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut rng = rng_for(params.master_seed, STREAM_VERIFY, 2_000_000 + i);
            let k = rng.random_range(2..=4);
            let combos = rng.random_range(1..=6);
            let w = new_row(&mut rng, combos);
            let adv: Vec<Vec<f64>> = (0..combos)
                .map(|_| (0..k).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let table = AdvantageTable::from_parts(w, adv.clone(), adv)?;
            let old = new_row(&mut rng, k);
            let cand = new_row(&mut rng, k);
            let eps = rng.random_range(0.01..0.99);
            happo_identity_residual_table(&table, &old, &cand, eps)
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = max_of(residuals);
    Ok(vec![
        Check::new(
            "worked-instance",
            worked_ok,
            format!("objective {objective} and advantage minus drift {rhs} (expected 0.2)"),
        ),
        Check::new(
            "random-instances",
            worst <= 1e-10,
            format!("max residual {worst:.3e} over {} instances (tolerance 1e-10)", params.instances),
        ),
    ])
}

fn prop1(params: &VerifyParams) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for &n in &params.n {
        let g = build_prop1_game(n)?;
        let (p, shared) = shared_policy_optimum(&g, 1000)?;
        let (_, best) = brute_force_optimum(&g)?;
        let ratio = shared / best;
        let expected = 2.0 / 2f64.powi(n as i32);
        checks.push(Check::new(
            format!("ratio/n={n}"),
            (ratio - expected).abs() <= 1e-9 && best == 1.0,
            format!("shared optimum {shared:.12} at p={p:.9}, J* = {best}, ratio {ratio:.9} vs 2/2^{n} = {expected:.9}"),
        ));
        let pi0 = random_joint_policy(&g, derive_seed(params.master_seed, STREAM_POLICY, n as u64));
        let out = run(&g, &pi0, &EngineConfig::greedy(10), params.master_seed)?;
        let j = out.records.last().map_or(f64::NAN, |r| r.j_after);
        checks.push(Check::new(
            format!("heterogeneous/n={n}"),
            j >= 1.0 - 1e-9,
            format!("sequential greedy updates from a random positive policy reach J = {j}"),
        ));
    }
    Ok(checks)
}

fn prop2() -> Result<Vec<Check>> {
    let g = build_prop2_game();
    let start = first_action_policy(&g, 0.7)?;
    let naive = evaluate(&g, &naive_simultaneous_step(&g, &start)?)?.j;
    let worst = {
        let neg = MarkovGame::matrix_game(&[2, 2], g.rewards()[0].iter().map(|r| -r).collect())?;
        -brute_force_optimum(&neg)?.1
    };
    let mut checks = vec![Check::new(
        "naive-simultaneous",
        naive == -1.0 && naive == worst,
        format!("naive J = {naive:?} (minimum over joint policies {worst:?})"),
    )];
    for order in [vec![0, 1], vec![1, 0]] {
        let cfg = EngineConfig {
            permutations: PermutationSampler::fixed(order.clone()),
            ..EngineConfig::greedy(1)
        };
        let (_, rec) = haml_step(&g, &start, &cfg, 0)?;
        checks.push(Check::new(
            format!("sequential/order={}", order.iter().map(usize::to_string).collect::<Vec<_>>().join("-")),
            rec.j_after == 2.0 && rec.j_before < 2.0,
            format!("HAML J = {:?} from J = {:.2}", rec.j_after, rec.j_before),
        ));
    }
    Ok(checks)
}

/// The six drift/neighborhood pairs of the monotonicity sweep.
pub fn monotone_configs(iterations: usize) -> Vec<(String, EngineConfig)> {
    let mut out = Vec::new();
    for hadf in [HadfSpec::trivial(), HadfSpec::kl_penalty(0.5), HadfSpec::clip_relu(0.2)] {
        for nb in [NeighborhoodSpec::unconstrained(), NeighborhoodSpec::per_state_kl(0.05)] {
            let label = format!("{}+{}", kind_label(&hadf), snake(&nb.kind));
            out.push((label, EngineConfig::with(hadf, nb, iterations)));
        }
    }
    out
}

fn monotone(params: &VerifyParams) -> Result<Vec<Check>> {
    let iterations = params.iterations.unwrap_or(100);
    let mut checks = Vec::new();
    for (label, cfg) in monotone_configs(iterations) {
        let results = (0..params.seeds as u64)
            .into_par_iter()
            .map(|i| -> Result<(f64, f64, usize)> {
                let g = sweep_game(params.master_seed, i, SweepShape::SMALL)?;
                let pi0 = sweep_policy(&g, params.master_seed, i);
                let out = run(&g, &pi0, &cfg, derive_seed(params.master_seed, STREAM_VERIFY, i))?;
                let j_drop = max_of(out.records.iter().map(|r| r.j_before - r.j_after));
                let v_drop = max_of(
                    out.records
                        .iter()
                        .flat_map(|r| r.v_before.iter().zip(&r.v_after).map(|(b, a)| b - a)),
                );
                let fallbacks = out.records.iter().map(|r| r.fallbacks).sum();
                Ok((j_drop, v_drop, fallbacks))
            })
            .collect::<Result<Vec<_>>>()?;
        let j_drop = max_of(results.iter().map(|r| r.0));
        let v_drop = max_of(results.iter().map(|r| r.1));
        let fallbacks: usize = results.iter().map(|r| r.2).sum();
        checks.push(Check::new(
            label,
            j_drop <= 1e-9 && v_drop <= 1e-9,
            format!(
                "{} games x {iterations} iterations: max J decrease {j_drop:.3e}, max per-state V decrease {v_drop:.3e}, {fallbacks} state reverts",
                params.seeds
            ),
        ));
    }
    Ok(checks)
}

fn nash(params: &VerifyParams) -> Result<Vec<Check>> {
    let iterations = params.iterations.unwrap_or(500);
    let shape = SweepShape {
        agents: (2, 2),
        ..SweepShape::SMALL
    };
    let results = (0..params.seeds as u64)
        .into_par_iter()
        .map(|i| -> Result<(u64, f64, usize, bool)> {
            let g = sweep_game(params.master_seed, i, shape)?;
            let pi0 = sweep_policy(&g, params.master_seed, i);
            let mut cfg = EngineConfig::greedy(iterations);
            cfg.stop_gap = 1e-6;
            let out = run(&g, &pi0, &cfg, derive_seed(params.master_seed, STREAM_VERIFY, i))?;
            let best = out.records.iter().map(|r| r.nash_gap).fold(f64::INFINITY, f64::min);
            let used = out.records.len();
            let fixed = if nash_gap(&g, &out.policy)? <= 1e-12 {
                (0..3).all(|k| haml_step(&g, &out.policy, &cfg, k).map(|(p, _)| p == out.policy).unwrap_or(false))
            } else {
                true
            };
            Ok((i, best, used, fixed))
        })
        .collect::<Result<Vec<_>>>()?;
    let converged = results.iter().filter(|r| r.1 <= 1e-6).count();
    let failures: Vec<String> = results
        .iter()
        .filter(|r| r.1 > 1e-6)
        .map(|r| format!("game {} (gap {:.3e})", r.0, r.1))
        .collect();
    let slowest = results.iter().map(|r| r.2).max().unwrap_or(0);
    let needed = (0.95 * params.seeds as f64).ceil() as usize;
    let fixed_ok = results.iter().all(|r| r.3);
    Ok(vec![
        Check::new(
            "gap-below-1e-6",
            converged >= needed,
            format!(
                "{converged}/{} two-agent games reached nash_gap <= 1e-6 within {iterations} iterations (slowest used {slowest}); failures: {}",
                params.seeds,
                if failures.is_empty() { "none".to_string() } else { failures.join(", ") }
            ),
        ),
        Check::new(
            "equilibria-are-fixed-points",
            fixed_ok,
            "greedy step leaves every reached policy with nash_gap <= 1e-12 unchanged".to_string(),
        ),
    ])
}

fn haa2c(params: &VerifyParams) -> Result<Vec<Check>> {
    let results = (0..params.seeds as u64)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64, f64)> {
            let shape = SweepShape {
                states: (2, 2),
                actions: (2, 3),
                ..SweepShape::SMALL
            };
            let g = sweep_game(params.master_seed, i, shape)?;
            let old = sweep_policy(&g, params.master_seed, i);
            let new = sweep_policy(&g, params.master_seed ^ 0xA2C, i);
            let cand_pi = sweep_policy(&g, params.master_seed ^ 0xCA4D, i);
            let e = evaluate(&g, &old)?;
            let agent = g.n_agents() - 1;
            let preds: Vec<usize> = (0..agent).collect();
            let cand = cand_pi.agent(agent);
            let logits: Vec<Vec<f64>> = cand.rows().iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect();

            // Gradient against central differences.
            let obj = Haa2cExactObjective::new(&g, &e, &old, &new, agent, &preds);
            let grad = obj.gradient(&logits);
            let h = 1e-5;
            let (mut diff, mut norm) = (0.0, 0.0);
            for s in 0..logits.len() {
                for b in 0..logits[s].len() {
                    let mut up = logits.clone();
                    let mut down = logits.clone();
                    up[s][b] += h;
                    down[s][b] -= h;
                    let fd = (obj.value(&up) - obj.value(&down)) / (2.0 * h);
                    diff += (fd - grad[s][b]).powi(2);
                    norm += fd * fd;
                }
            }
            let rel = if norm > 0.0 { (diff / norm).sqrt() } else { diff.sqrt() };

            let ratio_gap = (obj.value(&logits) - haa2c_objective_ratio(&g, &e, &old, &new, agent, &preds, cand)).abs();

            // Unbiasedness on the γ = 0 version of the same game.
            let g0 = MarkovGame::new(
                g.action_counts(),
                g.transitions().to_vec(),
                g.rewards().to_vec(),
                0.0,
                g.initial().to_vec(),
            )?;
            let e0 = evaluate(&g0, &old)?;
            let mut expectation = 0.0;
            for s in 0..g0.n_states() {
                for (j, actions) in g0.space().iter() {
                    for next in 0..g0.n_states() {
                        let prob = g0.initial()[s] * old.prob(s, &actions) * g0.transition(s, j)[next];
                        if prob == 0.0 {
                            continue;
                        }
                        let traj = Trajectory {
                            seed: 0,
                            steps: vec![Step {
                                state: s,
                                actions: actions.clone(),
                                reward: g0.reward(s, j),
                            }],
                            final_state: next,
                        };
                        let samples = mc_samples(&[traj], &e0.v, 0.0, 0.95);
                        expectation += prob * Haa2cMcObjective::new(&samples, &old, &new, agent, &preds).value(&logits);
                    }
                }
            }
            let exact0 = Haa2cExactObjective::new(&g0, &e0, &old, &new, agent, &preds).value(&logits);
            Ok((rel, ratio_gap, (expectation - exact0).abs()))
        })
        .collect::<Result<Vec<_>>>()?;
    let rel = max_of(results.iter().map(|r| r.0));
    let ratio = max_of(results.iter().map(|r| r.1));
    let bias = max_of(results.iter().map(|r| r.2));
    Ok(vec![
        Check::new(
            "gradient-vs-finite-differences",
            rel <= 1e-6,
            format!("max relative error {rel:.3e} over {} two-state games (tolerance 1e-6)", params.seeds),
        ),
        Check::new(
            "ratio-form-identity",
            ratio <= 1e-12,
            format!("max |direct - importance-weighted| {ratio:.3e} (tolerance 1e-12)"),
        ),
        Check::new(
            "monte-carlo-unbiased",
            bias <= 1e-12,
            format!("max |E[estimate] - exact| {bias:.3e} over all length-1 trajectories at gamma = 0 (tolerance 1e-12)"),
        ),
    ])
}

fn determinism(params: &VerifyParams) -> Result<Vec<Check>> {
    let g = sweep_game(params.master_seed, 0, SweepShape::SMALL)?;
    let pi0 = sweep_policy(&g, params.master_seed, 0);
    let cfg = EngineConfig::with(HadfSpec::kl_penalty(0.5), NeighborhoodSpec::per_state_kl(0.05), 20);
    let csv = |seed: u64| -> Result<String> {
        let out = run(&g, &pi0, &cfg, seed)?;
        crate::cli::haml_rows(&out.records, None).to_csv()
    };
    let (a, b) = (csv(params.master_seed)?, csv(params.master_seed)?);
    let trajs = |seed| -> Result<String> { trajectories_to_csv(&sample_trajectories(&g, &pi0, 50, 64, seed)?, g.n_agents()) };
    let (ta, tb) = (trajs(params.master_seed)?, trajs(params.master_seed)?);
    let small = VerifyParams {
        seeds: 5,
        instances: 50,
        iterations: Some(5),
        ..params.clone()
    };
    let report = |s| -> Result<String> {
        Ok(run_suite(s, &small)?.iter().map(ToString::to_string).collect())
    };
    let (ra, rb) = (report(Suite::Monotone)?, report(Suite::Monotone)?);
    Ok(vec![
        Check::new("run-csv", a == b, format!("two runs with seed {} give identical CSV ({} bytes)", params.master_seed, a.len())),
        Check::new("trajectories", ta == tb, format!("identical trajectory batches ({} bytes)", ta.len())),
        Check::new("suite-report", ra == rb, format!("identical monotone sweep reports ({} bytes)", ra.len())),
    ])
}
