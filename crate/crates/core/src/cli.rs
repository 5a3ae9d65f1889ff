//! Command-line harness: experiment configs, result tables and the `haml` subcommands.
//!
//! Exit codes: 0 success, 1 invalid configuration or input, 2 failure while running.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::baselines::{
    brute_force_optimum, haa2c_step, naive_simultaneous_step, shared_policy_optimum, Haa2cConfig,
    SoftmaxPolicyParams,
};
use crate::engine::{haml_step, EngineConfig, IterationRecord};
use crate::error::{HamlError, Result};
use crate::eval::{evaluate, nash_gap, nash_gap_given};
use crate::game::{
    build_prop1_game, build_prop2_game, first_action_policy, random_game, random_joint_policy,
    uniform_joint_policy, JointPolicy, MarkovGame, RandomGameSpec,
};
use crate::verify::{run_suite, Suite, VerifyParams};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
/// Version of the results CSV column layout.
pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuilderName {
    Prop1,
    Prop2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuilderSpec {
    pub name: BuilderName,
    /// Number of agents (homogeneity trap only).
    #[serde(default)]
    pub n: Option<usize>,
}

/// Exactly one way of obtaining the game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GameSource {
    Path(PathBuf),
    Builder(BuilderSpec),
    Random(RandomGameSpec),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialPolicy {
    #[default]
    Uniform,
    /// Probability of action 0 for every agent, the rest spread evenly.
    FirstAction(f64),
    /// Seeded strictly positive random policy.
    Random(u64),
    Path(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Algorithm {
    Haml {
        engine: EngineConfig,
    },
    NaiveA2c {
        iterations: usize,
    },
    Haa2c {
        iterations: usize,
        #[serde(default)]
        haa2c: Haa2cConfig,
    },
    SharedOptimum {
        #[serde(default = "default_grid")]
        grid_resolution: usize,
    },
}

fn default_grid() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub game: GameSource,
    #[serde(default)]
    pub initial_policy: InitialPolicy,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub seed: u64,
    /// Output directory, relative to the working directory.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses a config and resolves its file references against `base` (normally the
    /// config's own directory). Missing referenced files are reported here.
    pub fn from_json(text: &str, base: &Path) -> Result<Self> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| HamlError::Config(format!("config is not valid JSON: {e}")))?;
        match raw.get("schema_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(CONFIG_SCHEMA_VERSION) => {}
            Some(v) => {
                return Err(HamlError::Config(format!(
                    "schema_version {v} is not supported (expected {CONFIG_SCHEMA_VERSION})"
                )))
            }
            None => return Err(HamlError::Config("missing field `schema_version`".into())),
        }
        let mut cfg: Self = serde_json::from_value(raw).map_err(|e| HamlError::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf, field: &str| -> Result<()> {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if !p.is_file() {
                return Err(HamlError::Config(format!("{field}: file {} does not exist", p.display())));
            }
            Ok(())
        };
        if let GameSource::Path(p) = &mut cfg.game {
            resolve(p, "game.path")?;
        }
        if let InitialPolicy::Path(p) = &mut cfg.initial_policy {
            resolve(p, "initial_policy.path")?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            HamlError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn validate(&self) -> Result<()> {
        match &self.algorithm {
            Algorithm::Haml { engine } if engine.iterations == 0 => {
                Err(HamlError::Config("algorithm.engine.iterations must be at least 1".into()))
            }
            Algorithm::NaiveA2c { iterations: 0 } | Algorithm::Haa2c { iterations: 0, .. } => {
                Err(HamlError::Config("algorithm.iterations must be at least 1".into()))
            }
            Algorithm::Haa2c { haa2c, .. } => haa2c.validate(),
            Algorithm::SharedOptimum { grid_resolution: 0 } => {
                Err(HamlError::Config("algorithm.grid_resolution must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn build_game(&self) -> Result<MarkovGame> {
        match &self.game {
            GameSource::Path(p) => MarkovGame::load(p),
            GameSource::Builder(b) => match b.name {
                BuilderName::Prop1 => build_prop1_game(b.n.ok_or_else(|| {
                    HamlError::Config("game.builder.n is required for prop1".into())
                })?),
                BuilderName::Prop2 => Ok(build_prop2_game()),
            },
            GameSource::Random(spec) => random_game(spec),
        }
    }

    pub fn build_policy(&self, game: &MarkovGame) -> Result<JointPolicy> {
        let pi = match &self.initial_policy {
            InitialPolicy::Uniform => uniform_joint_policy(game),
            InitialPolicy::FirstAction(p) => first_action_policy(game, *p)?,
            InitialPolicy::Random(seed) => random_joint_policy(game, *seed),
            InitialPolicy::Path(p) => JointPolicy::load(p)?,
        };
        pi.check_against(game)?;
        Ok(pi)
    }
}

/// One line of the results CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub k: usize,
    pub j: f64,
    pub nash_gap: f64,
    pub v: Vec<f64>,
    pub permutation: Option<Vec<usize>>,
    /// Empty when the algorithm has no per-agent objective.
    pub hamo: Vec<f64>,
    pub drift: Vec<f64>,
    pub fallbacks: Option<usize>,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    pub n_states: usize,
    pub n_agents: usize,
    pub rows: Vec<ResultRow>,
}

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

impl ResultTable {
    pub fn header(n_states: usize, n_agents: usize) -> Vec<String> {
        let mut h = vec!["k".to_string(), "j".into(), "nash_gap".into()];
        h.extend((0..n_states).map(|s| format!("v_{s}")));
        h.push("permutation".into());
        h.extend((0..n_agents).map(|i| format!("hamo_{i}")));
        h.extend((0..n_agents).map(|i| format!("drift_{i}")));
        h.push("fallbacks".into());
        h.push("wall_ms".into());
        h
    }

    /// Floats are written with 17 significant digits, enough to round-trip exactly.
    pub fn to_csv(&self) -> Result<String> {
        let csv_err = |e: csv::Error| HamlError::Numerical(format!("csv: {e}"));
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::header(self.n_states, self.n_agents)).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![r.k.to_string(), float(r.j), float(r.nash_gap)];
            rec.extend(r.v.iter().map(|&x| float(x)));
            rec.push(r.permutation.as_ref().map_or(String::new(), |p| {
                p.iter().map(usize::to_string).collect::<Vec<_>>().join("-")
            }));
            for values in [&r.hamo, &r.drift] {
                if values.is_empty() {
                    rec.extend(std::iter::repeat_n(String::new(), self.n_agents));
                } else {
                    rec.extend(values.iter().map(|&x| float(x)));
                }
            }
            rec.push(r.fallbacks.map_or(String::new(), |f| f.to_string()));
            rec.push(r.wall_ms.to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| HamlError::Numerical(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Result table of an engine run; `wall_ms` defaults to zeros.
pub fn haml_rows(records: &[IterationRecord], wall_ms: Option<&[u64]>) -> ResultTable {
    let n_states = records.first().map_or(0, |r| r.v_after.len());
    let n_agents = records.first().map_or(0, |r| r.expected_hamo.len());
    ResultTable {
        n_states,
        n_agents,
        rows: records
            .iter()
            .enumerate()
            .map(|(idx, r)| ResultRow {
                k: r.k,
                j: r.j_after,
                nash_gap: r.nash_gap,
                v: r.v_after.clone(),
                permutation: Some(r.permutation.clone()),
                hamo: r.expected_hamo.clone(),
                drift: r.drift.clone(),
                fallbacks: Some(r.fallbacks),
                wall_ms: wall_ms.map_or(0, |w| w[idx]),
            })
            .collect(),
    }
}

/// Final summary document written next to the CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub csv_schema_version: u32,
    pub algorithm: String,
    pub seed: u64,
    pub iterations: usize,
    pub final_j: f64,
    pub final_nash_gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extra: Option<serde_json::Value>,
    pub config: ExperimentConfig,
}

pub struct RunOutcome {
    pub table: ResultTable,
    pub summary: RunSummary,
    pub policy: Option<JointPolicy>,
}

struct Clock {
    start: Option<Instant>,
}

impl Clock {
    fn new(enabled: bool) -> Self {
        Self {
            start: enabled.then(Instant::now),
        }
    }

    fn lap(&mut self) -> u64 {
        match &mut self.start {
            Some(s) => {
                let ms = s.elapsed().as_millis() as u64;
                *s = Instant::now();
                ms
            }
            None => 0,
        }
    }
}

/// Executes a parsed experiment. Errors here are runtime errors (exit code 2), except
/// configuration problems only detectable once the game is built.
pub fn execute(cfg: &ExperimentConfig, record_wall_time: bool) -> Result<RunOutcome> {
    let game = cfg.build_game()?;
    let pi0 = cfg.build_policy(&game)?;
    let mut clock = Clock::new(record_wall_time);
    let n_states = game.n_states();
    let n_agents = game.n_agents();
    let mut rows = Vec::new();
    let mut extra = None;
    let (name, policy) = match &cfg.algorithm {
        Algorithm::Haml { engine } => {
            let mut engine = engine.clone();
            engine.permutations.seed = cfg.seed;
            engine.validate(n_agents)?;
            let mut pi = pi0;
            let mut records = Vec::new();
            let mut walls = Vec::new();
            for k in 0..engine.iterations {
                let (next, rec) = haml_step(&game, &pi, &engine, k)?;
                pi = next;
                walls.push(clock.lap());
                let stop = engine.stop_gap > 0.0 && rec.nash_gap <= engine.stop_gap;
                records.push(rec);
                if stop {
                    break;
                }
            }
            rows = haml_rows(&records, Some(&walls)).rows;
            ("haml", Some(pi))
        }
        Algorithm::NaiveA2c { iterations } => {
            let mut pi = pi0;
            for k in 0..*iterations {
                pi = naive_simultaneous_step(&game, &pi)?;
                let e = evaluate(&game, &pi)?;
                rows.push(ResultRow {
                    k,
                    j: e.j,
                    nash_gap: nash_gap_given(&game, &pi, e.j)?,
                    v: e.v,
                    permutation: None,
                    hamo: Vec::new(),
                    drift: Vec::new(),
                    fallbacks: None,
                    wall_ms: clock.lap(),
                });
            }
            ("naive_a2c", Some(pi))
        }
        Algorithm::Haa2c { iterations, haa2c } => {
            let mut params = SoftmaxPolicyParams::from_policy(&pi0)?;
            for k in 0..*iterations {
                let (next, rec) = haa2c_step(&game, &params, haa2c, cfg.seed, k)?;
                params = next;
                let pi = params.joint_policy()?;
                let e = evaluate(&game, &pi)?;
                rows.push(ResultRow {
                    k,
                    j: e.j,
                    nash_gap: nash_gap_given(&game, &pi, e.j)?,
                    v: e.v,
                    permutation: Some(rec.permutation),
                    hamo: rec.objective_gain,
                    drift: vec![0.0; n_agents],
                    fallbacks: None,
                    wall_ms: clock.lap(),
                });
            }
            ("haa2c", Some(params.joint_policy()?))
        }
        Algorithm::SharedOptimum { grid_resolution } => {
            let (p, j_shared) = shared_policy_optimum(&game, *grid_resolution)
                .map_err(|e| HamlError::Config(format!("algorithm shared_optimum: {e}")))?;
            let (_, j_star) = brute_force_optimum(&game)?;
            let pi = first_action_policy(&game, p)?;
            let e = evaluate(&game, &pi)?;
            rows.push(ResultRow {
                k: 0,
                j: j_shared,
                nash_gap: nash_gap(&game, &pi)?,
                v: e.v,
                permutation: None,
                hamo: Vec::new(),
                drift: Vec::new(),
                fallbacks: None,
                wall_ms: clock.lap(),
            });
            extra = Some(serde_json::json!({
                "p_star": p,
                "j_shared": j_shared,
                "j_star": j_star,
                "ratio": j_shared / j_star,
            }));
            ("shared_optimum", Some(pi))
        }
    };
    let last = rows.last().expect("at least one iteration");
    let summary = RunSummary {
        schema_version: CONFIG_SCHEMA_VERSION,
        csv_schema_version: CSV_SCHEMA_VERSION,
        algorithm: name.to_string(),
        seed: cfg.seed,
        iterations: rows.len(),
        final_j: last.j,
        final_nash_gap: last.nash_gap,
        extra,
        config: cfg.clone(),
    };
    Ok(RunOutcome {
        table: ResultTable { n_states, n_agents, rows },
        summary,
        policy,
    })
}

/// Writes `results.csv`, `summary.json` and `final_policy.json` into `dir`.
pub fn write_outcome(outcome: &RunOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HamlError::io(dir, e))?;
    let write = |name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| HamlError::io(&path, e))
    };
    write("results.csv", outcome.table.to_csv()?)?;
    let summary = serde_json::to_string_pretty(&outcome.summary).expect("summary serialises") + "\n";
    write("summary.json", summary)?;
    if let Some(pi) = &outcome.policy {
        write("final_policy.json", pi.to_json())?;
    }
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "haml", version, about = "Exact tabular heterogeneous-agent mirror learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment config and write results.csv, summary.json and final_policy.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides the config's `output`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fill the wall_ms column with measured times (breaks byte-identical reruns).
        #[arg(long)]
        record_wall_time: bool,
    },
    /// Run a verification suite and print one PASS/FAIL line per check.
    Verify(VerifyArgs),
    /// Write a game file (and optionally a policy file for it).
    GenGame(GenGameArgs),
    /// Print J, per-state V and the Nash gap of a policy on a game.
    Eval {
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        policy: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// One of: lemma1, hadf, happo-identity, prop1, prop2, monotone, nash, haa2c, determinism, all.
    pub suite: String,
    /// Number of random instances (games) per sweep.
    #[arg(long, default_value_t = 100)]
    pub seeds: usize,
    /// Agent counts for prop1 (repeatable).
    #[arg(long)]
    pub n: Vec<usize>,
    /// Iterations per run (monotone: 100, nash: 500 by default).
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Random instances for happo-identity.
    #[arg(long, default_value_t = 1000)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub master_seed: u64,
    /// Write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Builder {
    Prop1,
    Prop2,
    Random,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PolicyKind {
    Uniform,
    Random,
}

#[derive(Debug, Args)]
pub struct GenGameArgs {
    #[arg(long, value_enum)]
    pub builder: Builder,
    #[arg(long)]
    pub out: PathBuf,
    /// Agents for prop1.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub states: usize,
    /// Comma-separated action counts, one per agent.
    #[arg(long, value_delimiter = ',', default_value = "2,2")]
    pub actions: Vec<usize>,
    #[arg(long, default_value_t = 0.9)]
    pub gamma: f64,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub reward_min: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub reward_max: f64,
    #[arg(long, default_value_t = 1.0)]
    pub concentration: f64,
    /// Also write a policy file for the game.
    #[arg(long)]
    pub policy_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "uniform")]
    pub policy: PolicyKind,
}

/// An error paired with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: HamlError,
}

fn input(e: HamlError) -> Failure {
    Failure { code: 1, error: e }
}

fn runtime(e: HamlError) -> Failure {
    let code = match e {
        HamlError::Config(_) => 1,
        _ => 2,
    };
    Failure { code, error: e }
}

pub fn dispatch(cli: Cli) -> std::result::Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            record_wall_time,
        } => {
            let mut cfg = ExperimentConfig::load(&config).map_err(input)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = out
                .or_else(|| cfg.output.clone())
                .unwrap_or_else(|| PathBuf::from("haml-out"));
            let outcome = execute(&cfg, record_wall_time).map_err(runtime)?;
            write_outcome(&outcome, &dir).map_err(runtime)?;
            println!(
                "{}: {} iterations, final J {}, final nash_gap {}; wrote {}",
                outcome.summary.algorithm,
                outcome.summary.iterations,
                float(outcome.summary.final_j),
                float(outcome.summary.final_nash_gap),
                dir.display()
            );
            Ok(())
        }
        Command::Verify(args) => {
            let suite: Suite = args.suite.parse().map_err(input)?;
            let params = VerifyParams {
                seeds: args.seeds,
                n: if args.n.is_empty() { vec![2, 4, 6] } else { args.n },
                iterations: args.iterations,
                instances: args.instances,
                master_seed: args.master_seed,
            };
            let reports = run_suite(suite, &params).map_err(runtime)?;
            for r in &reports {
                print!("{r}");
            }
            if let Some(path) = &args.out {
                let text = serde_json::to_string_pretty(&reports).expect("report serialises") + "\n";
                std::fs::write(path, text).map_err(|e| runtime(HamlError::io(path, e)))?;
            }
            if reports.iter().all(|r| r.passed()) {
                Ok(())
            } else {
                Err(Failure {
                    code: 2,
                    error: HamlError::Numerical(format!("suite {suite} has failing checks")),
                })
            }
        }
        Command::GenGame(args) => {
            let game = match args.builder {
                Builder::Prop1 => build_prop1_game(args.n.unwrap_or(2)),
                Builder::Prop2 => Ok(build_prop2_game()),
                Builder::Random => random_game(&RandomGameSpec {
                    seed: args.seed,
                    n_states: args.states,
                    action_counts: args.actions.clone(),
                    gamma: args.gamma,
                    reward_range: (args.reward_min, args.reward_max),
                    concentration: args.concentration,
                }),
            }
            .map_err(input)?;
            game.save(&args.out).map_err(input)?;
            if let Some(path) = &args.policy_out {
                let pi = match args.policy {
                    PolicyKind::Uniform => uniform_joint_policy(&game),
                    PolicyKind::Random => random_joint_policy(&game, args.seed),
                };
                pi.save(path).map_err(input)?;
            }
            println!(
                "wrote game with {} agents, {} states to {}",
                game.n_agents(),
                game.n_states(),
                args.out.display()
            );
            Ok(())
        }
        Command::Eval { game, policy } => {
            let g = MarkovGame::load(&game).map_err(input)?;
            let pi = JointPolicy::load(&policy).map_err(input)?;
            pi.check_against(&g).map_err(input)?;
            let e = evaluate(&g, &pi).map_err(runtime)?;
            let gap = nash_gap_given(&g, &pi, e.j).map_err(runtime)?;
            println!("J {}", float(e.j));
            for (s, v) in e.v.iter().enumerate() {
                println!("V[{s}] {}", float(*v));
            }
            println!("nash_gap {}", float(gap));
            Ok(())
        }
    }
}

/// Entry point of the `haml` binary. Log verbosity comes from `HAML_LOG`.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HAML_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prop2_config() -> &'static str {
        r#"{
            "schema_version": 1,
            "game": {"builder": {"name": "prop2"}},
            "initial_policy": {"first_action": 0.7},
            "algorithm": {"kind": "haml", "engine": {
                "hadf": {"kind": "trivial"},
                "permutations": {"kind": "fixed_cycle", "schedule": [[0, 1]]},
                "iterations": 3
            }},
            "seed": 1
        }"#
    }

    #[test]
    fn prop2_run_ends_at_the_optimum() {
        let cfg = ExperimentConfig::from_json(prop2_config(), Path::new(".")).unwrap();
        let out = execute(&cfg, false).unwrap();
        assert_eq!(out.summary.final_j, 2.0);
        assert_eq!(out.summary.final_nash_gap, 0.0);
        let csv = out.table.to_csv().unwrap();
        let header = csv.lines().next().unwrap();
        assert_eq!(header, "k,j,nash_gap,v_0,permutation,hamo_0,hamo_1,drift_0,drift_1,fallbacks,wall_ms");
        assert!(csv.lines().nth(1).unwrap().starts_with("0,2.0000000000000000e0,0.0000000000000000e0,"));
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23] {
            assert_eq!(float(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn config_errors_name_the_field() {
        let missing = prop2_config().replace(r#"{"builder": {"name": "prop2"}}"#, r#"{"path": "nope.json"}"#);
        let err = ExperimentConfig::from_json(&missing, Path::new("/tmp")).unwrap_err().to_string();
        assert!(err.contains("nope.json"), "{err}");
        let bad = prop2_config().replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(ExperimentConfig::from_json(&bad, Path::new(".")).is_err());
        let two = prop2_config().replace(
            r#"{"builder": {"name": "prop2"}}"#,
            r#"{"builder": {"name": "prop2"}, "path": "x"}"#,
        );
        assert!(ExperimentConfig::from_json(&two, Path::new(".")).is_err());
        let zero = prop2_config().replace("\"iterations\": 3", "\"iterations\": 0");
        assert!(ExperimentConfig::from_json(&zero, Path::new(".")).is_err());
    }

    #[test]
    fn other_algorithms_run() {
        let base = |alg: &str| {
            format!(
                r#"{{"schema_version": 1, "game": {{"builder": {{"name": "prop1", "n": 4}}}},
                    "initial_policy": {{"random": 3}}, "algorithm": {alg}}}"#
            )
        };
        for alg in [
            r#"{"kind": "naive_a2c", "iterations": 3}"#,
            r#"{"kind": "haa2c", "iterations": 3}"#,
            r#"{"kind": "shared_optimum"}"#,
        ] {
            let cfg = ExperimentConfig::from_json(&base(alg), Path::new(".")).unwrap();
            let out = execute(&cfg, false).unwrap();
            assert!(!out.table.rows.is_empty());
        }
        let cfg = ExperimentConfig::from_json(&base(r#"{"kind": "shared_optimum"}"#), Path::new(".")).unwrap();
        let ratio = execute(&cfg, false).unwrap().summary.extra.unwrap()["ratio"].as_f64().unwrap();
        assert!((ratio - 0.125).abs() < 1e-9);
    }
}
