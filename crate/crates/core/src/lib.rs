//! Exact, tabular heterogeneous-agent mirror learning for cooperative Markov games.
//!
//! The crate is organised bottom-up:
//!
//! - [`game`]: finite cooperative Markov games, joint-action indexing and tabular policies.
//! - [`eval`]: exact policy evaluation, multi-agent Q/advantage functions, best responses
//!   and the Nash gap.
//! - [`drift`]: drift functionals (trivial, KL penalty, clip/ReLU, squared L2) and the
//!   state weightings used to average them.
//! - [`neighborhood`]: hard trust-region style constraint sets around the current policy.
//! - [`mirror`]: the per-agent mirror operator that every update maximises, plus the
//!   clipped-surrogate identity checker.
//! - [`engine`]: the sequential, randomly-permuted update loop with per-state improvement
//!   enforcement and audit records.
//! - [`baselines`]: naive simultaneous updates, shared-policy optimisation, brute force,
//!   trajectory sampling and a tabular sequential advantage actor-critic.
//! - [`verify`]: property sweeps binding each guarantee to a runnable check.
//! - [`cli`]: the `haml` command-line harness (run / verify / gen-game / eval).
//!
//! Runnable walkthroughs for each capability live in the crate's `examples/` directory.

// Negated float comparisons are used on purpose: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cli;
pub mod conditional;
pub mod drift;
pub mod engine;
pub mod error;
pub mod eval;
pub mod game;
pub mod mirror;
pub mod neighborhood;
pub mod seeding;
pub mod verify;

pub use error::{HamlError, Result};
pub use eval::{evaluate, nash_gap, EvalBundle};
pub use game::{AgentPolicy, JointActionSpace, JointPolicy, MarkovGame};
