//! Bayesian Stackelberg game engine for budgeted vulnerability discovery.
//!
//! The crate models an intra-kernel attack graph, a defender that commits to
//! analysis coverage over its vertices, and typed attackers that best-respond
//! with entry-to-goal paths. On top of the game it provides an exact
//! equilibrium solver, a Bayesian belief engine driven by simulated tool
//! observations, the round-based orchestration loop, an online (EXP3) learner
//! with empirical regret measurement, and a baseline-comparison harness.
//!
//! Module map:
//!
//! - [`attack_graph`]: graph types, validation, path probabilities,
//!   enumeration, the seeded synthetic generator and ground-truth planting.
//! - [`game_model`]: attacker types, defender parameters, utilities and best
//!   responses.
//! - [`solver`]: profile-enumeration equilibrium solver and grid oracle.
//! - [`belief`]: observation likelihoods and Bayesian updates.
//! - [`orchestrator`]: pruning, dispatch, simulated execution, verification,
//!   sibling search, mitigation and the full run loop.
//! - [`learner`]: discretized strategy grid, EXP3 and regret traces.
//! - [`harness`]: baselines, metrics, multi-seed comparisons and ablations.

pub mod attack_graph;
pub mod belief;
pub mod error;
pub mod game_model;
pub mod harness;
pub mod learner;
pub mod orchestrator;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
