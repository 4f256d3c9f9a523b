//! Desk-scale lab for a skill-conditioned constrained actor-critic.
//!
//! The agent trains a soft actor-critic policy conditioned on a skill vector
//! `z` and balances two critics through a learned state-dependent Lagrange
//! multiplier: a conventional value critic (quality) and a successor-features
//! critic whose discounted feature prediction must stay close to the
//! commanded skill (diversity). Everything runs on plain `f64` CPU math so
//! that learned quantities can be checked against exact oracles:
//!
//! * [`approx`] — minimal dense MLPs with hand-written backprop, Adam, and a
//!   bit-exact checkpoint format,
//! * [`envs`] — two deterministic toy control environments plus perturbation
//!   wrappers for adaptation studies,
//! * [`tabular`] — finite MDP solvers that certify the successor-feature
//!   distance bounds exactly,
//! * [`agent`] — replay buffer, losses, and the training loop with ablation
//!   modes,
//! * [`metrics`] — skill-grid evaluation, distance/performance profiles, and
//!   interquartile-mean aggregation,
//! * [`adapt`] — few-shot skill selection under perturbation sweeps and a
//!   hierarchical meta-controller over frozen skills,
//! * [`cli`] — config parsing and the artifact-producing subcommands.

pub mod adapt;
pub mod agent;
pub mod approx;
pub mod cli;
pub mod envs;
pub mod metrics;
pub mod policy;
pub mod seeding;
pub mod tabular;

pub use approx::{AdamState, Mlp, MlpSpec};
pub use envs::{EnvSpec, Environment, StepResult};
pub use policy::SkillPolicy;
