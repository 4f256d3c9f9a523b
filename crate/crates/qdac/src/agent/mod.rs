//! Skill-conditioned constrained actor-critic learner.
//!
//! A SAC backbone (squashed-Gaussian actor, clipped double Q, automatic
//! entropy temperature) extended with a successor-features critic and a
//! state-conditioned Lagrange multiplier that arbitrates between reward
//! maximization and skill execution. Ablation [`Mode`]s swap the penalty
//! critic or pin the multiplier while leaving the backbone untouched.

mod config;
pub mod losses;
mod networks;
mod replay;
mod train;

pub use config::{Mode, QdacConfig};
pub use losses::{squashed_gaussian_logp, Workspace, LOG_STD_MAX, LOG_STD_MIN};
pub use networks::{sigmoid, softplus, ActorPolicy, QdacNetworks, CHECKPOINT_ROLES};
pub use replay::{relabel_batch, Batch, ReplayBuffer};
pub use train::{train, AgentError, LogRow, TrainResult};
