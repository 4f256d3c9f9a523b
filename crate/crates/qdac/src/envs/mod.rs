//! Toy control environments with exact, fully documented dynamics.
//!
//! Both environments are deliberately small (4-dimensional state, 200-step
//! episodes, semi-implicit Euler integration) so that training runs finish
//! in minutes while preserving the structure the agent needs: a quality
//! signal (forward velocity minus energy cost) in tension with a diversity
//! signal (per-step features whose long-run average must match a commanded
//! skill).
//!
//! * [`PointVelocityEnv`] — planar point mass; features are the velocity
//!   components, skills span `[-1, 1]^2`.
//! * [`HopperLiteEnv`] — 1-D hopper with ground contact; the feature is the
//!   contact indicator, skills span `[0, 1]` (commanded contact rate).
//! * [`TabularEmbedEnv`] — a finite MDP embedded in continuous vectors, used
//!   to compare learned successor features against the exact tabular oracle.
//! * [`Perturbation`] — dynamics modifications (actuator damage, gravity,
//!   drag, a wall) used by the adaptation experiments. Identity-valued
//!   perturbations are bit-identical to the unwrapped dynamics.

mod hopper;
mod point;
mod tabular_embed;
mod trajectory;

pub use hopper::HopperLiteEnv;
pub use point::PointVelocityEnv;
pub use tabular_embed::TabularEmbedEnv;
pub use trajectory::{rollout_trajectory, write_trajectory_csv, Trajectory, TrajectoryStep};

use thiserror::Error;

/// Static description of an environment's interface and evaluation
/// thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub feature_dim: usize,
    /// Skill-space box, lower corner; length `feature_dim`.
    pub skill_lo: Vec<f64>,
    /// Skill-space box, upper corner.
    pub skill_hi: Vec<f64>,
    /// Episode length `T`; `done` is signaled exactly at step `T`.
    pub episode_len: usize,
    /// Constraint threshold: the Lagrange label counts a state as satisfied
    /// when the predicted feature distance is at most `delta`.
    pub delta: f64,
    /// Evaluation threshold on the *measured* distance `d(z)`; strictly
    /// larger than `delta`.
    pub d_eval: f64,
}

impl EnvSpec {
    /// Center of the skill box (used by the skill-agnostic baseline mode).
    pub fn skill_center(&self) -> Vec<f64> {
        self.skill_lo
            .iter()
            .zip(&self.skill_hi)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    /// Clamp a skill vector into the box, component-wise.
    pub fn clamp_skill(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.skill_lo.iter().zip(&self.skill_hi))
            .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
            .collect()
    }
}

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// Per-step feature vector `phi`; always inside the skill box.
    pub features: Vec<f64>,
    /// True exactly at the final step of an episode (time limit); these
    /// environments have no terminal states.
    pub done: bool,
}

/// Errors from environment stepping and perturbation construction.
#[derive(Debug, Error)]
pub enum EnvError {
    #[error("action has {got} components, environment wants {expected}")]
    ActionDimension { expected: usize, got: usize },
    #[error("non-finite action component {index}")]
    NonFiniteAction { index: usize },
    #[error("step called after the episode ended; reset first")]
    EpisodeOver,
    #[error("perturbation {perturbation} does not apply to {env}")]
    IncompatiblePerturbation {
        perturbation: &'static str,
        env: &'static str,
    },
    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),
    #[error("unknown environment \"{0}\"")]
    UnknownEnv(String),
}

/// A dynamics modification for adaptation studies. For every kind, the
/// nominal value (`factor = 1.0`, or `gap_halfwidth = 0.0` for the wall)
/// leaves trajectories bit-identical to the unperturbed environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    /// Scale one action component by `factor` (actuator damage at
    /// `factor < 1`, with `0.0` a fully failed actuator).
    ActionScale { index: usize, factor: f64 },
    /// Scale gravity by `factor` (hopper only).
    GravityScale { factor: f64 },
    /// Scale the nominal linear drag coefficient by `factor` (point mass
    /// only).
    DragScale { factor: f64 },
    /// A wall in the plane at `x = x_position` blocking crossings at
    /// `|y| < gap_halfwidth`; passage remains open beyond the wall's ends
    /// (point mass only). `gap_halfwidth = 0` blocks nothing.
    Wall { x_position: f64, gap_halfwidth: f64 },
}

impl Perturbation {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Perturbation::ActionScale { .. } => "action_scale",
            Perturbation::GravityScale { .. } => "gravity_scale",
            Perturbation::DragScale { .. } => "drag_scale",
            Perturbation::Wall { .. } => "wall",
        }
    }

    /// Validate numeric fields shared by all kinds.
    pub(crate) fn validate(&self) -> Result<(), EnvError> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(EnvError::InvalidPerturbation(format!("non-finite {what}")))
            }
        };
        match *self {
            Perturbation::ActionScale { factor, .. } => {
                finite(factor, "action factor")?;
                if factor < 0.0 {
                    return Err(EnvError::InvalidPerturbation(
                        "negative action factor".into(),
                    ));
                }
            }
            Perturbation::GravityScale { factor } => {
                finite(factor, "gravity factor")?;
                if factor <= 0.0 {
                    return Err(EnvError::InvalidPerturbation(
                        "gravity factor must be positive".into(),
                    ));
                }
            }
            Perturbation::DragScale { factor } => {
                finite(factor, "drag factor")?;
                if factor < 0.0 {
                    return Err(EnvError::InvalidPerturbation("negative drag factor".into()));
                }
            }
            Perturbation::Wall {
                x_position,
                gap_halfwidth,
            } => {
                finite(x_position, "wall position")?;
                finite(gap_halfwidth, "wall gap halfwidth")?;
                if gap_halfwidth < 0.0 {
                    return Err(EnvError::InvalidPerturbation(
                        "negative wall gap halfwidth".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A resettable, steppable control environment. Implementations are
/// deterministic: `reset(seed)` fully determines the episode given the
/// action sequence.
pub trait Environment: Send {
    fn name(&self) -> &'static str;
    fn spec(&self) -> &EnvSpec;
    /// Start a new episode; the seed drives the (small) initial-state jitter.
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    /// Advance one step. Actions are clipped to `[-1, 1]` per component
    /// before use; non-finite actions are rejected.
    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError>;
    /// Independent copy with identical state (for evaluation fan-out).
    fn clone_env(&self) -> Box<dyn Environment>;
    /// A copy of this environment with a perturbation applied. Fails for
    /// kinds that do not apply to this environment.
    fn perturbed(&self, p: &Perturbation) -> Result<Box<dyn Environment>, EnvError>;
}

/// Construct a built-in environment by name (`point_velocity` or
/// `hopper_lite`).
pub fn make_env(name: &str) -> Result<Box<dyn Environment>, EnvError> {
    match name {
        "point_velocity" => Ok(Box::new(PointVelocityEnv::new())),
        "hopper_lite" => Ok(Box::new(HopperLiteEnv::new())),
        other => Err(EnvError::UnknownEnv(other.to_string())),
    }
}

/// Clip an action into `[-1, 1]`, rejecting non-finite components. Shared by
/// the concrete environments.
pub(crate) fn clip_action(action: &[f64], expected: usize) -> Result<Vec<f64>, EnvError> {
    if action.len() != expected {
        return Err(EnvError::ActionDimension {
            expected,
            got: action.len(),
        });
    }
    if let Some(index) = action.iter().position(|a| !a.is_finite()) {
        return Err(EnvError::NonFiniteAction { index });
    }
    Ok(action.iter().map(|a| a.clamp(-1.0, 1.0)).collect())
}

/// Uniform jitter in `[-bound, bound]` from a seeded stream; used by resets.
pub(crate) fn jitter(rng: &mut rand_chacha::ChaCha12Rng, bound: f64) -> f64 {
    use rand::Rng;
    rng.random_range(-bound..=bound)
}
