//! One-legged hopper with a contact-indicator feature.

use super::{clip_action, jitter, EnvError, EnvSpec, Environment, Perturbation, StepResult};
use crate::seeding;

/// Minimal hopper: a body at height `h` moving forward at `vx`, with ground
/// contact when `h = 0` (heights are clamped non-negative).
///
/// State `(x, h, vx, vh)`, actions `(u_up, u_fwd)` in `[-1, 1]^2`, `dt = 0.02`,
/// `g = 9.8`. Per step, with `contact = (h <= 0)` evaluated *before*
/// integration:
///
/// ```text
/// if contact:  vh += k_up * max(u_up, 0)          (takeoff impulse)
///              vx  = vx * (1 - mu) + k_fwd * u_fwd * dt   (ground push + friction)
/// vh -= g * dt
/// h  += vh * dt;  if h <= 0 { h = 0; vh = 0 }      (inelastic landing)
/// x  += vx * dt;  vx clamped to [-vx_max, vx_max]
/// ```
///
/// The feature is the pre-step contact indicator (`0` or `1`); skills in
/// `[0, 1]` command a long-run contact rate. Reward is `vx' - 0.1 * |u|^2`.
/// Airborne dynamics ignore both thrusts, so steering requires touching
/// down — resting gives contact rate 1, maximal hops approach rate ~0.02.
///
/// Perturbations: per-component actuator scaling and gravity scaling.
#[derive(Debug, Clone)]
pub struct HopperLiteEnv {
    spec: EnvSpec,
    x: f64,
    h: f64,
    vx: f64,
    vh: f64,
    t: usize,
    action_scale: Option<(usize, f64)>,
    gravity_factor: f64,
}

impl HopperLiteEnv {
    pub const DT: f64 = 0.02;
    pub const GRAVITY: f64 = 9.8;
    pub const K_UP: f64 = 5.0;
    pub const K_FWD: f64 = 5.0;
    pub const GROUND_FRICTION: f64 = 0.05;
    pub const VX_MAX: f64 = 2.0;
    pub const ENERGY_COST: f64 = 0.1;
    pub const EPISODE_LEN: usize = 200;
    const RESET_JITTER: f64 = 0.01;

    pub fn new() -> Self {
        HopperLiteEnv {
            spec: EnvSpec {
                obs_dim: 4,
                action_dim: 2,
                feature_dim: 1,
                skill_lo: vec![0.0],
                skill_hi: vec![1.0],
                episode_len: Self::EPISODE_LEN,
                delta: 0.02,
                d_eval: 0.15,
            },
            x: 0.0,
            h: 0.0,
            vx: 0.0,
            vh: 0.0,
            t: 0,
            action_scale: None,
            gravity_factor: 1.0,
        }
    }

    fn obs(&self) -> Vec<f64> {
        vec![self.x, self.h, self.vx, self.vh]
    }

    /// Direct state override for closed-form dynamics tests.
    #[cfg(test)]
    pub(crate) fn set_state(&mut self, x: f64, h: f64, vx: f64, vh: f64) {
        self.x = x;
        self.h = h.max(0.0);
        self.vx = vx;
        self.vh = vh;
    }

    /// Concrete-typed perturbation application backing [`Environment::perturbed`].
    pub fn apply(&self, p: &Perturbation) -> Result<HopperLiteEnv, EnvError> {
        p.validate()?;
        let mut env = self.clone();
        match *p {
            Perturbation::ActionScale { index, factor } => {
                if index >= 2 {
                    return Err(EnvError::InvalidPerturbation(format!(
                        "action index {index} out of range for 2-D actions"
                    )));
                }
                env.action_scale = Some((index, factor));
            }
            Perturbation::GravityScale { factor } => env.gravity_factor = factor,
            Perturbation::DragScale { .. } => {
                return Err(EnvError::IncompatiblePerturbation {
                    perturbation: "drag_scale",
                    env: "hopper_lite",
                })
            }
            Perturbation::Wall { .. } => {
                return Err(EnvError::IncompatiblePerturbation {
                    perturbation: "wall",
                    env: "hopper_lite",
                })
            }
        }
        Ok(env)
    }
}

impl Default for HopperLiteEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for HopperLiteEnv {
    fn name(&self) -> &'static str {
        "hopper_lite"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = seeding::rng(seed, "hopper_lite.reset");
        self.x = 0.0;
        // Heights are non-negative; fold the jitter into [0, bound].
        self.h = jitter(&mut rng, Self::RESET_JITTER).abs();
        self.vx = jitter(&mut rng, Self::RESET_JITTER);
        self.vh = jitter(&mut rng, Self::RESET_JITTER);
        self.t = 0;
        self.obs()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if self.t >= self.spec.episode_len {
            return Err(EnvError::EpisodeOver);
        }
        let mut u = clip_action(action, 2)?;
        if let Some((index, factor)) = self.action_scale {
            u[index] *= factor;
        }

        let contact = self.h <= 0.0;
        if contact {
            self.vh += Self::K_UP * u[0].max(0.0);
            self.vx = self.vx * (1.0 - Self::GROUND_FRICTION) + Self::K_FWD * u[1] * Self::DT;
        }
        self.vh -= Self::GRAVITY * self.gravity_factor * Self::DT;
        self.h += self.vh * Self::DT;
        if self.h <= 0.0 {
            self.h = 0.0;
            self.vh = 0.0;
        }
        self.vx = self.vx.clamp(-Self::VX_MAX, Self::VX_MAX);
        self.x += self.vx * Self::DT;

        self.t += 1;
        let energy: f64 = u.iter().map(|a| a * a).sum();
        Ok(StepResult {
            obs: self.obs(),
            reward: self.vx - Self::ENERGY_COST * energy,
            features: vec![if contact { 1.0 } else { 0.0 }],
            done: self.t == self.spec.episode_len,
        })
    }

    fn clone_env(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }

    fn perturbed(&self, p: &Perturbation) -> Result<Box<dyn Environment>, EnvError> {
        Ok(Box::new(self.apply(p)?))
    }
}
