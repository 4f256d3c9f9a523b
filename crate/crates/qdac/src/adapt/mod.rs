//! Harnessing a trained skill repertoire without re-training.
//!
//! Two mechanisms, both operating on a *frozen* policy snapshot:
//!
//! * **Few-shot selection** — when the dynamics change (an actuator weakens,
//!   drag grows), sweep the whole skill grid on the perturbed environment
//!   and pick the skill with the best return. No gradient steps, just
//!   evaluation.
//! * **Hierarchical control** — train a small meta-controller whose
//!   *actions are skills*: each meta action is clamped into the skill box,
//!   held for a fixed number of low-level steps, and rewarded by the
//!   forward displacement it produced. The low-level policy's parameters
//!   are never touched.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::agent::{train, AgentError, Mode, QdacConfig, TrainResult};
use crate::envs::{clip_action, EnvError, EnvSpec, Environment, Perturbation, StepResult};
use crate::metrics::{evaluate_grid, SkillGrid};
use crate::policy::SkillPolicy;

/// Default number of low-level steps a meta action is held for.
pub const DEFAULT_K_MACRO: usize = 10;

/// A single-parameter family of perturbations, swept by `factor`.
///
/// The wall perturbation is excluded: it is a two-parameter geometric
/// change used by the hierarchical task, not a scalar sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbationKind {
    /// Scale one action component.
    ActionScale { index: usize },
    /// Scale gravity.
    GravityScale,
    /// Scale the linear drag coefficient.
    DragScale,
}

impl PerturbationKind {
    /// The concrete perturbation at one sweep level.
    pub fn at(self, factor: f64) -> Perturbation {
        match self {
            PerturbationKind::ActionScale { index } => Perturbation::ActionScale { index, factor },
            PerturbationKind::GravityScale => Perturbation::GravityScale { factor },
            PerturbationKind::DragScale => Perturbation::DragScale { factor },
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerturbationKind::ActionScale { index } => write!(f, "action_scale:{index}"),
            PerturbationKind::GravityScale => write!(f, "gravity_scale"),
            PerturbationKind::DragScale => write!(f, "drag_scale"),
        }
    }
}

impl FromStr for PerturbationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gravity_scale" => Ok(PerturbationKind::GravityScale),
            "drag_scale" => Ok(PerturbationKind::DragScale),
            other => {
                if let Some(index) = other.strip_prefix("action_scale:") {
                    let index = index.parse::<usize>().map_err(|e| {
                        format!("bad action index in perturbation `{other}`: {e}")
                    })?;
                    Ok(PerturbationKind::ActionScale { index })
                } else {
                    Err(format!(
                        "unknown perturbation `{other}` \
                         (expected action_scale:<index>, gravity_scale, or drag_scale)"
                    ))
                }
            }
        }
    }
}

/// Outcome of evaluating the full skill grid at one perturbation level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelOutcome {
    /// The sweep factor this level was evaluated at.
    pub factor: f64,
    /// Mean return per grid skill, in grid order.
    pub returns: Vec<f64>,
    /// Grid index of the best skill; ties broken by the lowest index.
    pub best_index: usize,
    /// The best skill vector itself.
    pub best_skill: Vec<f64>,
    /// Its mean return — the max over `returns`.
    pub best_return: f64,
}

/// A few-shot adaptation sweep: per perturbation level, the full per-skill
/// return table and the selected best skill.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationCurve {
    pub kind: PerturbationKind,
    pub n_rollouts: usize,
    pub levels: Vec<LevelOutcome>,
}

/// Sweep `kind` over `levels`, evaluating every grid skill on the perturbed
/// environment and selecting the best-returning one per level.
///
/// Purely evaluative: the policy is only ever called through its immutable
/// action interface. Per-skill evaluation seeds match the metrics module's
/// grid evaluation (and do not depend on the level), so the identity level
/// reproduces an unperturbed grid evaluation exactly.
pub fn few_shot_select(
    policy: &dyn SkillPolicy,
    env: &dyn Environment,
    kind: PerturbationKind,
    levels: &[f64],
    grid: &SkillGrid,
    n_rollouts: usize,
    seed: u64,
) -> Result<AdaptationCurve, EnvError> {
    assert!(!levels.is_empty(), "need at least one perturbation level");
    assert!(!grid.is_empty(), "need at least one skill to select from");
    let mut outcomes = Vec::with_capacity(levels.len());
    for &factor in levels {
        let perturbed = env.perturbed(&kind.at(factor))?;
        let records = evaluate_grid(policy, perturbed.as_ref(), grid, n_rollouts, seed)?;
        let returns: Vec<f64> = records.iter().map(|rec| rec.r).collect();
        let mut best_index = 0;
        for (i, &r) in returns.iter().enumerate() {
            if r > returns[best_index] {
                best_index = i;
            }
        }
        outcomes.push(LevelOutcome {
            factor,
            best_index,
            best_skill: grid.point(best_index).to_vec(),
            best_return: returns[best_index],
            returns,
        });
    }
    Ok(AdaptationCurve {
        kind,
        n_rollouts,
        levels: outcomes,
    })
}

/// An environment whose actions are *skills*: each action is clamped into
/// the low-level skill box, handed to a frozen skill-conditioned policy for
/// `k_macro` inner steps, and rewarded by the forward displacement
/// (`obs[0]`) accumulated over those steps.
///
/// Observations pass through from the inner environment; the feature signal
/// is the macro reward itself. The skill box is a degenerate single point,
/// so a plain (skill-free) agent trained on this environment sees a
/// constant conditioning input.
pub struct MacroSkillEnv {
    inner: Box<dyn Environment>,
    low_level: Arc<dyn SkillPolicy>,
    k_macro: usize,
    spec: EnvSpec,
    inner_obs: Vec<f64>,
    t: usize,
}

impl MacroSkillEnv {
    pub fn new(
        inner: Box<dyn Environment>,
        low_level: Arc<dyn SkillPolicy>,
        k_macro: usize,
    ) -> MacroSkillEnv {
        assert!(k_macro >= 1, "macro actions must span at least one step");
        let inner_spec = inner.spec().clone();
        let spec = EnvSpec {
            obs_dim: inner_spec.obs_dim,
            action_dim: inner_spec.skill_lo.len(),
            feature_dim: 1,
            skill_lo: vec![0.0],
            skill_hi: vec![0.0],
            episode_len: inner_spec.episode_len.div_ceil(k_macro),
            delta: inner_spec.delta,
            d_eval: inner_spec.d_eval,
        };
        let inner_obs = vec![0.0; spec.obs_dim];
        MacroSkillEnv {
            inner,
            low_level,
            k_macro,
            spec,
            inner_obs,
            t: 0,
        }
    }

    pub fn k_macro(&self) -> usize {
        self.k_macro
    }
}

impl Environment for MacroSkillEnv {
    fn name(&self) -> &'static str {
        "macro_skill"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.inner_obs = self.inner.reset(seed);
        self.t = 0;
        self.inner_obs.clone()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if self.t >= self.spec.episode_len {
            return Err(EnvError::EpisodeOver);
        }
        // Clip like any action, then clamp into the low-level skill box.
        let clipped = clip_action(action, self.spec.action_dim)?;
        let skill = self.inner.spec().clamp_skill(&clipped);
        let start_x = self.inner_obs[0];
        let mut inner_done = false;
        for _ in 0..self.k_macro {
            let act = self.low_level.action(&self.inner_obs, &skill);
            let result = self.inner.step(&act)?;
            self.inner_obs = result.obs;
            if result.done {
                inner_done = true;
                break;
            }
        }
        self.t += 1;
        let displacement = self.inner_obs[0] - start_x;
        Ok(StepResult {
            obs: self.inner_obs.clone(),
            reward: displacement,
            features: vec![displacement],
            done: inner_done || self.t == self.spec.episode_len,
        })
    }

    fn clone_env(&self) -> Box<dyn Environment> {
        Box::new(MacroSkillEnv {
            inner: self.inner.clone_env(),
            low_level: Arc::clone(&self.low_level),
            k_macro: self.k_macro,
            spec: self.spec.clone(),
            inner_obs: self.inner_obs.clone(),
            t: self.t,
        })
    }

    fn perturbed(&self, _p: &Perturbation) -> Result<Box<dyn Environment>, EnvError> {
        Err(EnvError::InvalidPerturbation(
            "perturb the inner environment before wrapping it".into(),
        ))
    }
}

/// Train a meta-controller over a frozen low-level policy.
///
/// The meta agent is always a plain (skill-free) soft actor-critic — the
/// mode in `cfg` is overridden — acting on [`MacroSkillEnv`] with macro
/// period `k_macro`. The low-level policy is shared read-only and never
/// updated.
pub fn hierarchical_train(
    inner_env: &dyn Environment,
    low_level: Arc<dyn SkillPolicy>,
    k_macro: usize,
    cfg: &QdacConfig,
) -> Result<TrainResult, AgentError> {
    let mut cfg = cfg.clone();
    cfg.mode = Mode::PlainSac;
    let mut env = MacroSkillEnv::new(inner_env.clone_env(), low_level, k_macro);
    train(&mut env, &cfg)
}
