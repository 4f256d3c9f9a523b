//! Episode rollouts and their on-disk CSV form.

use std::io::{self, Write};

use super::{EnvError, Environment};
use crate::policy::SkillPolicy;

/// One transition of a recorded episode. `obs` is the observation the
/// action was computed from; `reward` and `features` are what the step
/// returned.
#[derive(Debug, Clone)]
pub struct TrajectoryStep {
    pub t: usize,
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub features: Vec<f64>,
    pub done: bool,
}

/// A full episode rolled out under one skill.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub skill: Vec<f64>,
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    /// Undiscounted return.
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Per-component mean of the step features over the episode.
    pub fn mean_features(&self) -> Vec<f64> {
        let d = self.steps.first().map_or(0, |s| s.features.len());
        let mut mean = vec![0.0; d];
        for step in &self.steps {
            for (m, f) in mean.iter_mut().zip(&step.features) {
                *m += f;
            }
        }
        let n = self.steps.len().max(1) as f64;
        for m in &mut mean {
            *m /= n;
        }
        mean
    }

    /// Euclidean distance between the episode's mean features and its
    /// commanded skill — the quantity the skill-execution metrics average.
    pub fn feature_distance(&self) -> f64 {
        self.mean_features()
            .iter()
            .zip(&self.skill)
            .map(|(m, z)| (m - z) * (m - z))
            .sum::<f64>()
            .sqrt()
    }
}

/// Roll one full episode of `env` under `policy` conditioned on `skill`.
/// `seed` goes to [`Environment::reset`]; the policy itself must be
/// deterministic or carry its own sampling state.
pub fn rollout_trajectory(
    env: &mut dyn Environment,
    policy: &dyn SkillPolicy,
    skill: &[f64],
    seed: u64,
) -> Result<Trajectory, EnvError> {
    let mut obs = env.reset(seed);
    let mut steps = Vec::with_capacity(env.spec().episode_len);
    let mut t = 0;
    loop {
        let action = policy.action(&obs, skill);
        let result = env.step(&action)?;
        let done = result.done;
        steps.push(TrajectoryStep {
            t,
            obs,
            action,
            reward: result.reward,
            features: result.features,
            done,
        });
        obs = result.obs;
        t += 1;
        if done {
            break;
        }
    }
    Ok(Trajectory {
        skill: skill.to_vec(),
        steps,
    })
}

/// Write a trajectory as CSV: header row, then one row per step with the
/// observation, action, reward and feature columns expanded. Floats are
/// printed with 17 significant digits so the file round-trips bit-exactly.
pub fn write_trajectory_csv<W: Write>(w: &mut W, trajectory: &Trajectory) -> io::Result<()> {
    let first = match trajectory.steps.first() {
        Some(step) => step,
        None => return Ok(()),
    };
    write!(w, "t")?;
    for i in 0..first.obs.len() {
        write!(w, ",obs_{i}")?;
    }
    for i in 0..first.action.len() {
        write!(w, ",action_{i}")?;
    }
    write!(w, ",reward")?;
    for i in 0..first.features.len() {
        write!(w, ",feature_{i}")?;
    }
    writeln!(w, ",done")?;
    for step in &trajectory.steps {
        write!(w, "{}", step.t)?;
        for v in &step.obs {
            write!(w, ",{v:.16e}")?;
        }
        for v in &step.action {
            write!(w, ",{v:.16e}")?;
        }
        write!(w, ",{:.16e}", step.reward)?;
        for v in &step.features {
            write!(w, ",{v:.16e}")?;
        }
        writeln!(w, ",{}", u8::from(step.done))?;
    }
    Ok(())
}
