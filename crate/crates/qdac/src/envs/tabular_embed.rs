//! Continuous-interface embedding of a finite MDP.
//!
//! Wraps a [`FiniteMdp`] behind the [`Environment`] trait so the
//! function-approximation stack can be run on a problem whose successor
//! features are known in closed form: observations are one-hot state
//! indicators, the single continuous action in `[-1, 1]` is binned into the
//! MDP's discrete actions, and rewards/features come straight from the MDP
//! tables. This is the bridge used to compare a trained features critic
//! against the exact linear-solve answer.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use super::{clip_action, EnvError, EnvSpec, Environment, Perturbation, StepResult};
use crate::seeding;
use crate::tabular::FiniteMdp;

/// Finite MDP exposed through the continuous-control interface.
#[derive(Debug, Clone)]
pub struct TabularEmbedEnv {
    mdp: FiniteMdp,
    spec: EnvSpec,
    state: usize,
    t: usize,
    rng: ChaCha12Rng,
}

impl TabularEmbedEnv {
    /// Wrap `mdp`. Episodes run for `episode_len` steps; the start state and
    /// all transitions are drawn from the stream seeded in [`Environment::reset`].
    pub fn new(mdp: FiniteMdp, episode_len: usize) -> Result<Self, EnvError> {
        if episode_len == 0 {
            return Err(EnvError::InvalidPerturbation(
                "episode_len must be positive".to_string(),
            ));
        }
        let d = mdp.feature_dim();
        let spec = EnvSpec {
            obs_dim: mdp.n_states(),
            action_dim: 1,
            feature_dim: d,
            skill_lo: vec![0.0; d],
            skill_hi: vec![1.0; d],
            episode_len,
            delta: 0.05,
            d_eval: 0.2,
        };
        Ok(Self {
            mdp,
            spec,
            state: 0,
            t: 0,
            rng: seeding::rng(0, "envs.tabular_embed"),
        })
    }

    /// Map a continuous action in `[-1, 1]` to a discrete MDP action by
    /// equal-width binning (two actions split at zero, with `0.0` itself in
    /// the upper bin).
    pub fn bin_action(&self, a: f64) -> usize {
        let na = self.mdp.n_actions();
        let idx = ((a + 1.0) / 2.0 * na as f64).floor() as isize;
        idx.clamp(0, na as isize - 1) as usize
    }

    /// Continuous action at the center of discrete action `a`'s bin.
    pub fn bin_center(&self, a: usize) -> f64 {
        let na = self.mdp.n_actions() as f64;
        -1.0 + (2.0 * a as f64 + 1.0) / na
    }

    pub fn mdp(&self) -> &FiniteMdp {
        &self.mdp
    }

    /// Current discrete state (for tests that track the underlying chain).
    pub fn state(&self) -> usize {
        self.state
    }

    fn one_hot(&self, s: usize) -> Vec<f64> {
        let mut obs = vec![0.0; self.mdp.n_states()];
        obs[s] = 1.0;
        obs
    }
}

impl Environment for TabularEmbedEnv {
    fn name(&self) -> &'static str {
        "tabular_embed"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = seeding::rng(seed, "envs.tabular_embed");
        self.state = self.rng.random_range(0..self.mdp.n_states());
        self.t = 0;
        self.one_hot(self.state)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if self.t >= self.spec.episode_len {
            return Err(EnvError::EpisodeOver);
        }
        let u = clip_action(action, 1)?;
        let a = self.bin_action(u[0]);
        let s = self.state;
        let reward = self.mdp.reward(s, a);
        let features = self.mdp.phi(s, a).to_vec();

        // Inverse-CDF draw from the transition row.
        let draw: f64 = self.rng.random();
        let row = self.mdp.p_row(s, a);
        let mut acc = 0.0;
        let mut next = self.mdp.n_states() - 1;
        for (s2, &p) in row.iter().enumerate() {
            acc += p;
            if draw < acc {
                next = s2;
                break;
            }
        }
        self.state = next;
        self.t += 1;
        Ok(StepResult {
            obs: self.one_hot(next),
            reward,
            features,
            done: self.t == self.spec.episode_len,
        })
    }

    fn clone_env(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }

    fn perturbed(&self, perturbation: &Perturbation) -> Result<Box<dyn Environment>, EnvError> {
        Err(EnvError::IncompatiblePerturbation {
            perturbation: perturbation.kind_name(),
            env: self.name(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::{random_mdp, RandomMdpConfig};

    fn two_state_env() -> TabularEmbedEnv {
        // Deterministic swap chain with distinct rewards/features per
        // (state, action).
        let mdp = FiniteMdp::new(
            2,
            2,
            1,
            0.9,
            vec![
                0.0, 1.0, // s0 a0 -> s1
                1.0, 0.0, // s0 a1 -> s0
                1.0, 0.0, // s1 a0 -> s0
                0.0, 1.0, // s1 a1 -> s1
            ],
            vec![0.1, 0.2, 0.3, 0.4],
            vec![1.0, 2.0, 3.0, 4.0],
        )
        .unwrap();
        TabularEmbedEnv::new(mdp, 50).unwrap()
    }

    #[test]
    fn binning_splits_at_zero_for_two_actions() {
        let env = two_state_env();
        assert_eq!(env.bin_action(-1.0), 0);
        assert_eq!(env.bin_action(-1e-12), 0);
        assert_eq!(env.bin_action(0.0), 1);
        assert_eq!(env.bin_action(1.0), 1);
        assert_eq!(env.bin_center(0), -0.5);
        assert_eq!(env.bin_center(1), 0.5);
    }

    #[test]
    fn bin_centers_round_trip_through_binning() {
        let mdp = random_mdp(
            &RandomMdpConfig {
                n_states: 3,
                n_actions: 5,
                feature_dim: 1,
                gamma: 0.9,
            },
            3,
        );
        let env = TabularEmbedEnv::new(mdp, 10).unwrap();
        for a in 0..5 {
            assert_eq!(env.bin_action(env.bin_center(a)), a);
        }
    }

    #[test]
    fn observations_are_one_hot_states() {
        let mut env = two_state_env();
        let obs = env.reset(9);
        assert_eq!(obs.len(), 2);
        assert_eq!(obs.iter().sum::<f64>(), 1.0);
        assert!(obs.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn deterministic_rows_follow_the_table() {
        let mut env = two_state_env();
        env.reset(4);
        let s0 = env.state();
        // Action bin 0 from either state swaps; bin 1 stays.
        let r = env.step(&[-0.5]).unwrap();
        assert_eq!(env.state(), 1 - s0);
        assert_eq!(r.reward, env.mdp().reward(s0, 0));
        assert_eq!(r.features, vec![env.mdp().phi(s0, 0)[0]]);
        let s1 = env.state();
        env.step(&[0.5]).unwrap();
        assert_eq!(env.state(), s1);
    }

    #[test]
    fn reset_seed_determines_the_whole_trajectory() {
        let mdp = random_mdp(
            &RandomMdpConfig {
                n_states: 4,
                n_actions: 2,
                feature_dim: 2,
                gamma: 0.9,
            },
            21,
        );
        let mut a = TabularEmbedEnv::new(mdp.clone(), 30).unwrap();
        let mut b = TabularEmbedEnv::new(mdp, 30).unwrap();
        assert_eq!(a.reset(77), b.reset(77));
        for t in 0..30 {
            let action = [if t % 3 == 0 { -0.7 } else { 0.4 }];
            let ra = a.step(&action).unwrap();
            let rb = b.step(&action).unwrap();
            assert_eq!(ra.obs, rb.obs);
            assert_eq!(ra.reward, rb.reward);
            assert_eq!(ra.done, t == 29);
        }
        assert!(matches!(a.step(&[0.0]), Err(EnvError::EpisodeOver)));
    }

    #[test]
    fn stochastic_rows_visit_every_state() {
        let mdp = random_mdp(
            &RandomMdpConfig {
                n_states: 4,
                n_actions: 2,
                feature_dim: 1,
                gamma: 0.9,
            },
            5,
        );
        let mut env = TabularEmbedEnv::new(mdp, 500).unwrap();
        env.reset(1);
        let mut seen = [false; 4];
        seen[env.state()] = true;
        for _ in 0..500 {
            env.step(&[0.3]).unwrap();
            seen[env.state()] = true;
        }
        assert!(seen.iter().all(|&v| v), "ergodic chain should cover states");
    }

    #[test]
    fn rejects_perturbations() {
        let env = two_state_env();
        let p = Perturbation::GravityScale { factor: 0.5 };
        assert!(matches!(
            env.perturbed(&p),
            Err(EnvError::IncompatiblePerturbation { .. })
        ));
    }
}
