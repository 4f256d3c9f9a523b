//! Seeded random problem instances for the certification sweeps.
//!
//! These generators feed the bound-certification tests with thousands of
//! distinct `(MDP, policy, skill)` triples. They are deterministic in the
//! seed so every reported instance can be replayed exactly.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{FiniteMdp, TabularPolicy};
use crate::seeding;

/// Shape parameters for a randomly drawn finite MDP.
#[derive(Debug, Clone, Copy)]
pub struct RandomMdpConfig {
    pub n_states: usize,
    pub n_actions: usize,
    pub feature_dim: usize,
    pub gamma: f64,
}

/// Draw a fully stochastic MDP: each transition row is sampled from a flat
/// Dirichlet (so every entry is strictly positive and the on-policy chain is
/// ergodic for any policy), features are uniform in `[0, 1]`, rewards uniform
/// in `[-1, 1]`.
pub fn random_mdp(cfg: &RandomMdpConfig, seed: u64) -> FiniteMdp {
    let mut rng = seeding::rng(seed, "tabular.random_mdp");
    let (n, na, d) = (cfg.n_states, cfg.n_actions, cfg.feature_dim);
    let mut transition = vec![0.0; n * na * n];
    for row in transition.chunks_exact_mut(n) {
        // Normalized standard exponentials are a flat Dirichlet draw.
        let mut total = 0.0;
        for p in row.iter_mut() {
            let u: f64 = rng.random();
            *p = -(1.0 - u).ln();
            total += *p;
        }
        for p in row.iter_mut() {
            *p /= total;
        }
    }
    let features = (0..n * na * d).map(|_| rng.random::<f64>()).collect();
    let rewards = (0..n * na).map(|_| rng.random_range(-1.0..=1.0)).collect();
    FiniteMdp::new(n, na, d, cfg.gamma, transition, features, rewards)
        .expect("generator output must validate")
}

/// Draw a strictly positive random policy (Dirichlet rows, like the
/// transition kernel).
pub fn random_policy(n_states: usize, n_actions: usize, seed: u64) -> TabularPolicy {
    let mut rng = seeding::rng(seed, "tabular.random_policy");
    let mut probs = vec![0.0; n_states * n_actions];
    for row in probs.chunks_exact_mut(n_actions) {
        let mut total = 0.0;
        for p in row.iter_mut() {
            let u: f64 = rng.random();
            *p = -(1.0 - u).ln();
            total += *p;
        }
        for p in row.iter_mut() {
            *p /= total;
        }
    }
    TabularPolicy::new(n_states, n_actions, probs).expect("generator output must validate")
}

/// Draw a skill vector uniformly from the unit box `[0, 1]^d`, matching the
/// range of the randomly drawn features.
pub fn random_skill(feature_dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeding::rng(seed, "tabular.random_skill");
    (0..feature_dim).map(|_| rng.random::<f64>()).collect()
}

/// Draw a deterministic instance: every transition row is one-hot, the
/// policy picks exactly one action per state, and the on-policy chain is a
/// single cycle through all states (so its stationary distribution exists
/// and is uniform). Off-policy actions jump to arbitrary states.
///
/// On such instances every sampled successor pair satisfies the
/// successor-feature Bellman identity exactly, which is what makes them the
/// right probes for the "Bellman gap is exactly zero" certificates.
pub fn random_deterministic_instance(
    cfg: &RandomMdpConfig,
    seed: u64,
) -> (FiniteMdp, TabularPolicy) {
    let mut rng = seeding::rng(seed, "tabular.random_deterministic");
    let (n, na, d) = (cfg.n_states, cfg.n_actions, cfg.feature_dim);

    // Random single cycle: visit states in shuffled order, each stepping to
    // the next.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut cycle_next = vec![0usize; n];
    for i in 0..n {
        cycle_next[order[i]] = order[(i + 1) % n];
    }

    let chosen: Vec<usize> = (0..n).map(|_| rng.random_range(0..na)).collect();
    let mut transition = vec![0.0; n * na * n];
    for s in 0..n {
        for a in 0..na {
            let target = if a == chosen[s] {
                cycle_next[s]
            } else {
                rng.random_range(0..n)
            };
            transition[(s * na + a) * n + target] = 1.0;
        }
    }
    let features = (0..n * na * d).map(|_| rng.random::<f64>()).collect();
    let rewards = (0..n * na).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let mdp = FiniteMdp::new(n, na, d, cfg.gamma, transition, features, rewards)
        .expect("generator output must validate");
    let pi = TabularPolicy::deterministic(n, na, &chosen).expect("chosen actions are in range");
    (mdp, pi)
}
