//! Finite MDP and tabular policy types with validated construction.

use super::TabularError;

/// Row-stochasticity tolerance for validated constructors.
const ROW_SUM_TOL: f64 = 1e-12;

/// A finite MDP with per-state-action feature vectors.
///
/// Storage is flat and row-major: `transition[s][a][s']`,
/// `features[s][a][k]`, `rewards[s][a]`.
#[derive(Debug, Clone)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    feature_dim: usize,
    gamma: f64,
    transition: Vec<f64>,
    features: Vec<f64>,
    rewards: Vec<f64>,
}

impl FiniteMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        feature_dim: usize,
        gamma: f64,
        transition: Vec<f64>,
        features: Vec<f64>,
        rewards: Vec<f64>,
    ) -> Result<Self, TabularError> {
        if n_states == 0 || n_actions == 0 || feature_dim == 0 {
            return Err(TabularError::Invalid(
                "state, action, and feature dimensions must be nonzero".into(),
            ));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(TabularError::Invalid(format!(
                "discount {gamma} outside [0, 1)"
            )));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(TabularError::Invalid(format!(
                "transition table has {} entries, want {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if features.len() != n_states * n_actions * feature_dim {
            return Err(TabularError::Invalid(format!(
                "feature table has {} entries, want {}",
                features.len(),
                n_states * n_actions * feature_dim
            )));
        }
        if rewards.len() != n_states * n_actions {
            return Err(TabularError::Invalid(format!(
                "reward table has {} entries, want {}",
                rewards.len(),
                n_states * n_actions
            )));
        }
        if transition.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(TabularError::Invalid(
                "transition probabilities must be finite and non-negative".into(),
            ));
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let base = (s * n_actions + a) * n_states;
                let sum: f64 = transition[base..base + n_states].iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(TabularError::Invalid(format!(
                        "transition row (s={s}, a={a}) sums to {sum}, want 1"
                    )));
                }
            }
        }
        if features.iter().chain(rewards.iter()).any(|v| !v.is_finite()) {
            return Err(TabularError::Invalid(
                "features and rewards must be finite".into(),
            ));
        }
        Ok(FiniteMdp {
            n_states,
            n_actions,
            feature_dim,
            gamma,
            transition,
            features,
            rewards,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `P(s' | s, a)`.
    pub fn p(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + s_next]
    }

    /// Transition row for `(s, a)`.
    pub fn p_row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.transition[base..base + self.n_states]
    }

    /// Feature vector `phi(s, a)`.
    pub fn phi(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.feature_dim;
        &self.features[base..base + self.feature_dim]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    /// Full transition table, `[s][a][s']` row-major.
    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    /// Full feature table, `[s][a][k]` row-major.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// True iff every transition row is a one-hot vector (the dynamics are
    /// a deterministic function of `(s, a)`).
    pub fn is_deterministic(&self) -> bool {
        (0..self.n_states).all(|s| {
            (0..self.n_actions).all(|a| {
                self.p_row(s, a)
                    .iter()
                    .all(|&p| p == 0.0 || p == 1.0)
            })
        })
    }

    /// State chain `M[s][s'] = sum_a pi(a|s) P(s'|s,a)` induced by a policy.
    pub fn induced_chain(&self, pi: &TabularPolicy) -> Result<Vec<f64>, TabularError> {
        pi.check_shape(self)?;
        let n = self.n_states;
        let mut m = vec![0.0; n * n];
        for s in 0..n {
            for a in 0..self.n_actions {
                let w = pi.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                let row = self.p_row(s, a);
                for s2 in 0..n {
                    m[s * n + s2] += w * row[s2];
                }
            }
        }
        Ok(m)
    }

    /// Relabel states by a permutation: state `s` becomes `perm[s]`.
    /// Used by equivariance tests.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, TabularError> {
        check_permutation(perm, self.n_states)?;
        let n = self.n_states;
        let mut transition = vec![0.0; self.transition.len()];
        let mut features = vec![0.0; self.features.len()];
        let mut rewards = vec![0.0; self.rewards.len()];
        for s in 0..n {
            for a in 0..self.n_actions {
                let (ps, pa) = (perm[s], a);
                rewards[ps * self.n_actions + pa] = self.reward(s, a);
                features[(ps * self.n_actions + pa) * self.feature_dim
                    ..(ps * self.n_actions + pa + 1) * self.feature_dim]
                    .copy_from_slice(self.phi(s, a));
                for s2 in 0..n {
                    transition[(ps * self.n_actions + pa) * n + perm[s2]] = self.p(s, a, s2);
                }
            }
        }
        FiniteMdp::new(
            n,
            self.n_actions,
            self.feature_dim,
            self.gamma,
            transition,
            features,
            rewards,
        )
    }
}

/// A stochastic tabular policy `pi(a | s)`.
#[derive(Debug, Clone)]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self, TabularError> {
        if probs.len() != n_states * n_actions {
            return Err(TabularError::Invalid(format!(
                "policy table has {} entries, want {}",
                probs.len(),
                n_states * n_actions
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(TabularError::Invalid(
                "policy probabilities must be finite and non-negative".into(),
            ));
        }
        for s in 0..n_states {
            let sum: f64 = probs[s * n_actions..(s + 1) * n_actions].iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(TabularError::Invalid(format!(
                    "policy row s={s} sums to {sum}, want 1"
                )));
            }
        }
        Ok(TabularPolicy {
            n_states,
            n_actions,
            probs,
        })
    }

    /// Deterministic policy from a per-state action choice.
    pub fn deterministic(n_states: usize, n_actions: usize, actions: &[usize]) -> Result<Self, TabularError> {
        if actions.len() != n_states {
            return Err(TabularError::Invalid(format!(
                "need one action per state, got {}",
                actions.len()
            )));
        }
        let mut probs = vec![0.0; n_states * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(TabularError::Invalid(format!(
                    "action {a} out of range at state {s}"
                )));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Ok(TabularPolicy {
            n_states,
            n_actions,
            probs,
        })
    }

    /// Uniform policy over all actions.
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        TabularPolicy {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// True iff every row is one-hot.
    pub fn is_deterministic(&self) -> bool {
        self.probs.iter().all(|&p| p == 0.0 || p == 1.0)
    }

    pub(crate) fn check_shape(&self, mdp: &FiniteMdp) -> Result<(), TabularError> {
        if self.n_states != mdp.n_states() || self.n_actions != mdp.n_actions() {
            return Err(TabularError::Dimension(format!(
                "policy is {}x{}, MDP is {}x{}",
                self.n_states,
                self.n_actions,
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        Ok(())
    }

    /// Relabel states by a permutation (actions keep their indices).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, TabularError> {
        check_permutation(perm, self.n_states)?;
        let mut probs = vec![0.0; self.probs.len()];
        for s in 0..self.n_states {
            probs[perm[s] * self.n_actions..(perm[s] + 1) * self.n_actions]
                .copy_from_slice(&self.probs[s * self.n_actions..(s + 1) * self.n_actions]);
        }
        Ok(TabularPolicy {
            n_states: self.n_states,
            n_actions: self.n_actions,
            probs,
        })
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<(), TabularError> {
    if perm.len() != n {
        return Err(TabularError::Dimension(format!(
            "permutation length {} != {n}",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(TabularError::Invalid("not a permutation".into()));
        }
        seen[p] = true;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state_mdp() -> FiniteMdp {
        // Two states, one action, deterministic swap.
        FiniteMdp::new(
            2,
            1,
            1,
            0.9,
            vec![0.0, 1.0, 1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.5, -0.5],
        )
        .unwrap()
    }

    #[test]
    fn validates_row_stochasticity() {
        let bad = FiniteMdp::new(2, 1, 1, 0.9, vec![0.3, 0.6, 1.0, 0.0], vec![0.0; 2], vec![0.0; 2]);
        assert!(bad.is_err());
    }

    #[test]
    fn validates_gamma_range() {
        let t = vec![1.0, 0.0, 0.0, 1.0];
        assert!(FiniteMdp::new(2, 1, 1, 1.0, t.clone(), vec![0.0; 2], vec![0.0; 2]).is_err());
        assert!(FiniteMdp::new(2, 1, 1, -0.1, t, vec![0.0; 2], vec![0.0; 2]).is_err());
    }

    #[test]
    fn detects_determinism() {
        assert!(two_state_mdp().is_deterministic());
        let soft = FiniteMdp::new(
            2,
            1,
            1,
            0.9,
            vec![0.5, 0.5, 1.0, 0.0],
            vec![0.0; 2],
            vec![0.0; 2],
        )
        .unwrap();
        assert!(!soft.is_deterministic());
    }

    #[test]
    fn induced_chain_mixes_actions() {
        // Two actions: one stays, one swaps; uniform policy over them.
        let mdp = FiniteMdp::new(
            2,
            2,
            1,
            0.9,
            vec![
                1.0, 0.0, // s0 a0 stay
                0.0, 1.0, // s0 a1 swap
                0.0, 1.0, // s1 a0 stay
                1.0, 0.0, // s1 a1 swap
            ],
            vec![0.0; 4],
            vec![0.0; 4],
        )
        .unwrap();
        let pi = TabularPolicy::uniform(2, 2);
        let m = mdp.induced_chain(&pi).unwrap();
        assert_eq!(m, vec![0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn permutation_round_trips() {
        let mdp = two_state_mdp();
        let perm = vec![1, 0];
        let back = mdp.permuted(&perm).unwrap().permuted(&perm).unwrap();
        for s in 0..2 {
            assert_eq!(back.p_row(s, 0), mdp.p_row(s, 0));
            assert_eq!(back.phi(s, 0), mdp.phi(s, 0));
            assert_eq!(back.reward(s, 0), mdp.reward(s, 0));
        }
    }
}
