//! Adam optimizer state and Polyak target-network updates.

use super::ApproxError;

/// Adam with bias correction. One state per parameter vector; the moment
/// buffers live here so parameter vectors stay plain `Vec<f64>`.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    /// Completed steps (drives bias correction).
    t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Standard constants: `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(n_params: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One Adam update in place. Rejects non-finite gradients (the caller
    /// treats that as a numerics failure and aborts with diagnostics) and
    /// keeps the second-moment estimate non-negative by construction.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<(), ApproxError> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(ApproxError::DimensionMismatch {
                what: "adam step",
                expected: self.m.len(),
                got: if params.len() != self.m.len() {
                    params.len()
                } else {
                    grad.len()
                },
            });
        }
        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(ApproxError::NonFiniteGradient { index });
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Polyak averaging: `target <- tau * online + (1 - tau) * target`.
/// With frozen online parameters the gap decays geometrically as
/// `(1 - tau)^k` over `k` updates.
pub fn soft_update(target: &mut [f64], online: &[f64], tau: f64) {
    assert_eq!(
        target.len(),
        online.len(),
        "soft_update: mismatched parameter vectors"
    );
    for (t, &o) in target.iter_mut().zip(online) {
        *t = tau * o + (1.0 - tau) * *t;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn first_step_moves_by_roughly_lr() {
        // With bias correction, the very first step is
        // lr * g / (|g| + eps') ~= lr * sign(g).
        let mut adam = AdamState::new(1, 1e-3);
        let mut p = vec![0.5];
        adam.step(&mut p, &[0.2]).unwrap();
        assert_relative_eq!(0.5 - p[0], 1e-3, max_relative = 1e-6);

        let mut adam = AdamState::new(1, 1e-3);
        let mut p = vec![0.5];
        adam.step(&mut p, &[-7.0]).unwrap();
        assert_relative_eq!(p[0] - 0.5, 1e-3, max_relative = 1e-6);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut adam = AdamState::new(3, 0.1);
        let mut p = vec![1.0, -2.0, 3.0];
        adam.step(&mut p, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn descends_a_quadratic_and_matches_scalar_oracle() {
        // Minimize f(x) = x^2 from x0 = 1 with lr = 0.1; oracle is an
        // independent scalar transcription of the Adam recurrences.
        let lr = 0.1;
        let mut adam = AdamState::new(1, lr);
        let mut p = vec![1.0];
        let mut history = vec![p[0]];
        for _ in 0..3 {
            let g = 2.0 * p[0];
            adam.step(&mut p, &[g]).unwrap();
            history.push(p[0]);
        }

        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        let mut expected = vec![x];
        for t in 1..=3 {
            let g = 2.0 * x;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
            expected.push(x);
        }
        for (got, want) in history.iter().zip(&expected) {
            assert_relative_eq!(got, want, epsilon = 1e-15);
        }
        // Strictly decreasing toward the optimum on this convex problem.
        assert!(history.windows(2).all(|w| w[1] < w[0]));
        assert!(*history.last().unwrap() > 0.0);
    }

    #[test]
    fn rejects_non_finite_gradients() {
        let mut adam = AdamState::new(2, 1e-3);
        let mut p = vec![0.0, 0.0];
        let err = adam.step(&mut p, &[1.0, f64::NAN]).unwrap_err();
        assert!(matches!(
            err,
            crate::approx::ApproxError::NonFiniteGradient { index: 1 }
        ));
        // Parameters untouched on failure.
        assert_eq!(p, vec![0.0, 0.0]);
    }

    #[test]
    fn soft_update_tau_one_copies_online() {
        let mut t = vec![1.0, 2.0];
        soft_update(&mut t, &[5.0, -3.0], 1.0);
        assert_eq!(t, vec![5.0, -3.0]);
    }

    #[test]
    fn soft_update_blends_with_tau() {
        let mut t = vec![0.0];
        soft_update(&mut t, &[1.0], 0.005);
        assert_relative_eq!(t[0], 0.005, epsilon = 1e-15);
    }

    #[test]
    fn soft_update_gap_decays_geometrically() {
        let online = vec![2.0, -1.0, 0.5];
        let mut target = vec![0.0, 0.0, 0.0];
        let tau = 0.01;
        let k = 250;
        for _ in 0..k {
            soft_update(&mut target, &online, tau);
        }
        let decay = (1.0f64 - tau).powi(k);
        for (t, o) in target.iter().zip(&online) {
            // gap_k = (1 - tau)^k * gap_0, with gap_0 = o - 0.
            assert_relative_eq!(o - t, decay * o, max_relative = 1e-10);
        }
    }
}
