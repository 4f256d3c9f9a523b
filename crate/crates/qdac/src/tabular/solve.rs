//! Exact solvers: stationary distributions, successor features, and
//! discounted distance values.

use super::{FiniteMdp, TabularError, TabularPolicy};
use nalgebra::{DMatrix, DVector};

/// Contract tolerance on the stationary residual `||rho M - rho||_inf`.
pub const STATIONARY_TOL: f64 = 1e-10;
/// Internal stopping tolerance (tighter than the contract).
const STATIONARY_STOP: f64 = 1e-13;
const STATIONARY_MAX_ITERS: usize = 1_000_000;

/// Contract tolerance on linear-solve residuals.
pub const SOLVE_TOL: f64 = 1e-10;

/// Stationary distribution of the policy-induced chain via damped power
/// iteration `rho <- 0.5 rho M + 0.5 rho` from the uniform start.
///
/// The damping removes periodic oscillation (a plain power step on a
/// two-cycle never settles), so the iteration converges for every chain
/// with a unique stationary distribution. Returns an error if the residual
/// has not dropped below tolerance within 10^6 iterations; uniqueness is
/// otherwise the caller's responsibility.
pub fn stationary_distribution(
    mdp: &FiniteMdp,
    pi: &TabularPolicy,
) -> Result<Vec<f64>, TabularError> {
    let m = mdp.induced_chain(pi)?;
    let n = mdp.n_states();
    let mut rho = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..STATIONARY_MAX_ITERS {
        // next = rho M
        next.fill(0.0);
        for s in 0..n {
            let w = rho[s];
            if w == 0.0 {
                continue;
            }
            let row = &m[s * n..(s + 1) * n];
            for s2 in 0..n {
                next[s2] += w * row[s2];
            }
        }
        let residual = rho
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        // Damped update.
        for s in 0..n {
            rho[s] = 0.5 * rho[s] + 0.5 * next[s];
        }
        if residual < STATIONARY_STOP {
            // Renormalize away accumulated rounding and confirm the contract.
            let total: f64 = rho.iter().sum();
            for r in rho.iter_mut() {
                *r /= total;
            }
            return Ok(rho);
        }
    }
    Err(TabularError::NoStationaryDistribution)
}

/// Exact action-conditioned successor features: the unique solution of
/// `psi(s,a) = phi(s,a) + gamma * sum_{s'} P(s'|s,a) sum_{a'} pi(a'|s') psi(s',a')`,
/// returned flat as `[s][a][k]`. Solved densely by LU with a verified
/// residual (`< 1e-10` in the infinity norm).
pub fn exact_successor_features(
    mdp: &FiniteMdp,
    pi: &TabularPolicy,
) -> Result<Vec<f64>, TabularError> {
    pi.check_shape(mdp)?;
    let (n, na, d) = (mdp.n_states(), mdp.n_actions(), mdp.feature_dim());
    let sa = n * na;
    // System matrix A = I - gamma * (P Pi) over state-action pairs.
    let mut a = DMatrix::<f64>::identity(sa, sa);
    for s in 0..n {
        for ac in 0..na {
            let row = s * na + ac;
            let p = mdp.p_row(s, ac);
            for s2 in 0..n {
                if p[s2] == 0.0 {
                    continue;
                }
                for a2 in 0..na {
                    let w = pi.prob(s2, a2);
                    if w != 0.0 {
                        a[(row, s2 * na + a2)] -= mdp.gamma() * p[s2] * w;
                    }
                }
            }
        }
    }
    let lu = a.clone().lu();
    let mut psi = vec![0.0; sa * d];
    for k in 0..d {
        let rhs = DVector::<f64>::from_fn(sa, |row, _| {
            let (s, ac) = (row / na, row % na);
            mdp.phi(s, ac)[k]
        });
        let x = lu
            .solve(&rhs)
            .ok_or_else(|| TabularError::Invalid("singular successor-feature system".into()))?;
        // Verify the residual before trusting the solution.
        let residual = (&a * &x - &rhs).amax();
        if residual > SOLVE_TOL {
            return Err(TabularError::SolveResidual {
                residual,
                tolerance: SOLVE_TOL,
            });
        }
        for row in 0..sa {
            psi[row * d + k] = x[row];
        }
    }
    Ok(psi)
}

/// State-conditioned successor features `psi(s) = sum_a pi(a|s) psi(s,a)`,
/// flat as `[s][k]`.
pub fn state_successor_features(
    mdp: &FiniteMdp,
    pi: &TabularPolicy,
    psi: &[f64],
) -> Vec<f64> {
    let (n, na, d) = (mdp.n_states(), mdp.n_actions(), mdp.feature_dim());
    debug_assert_eq!(psi.len(), n * na * d);
    let mut out = vec![0.0; n * d];
    for s in 0..n {
        for a in 0..na {
            let w = pi.prob(s, a);
            if w == 0.0 {
                continue;
            }
            for k in 0..d {
                out[s * d + k] += w * psi[(s * na + a) * d + k];
            }
        }
    }
    out
}

/// Long-run average features `E_{rho x pi}[phi]`, solving for the stationary
/// distribution internally.
pub fn expected_features(mdp: &FiniteMdp, pi: &TabularPolicy) -> Result<Vec<f64>, TabularError> {
    let rho = stationary_distribution(mdp, pi)?;
    Ok(expected_features_given(mdp, pi, &rho))
}

/// Long-run average features under a provided state distribution.
pub fn expected_features_given(mdp: &FiniteMdp, pi: &TabularPolicy, rho: &[f64]) -> Vec<f64> {
    let d = mdp.feature_dim();
    let mut out = vec![0.0; d];
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let w = rho[s] * pi.prob(s, a);
            if w == 0.0 {
                continue;
            }
            for (o, f) in out.iter_mut().zip(mdp.phi(s, a)) {
                *o += w * f;
            }
        }
    }
    out
}

/// Exact discounted per-step distance value: the unique solution of
/// `D(s) = sum_a pi(a|s) [ ||phi(s,a) - z|| + gamma * sum_{s'} P(s'|s,a) D(s') ]`,
/// i.e. the value function of the auxiliary reward `||phi - z||_2`. This is
/// the quantity the distance-critic ablation regresses onto.
pub fn discounted_distance_value(
    mdp: &FiniteMdp,
    pi: &TabularPolicy,
    z: &[f64],
) -> Result<Vec<f64>, TabularError> {
    pi.check_shape(mdp)?;
    if z.len() != mdp.feature_dim() {
        return Err(TabularError::Dimension(format!(
            "skill has {} components, features have {}",
            z.len(),
            mdp.feature_dim()
        )));
    }
    let n = mdp.n_states();
    let chain = mdp.induced_chain(pi)?;
    let mut a = DMatrix::<f64>::identity(n, n);
    for s in 0..n {
        for s2 in 0..n {
            a[(s, s2)] -= mdp.gamma() * chain[s * n + s2];
        }
    }
    let rhs = DVector::<f64>::from_fn(n, |s, _| {
        (0..mdp.n_actions())
            .map(|ac| pi.prob(s, ac) * l2_distance(mdp.phi(s, ac), z))
            .sum()
    });
    let lu = a.clone().lu();
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| TabularError::Invalid("singular distance-value system".into()))?;
    let residual = (&a * &x - &rhs).amax();
    if residual > SOLVE_TOL {
        return Err(TabularError::SolveResidual {
            residual,
            tolerance: SOLVE_TOL,
        });
    }
    Ok(x.iter().copied().collect())
}

/// Euclidean distance between equal-length vectors.
pub(crate) fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn swap_chain() -> (FiniteMdp, TabularPolicy) {
        // Deterministic two-cycle with one action.
        let mdp = FiniteMdp::new(
            2,
            1,
            2,
            0.9,
            vec![0.0, 1.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0],
        )
        .unwrap();
        let pi = TabularPolicy::uniform(2, 1);
        (mdp, pi)
    }

    #[test]
    fn stationary_of_two_cycle_is_half_half() {
        let (mdp, pi) = swap_chain();
        let rho = stationary_distribution(&mdp, &pi).unwrap();
        assert_relative_eq!(rho[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(rho[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn stationary_of_absorbing_chain_is_one_hot() {
        // s0 -> s1 -> s1.
        let mdp = FiniteMdp::new(
            2,
            1,
            1,
            0.9,
            vec![0.0, 1.0, 0.0, 1.0],
            vec![0.0, 0.0],
            vec![0.0, 0.0],
        )
        .unwrap();
        let pi = TabularPolicy::uniform(2, 1);
        let rho = stationary_distribution(&mdp, &pi).unwrap();
        assert!(rho[0].abs() < 1e-10);
        assert_relative_eq!(rho[1], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn stationary_residual_meets_contract() {
        let mdp = super::super::random_mdp(
            &super::super::RandomMdpConfig {
                n_states: 6,
                n_actions: 3,
                feature_dim: 2,
                gamma: 0.95,
            },
            17,
        );
        let pi = super::super::random_policy(6, 3, 18);
        let rho = stationary_distribution(&mdp, &pi).unwrap();
        let m = mdp.induced_chain(&pi).unwrap();
        let mut residual: f64 = 0.0;
        for s2 in 0..6 {
            let mut v = 0.0;
            for s in 0..6 {
                v += rho[s] * m[s * 6 + s2];
            }
            residual = residual.max((v - rho[s2]).abs());
        }
        assert!(residual < STATIONARY_TOL, "residual {residual:e}");
        assert_relative_eq!(rho.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(rho.iter().all(|&r| r >= 0.0));
    }

    #[test]
    fn single_state_sf_is_geometric_series() {
        // One state, one action: psi = phi / (1 - gamma).
        let mdp = FiniteMdp::new(1, 1, 2, 0.9, vec![1.0], vec![0.3, -0.7], vec![0.0]).unwrap();
        let pi = TabularPolicy::uniform(1, 1);
        let psi = exact_successor_features(&mdp, &pi).unwrap();
        assert_relative_eq!(psi[0], 0.3 / 0.1, epsilon = 1e-10);
        assert_relative_eq!(psi[1], -0.7 / 0.1, epsilon = 1e-10);
    }

    #[test]
    fn gamma_zero_sf_equals_features() {
        let mdp = super::super::random_mdp(
            &super::super::RandomMdpConfig {
                n_states: 4,
                n_actions: 2,
                feature_dim: 3,
                gamma: 0.0,
            },
            3,
        );
        let pi = super::super::random_policy(4, 2, 4);
        let psi = exact_successor_features(&mdp, &pi).unwrap();
        for s in 0..4 {
            for a in 0..2 {
                for k in 0..3 {
                    assert_relative_eq!(
                        psi[(s * 2 + a) * 3 + k],
                        mdp.phi(s, a)[k],
                        epsilon = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn sf_satisfies_its_bellman_identity() {
        let mdp = super::super::random_mdp(
            &super::super::RandomMdpConfig {
                n_states: 5,
                n_actions: 3,
                feature_dim: 2,
                gamma: 0.92,
            },
            11,
        );
        let pi = super::super::random_policy(5, 3, 12);
        let psi = exact_successor_features(&mdp, &pi).unwrap();
        let (na, d) = (3, 2);
        for s in 0..5 {
            for a in 0..na {
                for k in 0..d {
                    let mut expect = mdp.phi(s, a)[k];
                    for s2 in 0..5 {
                        for a2 in 0..na {
                            expect += mdp.gamma()
                                * mdp.p(s, a, s2)
                                * pi.prob(s2, a2)
                                * psi[(s2 * na + a2) * d + k];
                        }
                    }
                    assert_relative_eq!(psi[(s * na + a) * d + k], expect, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn expected_features_of_symmetric_cycle_average_the_corners() {
        let (mdp, pi) = swap_chain();
        let ef = expected_features(&mdp, &pi).unwrap();
        assert_relative_eq!(ef[0], 0.5, epsilon = 1e-10);
        assert_relative_eq!(ef[1], 0.5, epsilon = 1e-10);
    }

    #[test]
    fn distance_value_single_state_closed_form() {
        // One state: D = ||phi - z|| / (1 - gamma).
        let mdp = FiniteMdp::new(1, 1, 2, 0.9, vec![1.0], vec![0.3, 0.4], vec![0.0]).unwrap();
        let pi = TabularPolicy::uniform(1, 1);
        let d = discounted_distance_value(&mdp, &pi, &[0.0, 0.0]).unwrap();
        assert_relative_eq!(d[0], 0.5 / 0.1, epsilon = 1e-10);
    }
}
