//! Exact finite-MDP machinery for certifying the successor-feature bounds.
//!
//! Everything here is solved directly (dense linear algebra or damped power
//! iteration to solver precision), with no learning involved. The agent's
//! learned quantities are checked against these oracles, and the theoretical
//! distance bounds are certified instance-by-instance:
//!
//! * stationary distributions of the policy-induced chain,
//! * action-conditioned successor features `psi = Phi + gamma * P Pi psi`,
//! * the core bound `||E_rho[phi] - z|| <= E_rho ||(1-gamma) psi(s) - z||`,
//! * its action-conditioned variant with a one-step Bellman-gap term
//!   `epsilon` that vanishes identically for deterministic dynamics and
//!   policies,
//! * the dominance of the successor-feature distance over the discounted
//!   per-step distance value (the quantity the no-successor-features
//!   ablation trains on).

mod certify;
mod mdp;
mod random;
mod solve;

pub use certify::{
    certify_avg_feature_bound, certify_avg_feature_bound_actions, distance_value_upper_bound,
    sf_bellman_gap, BoundCertificate, DominanceReport, CERT_TOL,
};
pub use mdp::{FiniteMdp, TabularPolicy};
pub use random::{
    random_deterministic_instance, random_mdp, random_policy, random_skill, RandomMdpConfig,
};
pub use solve::{
    discounted_distance_value, exact_successor_features, expected_features,
    expected_features_given, state_successor_features, stationary_distribution, STATIONARY_TOL,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TabularError {
    #[error("invalid MDP: {0}")]
    Invalid(String),
    #[error("no unique stationary distribution detected (power iteration did not converge)")]
    NoStationaryDistribution,
    #[error("linear solve residual {residual:e} exceeds tolerance {tolerance:e}")]
    SolveResidual { residual: f64, tolerance: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}
