//! The learner's loss functions with hand-derived gradients.
//!
//! Every loss takes a `noise_seed`: all stochastic draws inside (the
//! reparameterization noise ε and fresh next-actions a′) come from a stream
//! derived from that seed, in a fixed order. Perturbing network parameters
//! therefore never changes the draws, which makes each loss a deterministic,
//! finite-difference-checkable function of its parameters — the property
//! the gradient acceptance suite relies on.
//!
//! Gradient flow is deliberately narrow: each loss writes gradients only
//! for the network it trains. Where a loss reads other networks (targets,
//! the actor's fresh samples, λ as the actor's weight) those reads are
//! stop-gradient by construction — no gradient buffer for them exists.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use super::config::Mode;
use super::networks::{sigmoid, softplus, QdacNetworks};
use super::replay::Batch;
use crate::approx::{Mlp, Scratch};
use crate::seeding;

/// Log-standard-deviation clamp for the actor head. Outside the clamp the
/// gradient with respect to the raw output is zero.
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Log-density of `a = tanh(mu + exp(log_std) * eps)` under the squashed
/// Gaussian, written in terms of the pre-squash value `u = mu + std * eps`:
///
/// ```text
/// log pi = sum_j [ -1/2 ln(2 pi) - log_std_j - eps_j^2 / 2 ]
///         - sum_j log(1 - tanh(u_j)^2)
/// ```
///
/// with the change-of-variables term in the stable form
/// `log(1 - tanh(u)^2) = 2 (ln 2 - u - softplus(-2u))`.
pub fn squashed_gaussian_logp(log_std: &[f64], eps: &[f64], u: &[f64]) -> f64 {
    let mut logp = 0.0;
    for j in 0..u.len() {
        logp += -HALF_LN_2PI - log_std[j] - 0.5 * eps[j] * eps[j];
        logp -= 2.0 * (std::f64::consts::LN_2 - u[j] - softplus(-2.0 * u[j]));
    }
    logp
}

/// Reusable forward/backward buffers for one agent's update step. Holding
/// them across updates keeps the hot loop allocation-free.
pub struct Workspace {
    obs_dim: usize,
    action_dim: usize,
    feature_dim: usize,
    actor_s: Scratch,
    q1_s: Scratch,
    q2_s: Scratch,
    q1t_s: Scratch,
    q2t_s: Scratch,
    psi_s: Scratch,
    psit_s: Scratch,
    xi_s: Scratch,
    xit_s: Scratch,
    lag_s: Scratch,
    in_s: Vec<f64>,
    in_sa: Vec<f64>,
    mu: Vec<f64>,
    log_std: Vec<f64>,
    std: Vec<f64>,
    eps: Vec<f64>,
    u: Vec<f64>,
    a: Vec<f64>,
    clamped: Vec<bool>,
    target_vec: Vec<f64>,
    upstream_head: Vec<f64>,
    /// Discarded parameter gradients for backward passes that only need the
    /// input gradient (critics inside the actor loss).
    sink_grad: Vec<f64>,
    in_grad: Vec<f64>,
    actor_upstream: Vec<f64>,
    ga: Vec<f64>,
}

impl Workspace {
    pub fn new(nets: &QdacNetworks) -> Self {
        let (obs_dim, action_dim, feature_dim) = (nets.obs_dim, nets.action_dim, nets.feature_dim);
        let skill_dim = feature_dim;
        let sa_in = obs_dim + action_dim + skill_dim;
        let sink = nets
            .q1
            .spec()
            .param_count()
            .max(nets.psi.spec().param_count())
            .max(nets.xi.spec().param_count());
        Workspace {
            obs_dim,
            action_dim,
            feature_dim,
            actor_s: nets.actor.scratch(),
            q1_s: nets.q1.scratch(),
            q2_s: nets.q2.scratch(),
            q1t_s: nets.q1_target.scratch(),
            q2t_s: nets.q2_target.scratch(),
            psi_s: nets.psi.scratch(),
            psit_s: nets.psi_target.scratch(),
            xi_s: nets.xi.scratch(),
            xit_s: nets.xi_target.scratch(),
            lag_s: nets.lagrange.scratch(),
            in_s: Vec::with_capacity(obs_dim + skill_dim),
            in_sa: Vec::with_capacity(sa_in),
            mu: vec![0.0; action_dim],
            log_std: vec![0.0; action_dim],
            std: vec![0.0; action_dim],
            eps: vec![0.0; action_dim],
            u: vec![0.0; action_dim],
            a: vec![0.0; action_dim],
            clamped: vec![false; action_dim],
            target_vec: vec![0.0; feature_dim],
            upstream_head: vec![0.0; feature_dim],
            sink_grad: vec![0.0; sink],
            in_grad: vec![0.0; sa_in],
            actor_upstream: vec![0.0; 2 * action_dim],
            ga: vec![0.0; action_dim],
        }
    }

    /// Reparameterized sample from the actor at `(obs, skill)`: fills
    /// `mu/log_std/std/eps/u/a/clamped` and returns `log pi(a | s, z)`.
    /// The forward pass stays in `actor_s` for a subsequent backward. The
    /// sampled action itself is read through [`Workspace::last_action`];
    /// the collection loop uses this pair for stochastic exploration.
    pub fn sample(&mut self, actor: &Mlp, obs: &[f64], skill: &[f64], rng: &mut ChaCha12Rng) -> f64 {
        self.in_s.clear();
        self.in_s.extend_from_slice(obs);
        self.in_s.extend_from_slice(skill);
        actor.forward_scratch(&self.in_s, &mut self.actor_s);
        let out = self.actor_s.output();
        for j in 0..self.action_dim {
            let raw = out[self.action_dim + j];
            self.mu[j] = out[j];
            self.clamped[j] = !(LOG_STD_MIN..=LOG_STD_MAX).contains(&raw);
            self.log_std[j] = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
            self.std[j] = self.log_std[j].exp();
            self.eps[j] = rng.sample(StandardNormal);
            self.u[j] = self.mu[j] + self.std[j] * self.eps[j];
            self.a[j] = self.u[j].tanh();
        }
        squashed_gaussian_logp(&self.log_std, &self.eps, &self.u)
    }

    /// The action drawn by the most recent [`Workspace::sample`] call.
    pub fn last_action(&self) -> &[f64] {
        &self.a
    }

    fn set_in_sa(&mut self, obs: &[f64], action: &[f64], skill: &[f64]) {
        self.in_sa.clear();
        self.in_sa.extend_from_slice(obs);
        self.in_sa.extend_from_slice(action);
        self.in_sa.extend_from_slice(skill);
    }

    /// Like [`Workspace::set_in_sa`] with the freshly sampled action.
    fn set_in_sa_sampled(&mut self, obs: &[f64], skill: &[f64]) {
        self.in_sa.clear();
        self.in_sa.extend_from_slice(obs);
        self.in_sa.extend_from_slice(&self.a);
        self.in_sa.extend_from_slice(skill);
    }
}

fn prepare_grad(grad: &mut Vec<f64>, n: usize) {
    grad.clear();
    grad.resize(n, 0.0);
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Value-critic regression summary.
#[derive(Debug, Clone, Copy)]
pub struct QLossInfo {
    /// `q1_loss + q2_loss`.
    pub loss: f64,
    pub q1_loss: f64,
    pub q2_loss: f64,
    pub mean_q1: f64,
    pub mean_target: f64,
}

/// Clipped double-Q regression: both critics regress onto
///
/// ```text
/// y = r + gamma (1 - done) [ min(q1', q2')(s', a', z) - beta log pi(a'|s', z) ]
/// ```
///
/// with `a'` freshly sampled from the actor and primes denoting target
/// networks. Gradients land in `grad_q1`/`grad_q2` only.
pub fn q_loss(
    nets: &QdacNetworks,
    batch: &Batch,
    gamma: f64,
    noise_seed: u64,
    ws: &mut Workspace,
    grad_q1: &mut Vec<f64>,
    grad_q2: &mut Vec<f64>,
) -> QLossInfo {
    assert!(batch.len > 0, "empty batch");
    let mut rng = seeding::rng(noise_seed, "loss.q");
    let beta = nets.temperature();
    let inv_b = 1.0 / batch.len as f64;
    prepare_grad(grad_q1, nets.q1.spec().param_count());
    prepare_grad(grad_q2, nets.q2.spec().param_count());

    let mut info = QLossInfo {
        loss: 0.0,
        q1_loss: 0.0,
        q2_loss: 0.0,
        mean_q1: 0.0,
        mean_target: 0.0,
    };
    for i in 0..batch.len {
        let logp_next = ws.sample(&nets.actor, batch.next_obs(i), batch.skill(i), &mut rng);
        ws.set_in_sa_sampled(batch.next_obs(i), batch.skill(i));
        nets.q1_target.forward_scratch(&ws.in_sa, &mut ws.q1t_s);
        nets.q2_target.forward_scratch(&ws.in_sa, &mut ws.q2t_s);
        let t_min = ws.q1t_s.output()[0].min(ws.q2t_s.output()[0]);
        let y = batch.reward[i]
            + gamma * (1.0 - batch.done[i]) * (t_min - beta * logp_next);

        ws.set_in_sa(batch.obs(i), batch.action(i), batch.skill(i));
        nets.q1.forward_scratch(&ws.in_sa, &mut ws.q1_s);
        let v1 = ws.q1_s.output()[0];
        nets.q1
            .backward_scratch(&mut ws.q1_s, &[2.0 * (v1 - y) * inv_b], grad_q1, None);
        nets.q2.forward_scratch(&ws.in_sa, &mut ws.q2_s);
        let v2 = ws.q2_s.output()[0];
        nets.q2
            .backward_scratch(&mut ws.q2_s, &[2.0 * (v2 - y) * inv_b], grad_q2, None);

        info.q1_loss += (v1 - y) * (v1 - y) * inv_b;
        info.q2_loss += (v2 - y) * (v2 - y) * inv_b;
        info.mean_q1 += v1 * inv_b;
        info.mean_target += y * inv_b;
    }
    info.loss = info.q1_loss + info.q2_loss;
    info
}

/// Features-critic regression summary.
#[derive(Debug, Clone, Copy)]
pub struct SfLossInfo {
    pub loss: f64,
    /// Mean L2 norm of the online ψ predictions — the divergence sentinel
    /// compares this against `‖φ‖max / (1 − γ)` plus slack.
    pub mean_psi_norm: f64,
}

/// Successor-features regression onto `φ + γ (1 - done) ψ'(s', a', z)` with
/// `a'` freshly sampled; squared L2 over the feature components, mean over
/// the batch, no entropy term. Gradients land in `grad_psi` only.
pub fn sf_loss(
    nets: &QdacNetworks,
    batch: &Batch,
    gamma: f64,
    noise_seed: u64,
    ws: &mut Workspace,
    grad_psi: &mut Vec<f64>,
) -> SfLossInfo {
    assert!(batch.len > 0, "empty batch");
    let mut rng = seeding::rng(noise_seed, "loss.sf");
    let inv_b = 1.0 / batch.len as f64;
    let d = ws.feature_dim;
    prepare_grad(grad_psi, nets.psi.spec().param_count());

    let mut info = SfLossInfo {
        loss: 0.0,
        mean_psi_norm: 0.0,
    };
    for i in 0..batch.len {
        ws.sample(&nets.actor, batch.next_obs(i), batch.skill(i), &mut rng);
        ws.set_in_sa_sampled(batch.next_obs(i), batch.skill(i));
        nets.psi_target.forward_scratch(&ws.in_sa, &mut ws.psit_s);
        {
            let phi = batch.features(i);
            let bootstrap = gamma * (1.0 - batch.done[i]);
            let psi_next = ws.psit_s.output();
            for k in 0..d {
                ws.target_vec[k] = phi[k] + bootstrap * psi_next[k];
            }
        }

        ws.set_in_sa(batch.obs(i), batch.action(i), batch.skill(i));
        nets.psi.forward_scratch(&ws.in_sa, &mut ws.psi_s);
        let mut norm_sq = 0.0;
        {
            let psi = ws.psi_s.output();
            for k in 0..d {
                let r = psi[k] - ws.target_vec[k];
                ws.upstream_head[k] = 2.0 * r * inv_b;
                info.loss += r * r * inv_b;
                norm_sq += psi[k] * psi[k];
            }
        }
        nets.psi
            .backward_scratch(&mut ws.psi_s, &ws.upstream_head[..d], grad_psi, None);
        info.mean_psi_norm += norm_sq.sqrt() * inv_b;
    }
    info
}

/// Distance-critic regression summary.
#[derive(Debug, Clone, Copy)]
pub struct XiLossInfo {
    pub loss: f64,
    pub mean_xi: f64,
}

/// Discounted per-step distance critic (the No-SF surrogate): regression
/// onto `‖φ − z‖ + γ (1 - done) ξ'(s', a', z)`. Gradients land in `grad_xi`.
pub fn xi_loss(
    nets: &QdacNetworks,
    batch: &Batch,
    gamma: f64,
    noise_seed: u64,
    ws: &mut Workspace,
    grad_xi: &mut Vec<f64>,
) -> XiLossInfo {
    assert!(batch.len > 0, "empty batch");
    let mut rng = seeding::rng(noise_seed, "loss.xi");
    let inv_b = 1.0 / batch.len as f64;
    prepare_grad(grad_xi, nets.xi.spec().param_count());

    let mut info = XiLossInfo {
        loss: 0.0,
        mean_xi: 0.0,
    };
    for i in 0..batch.len {
        ws.sample(&nets.actor, batch.next_obs(i), batch.skill(i), &mut rng);
        ws.set_in_sa_sampled(batch.next_obs(i), batch.skill(i));
        nets.xi_target.forward_scratch(&ws.in_sa, &mut ws.xit_s);
        let step_distance = l2(batch.features(i), batch.skill(i));
        let y = step_distance + gamma * (1.0 - batch.done[i]) * ws.xit_s.output()[0];

        ws.set_in_sa(batch.obs(i), batch.action(i), batch.skill(i));
        nets.xi.forward_scratch(&ws.in_sa, &mut ws.xi_s);
        let v = ws.xi_s.output()[0];
        nets.xi
            .backward_scratch(&mut ws.xi_s, &[2.0 * (v - y) * inv_b], grad_xi, None);
        info.loss += (v - y) * (v - y) * inv_b;
        info.mean_xi += v * inv_b;
    }
    info
}

/// Multiplier-classifier summary.
#[derive(Debug, Clone, Copy)]
pub struct LagrangeLossInfo {
    pub loss: f64,
    pub mean_lambda: f64,
    /// Fraction of the batch whose constraint test failed (label y = 1).
    pub violation_rate: f64,
}

/// Cross-entropy for the multiplier λ(s, z) against the constraint label
///
/// ```text
/// y = 0  iff  the skill-execution estimate at (s, z) is within delta
/// ```
///
/// where the estimate is `‖(1−γ)ψ(s, a, z) − z‖` (or `(1−γ)ξ(s, a, z)` when
/// `use_distance_critic`), evaluated at one fresh action `a ∼ π(·|s, z)` —
/// the single-sample reading of the state-conditioned critic. The estimate
/// is stop-gradient; only the λ network learns. The loss is computed on the
/// λ logit, so saturation never produces infinities.
#[allow(clippy::too_many_arguments)]
pub fn lagrange_loss(
    nets: &QdacNetworks,
    batch: &Batch,
    gamma: f64,
    delta: f64,
    use_distance_critic: bool,
    noise_seed: u64,
    ws: &mut Workspace,
    grad_lagrange: &mut Vec<f64>,
) -> LagrangeLossInfo {
    assert!(batch.len > 0, "empty batch");
    let mut rng = seeding::rng(noise_seed, "loss.lagrange");
    let inv_b = 1.0 / batch.len as f64;
    let one_minus_gamma = 1.0 - gamma;
    prepare_grad(grad_lagrange, nets.lagrange.spec().param_count());

    let mut info = LagrangeLossInfo {
        loss: 0.0,
        mean_lambda: 0.0,
        violation_rate: 0.0,
    };
    for i in 0..batch.len {
        ws.sample(&nets.actor, batch.obs(i), batch.skill(i), &mut rng);
        ws.set_in_sa_sampled(batch.obs(i), batch.skill(i));
        let estimate = if use_distance_critic {
            nets.xi.forward_scratch(&ws.in_sa, &mut ws.xi_s);
            one_minus_gamma * ws.xi_s.output()[0]
        } else {
            nets.psi.forward_scratch(&ws.in_sa, &mut ws.psi_s);
            let psi = ws.psi_s.output();
            let z = batch.skill(i);
            let mut sq = 0.0;
            for k in 0..ws.feature_dim {
                let v = one_minus_gamma * psi[k] - z[k];
                sq += v * v;
            }
            sq.sqrt()
        };
        let y = if estimate <= delta { 0.0 } else { 1.0 };
        info.violation_rate += y * inv_b;

        ws.in_s.clear();
        ws.in_s.extend_from_slice(batch.obs(i));
        ws.in_s.extend_from_slice(batch.skill(i));
        nets.lagrange.forward_scratch(&ws.in_s, &mut ws.lag_s);
        let logit = ws.lag_s.output()[0];
        info.loss += ((1.0 - y) * softplus(logit) + y * softplus(-logit)) * inv_b;
        info.mean_lambda += sigmoid(logit) * inv_b;
        nets.lagrange.backward_scratch(
            &mut ws.lag_s,
            &[(sigmoid(logit) - y) * inv_b],
            grad_lagrange,
            None,
        );
    }
    info
}

/// Actor objective summary.
#[derive(Debug, Clone, Copy)]
pub struct ActorLossInfo {
    pub loss: f64,
    pub mean_q: f64,
    pub mean_penalty: f64,
    pub mean_log_prob: f64,
    pub mean_lambda: f64,
}

/// Policy improvement step. With `a = tanh(mu + std * eps)` reparameterized
/// and λ̄ the per-sample multiplier (learned, read with stop-gradient, or
/// pinned by the mode), the loss is the negation of
///
/// ```text
/// (1 - λ̄) min(q1, q2)(s, a, z)  -  λ̄ · penalty(s, a, z)  -  beta log pi(a|s, z)
/// ```
///
/// meaned over the batch, where the penalty is `‖(1−γ)ψ(s,a,z) − z‖` in
/// successor-feature modes, `ξ(s,a,z)` in distance-critic modes, and absent
/// otherwise. Gradients land in `grad_actor` only: the critics contribute
/// through their input gradients at the action.
pub fn actor_loss(
    nets: &QdacNetworks,
    batch: &Batch,
    mode: Mode,
    gamma: f64,
    noise_seed: u64,
    ws: &mut Workspace,
    grad_actor: &mut Vec<f64>,
) -> ActorLossInfo {
    assert!(batch.len > 0, "empty batch");
    let mut rng = seeding::rng(noise_seed, "loss.actor");
    let beta = nets.temperature();
    let inv_b = 1.0 / batch.len as f64;
    let one_minus_gamma = 1.0 - gamma;
    let a_dim = ws.action_dim;
    let nq = nets.q1.spec().param_count();
    let npsi = nets.psi.spec().param_count();
    let nxi = nets.xi.spec().param_count();
    ws.sink_grad.fill(0.0);
    prepare_grad(grad_actor, nets.actor.spec().param_count());

    let mut info = ActorLossInfo {
        loss: 0.0,
        mean_q: 0.0,
        mean_penalty: 0.0,
        mean_log_prob: 0.0,
        mean_lambda: 0.0,
    };
    for i in 0..batch.len {
        // Multiplier weight, stop-gradient.
        let lambda = match mode.pinned_lambda() {
            Some(v) => v,
            None => {
                ws.in_s.clear();
                ws.in_s.extend_from_slice(batch.obs(i));
                ws.in_s.extend_from_slice(batch.skill(i));
                nets.lagrange.forward_scratch(&ws.in_s, &mut ws.lag_s);
                sigmoid(ws.lag_s.output()[0])
            }
        };

        // Reparameterized action; the actor forward stays in ws.actor_s.
        let logp = ws.sample(&nets.actor, batch.obs(i), batch.skill(i), &mut rng);

        // Clipped double-Q at (s, a, z); input gradient from the smaller
        // critic (the subgradient of the min).
        ws.set_in_sa_sampled(batch.obs(i), batch.skill(i));
        nets.q1.forward_scratch(&ws.in_sa, &mut ws.q1_s);
        nets.q2.forward_scratch(&ws.in_sa, &mut ws.q2_s);
        let (v1, v2) = (ws.q1_s.output()[0], ws.q2_s.output()[0]);
        let q_min = v1.min(v2);
        if v1 <= v2 {
            nets.q1.backward_scratch(
                &mut ws.q1_s,
                &[1.0],
                &mut ws.sink_grad[..nq],
                Some(&mut ws.in_grad[..]),
            );
        } else {
            nets.q2.backward_scratch(
                &mut ws.q2_s,
                &[1.0],
                &mut ws.sink_grad[..nq],
                Some(&mut ws.in_grad[..]),
            );
        }
        for j in 0..a_dim {
            ws.ga[j] = -(1.0 - lambda) * inv_b * ws.in_grad[ws.obs_dim + j];
        }

        // Penalty term and its action gradient.
        let penalty = if mode.uses_successor_features() {
            nets.psi.forward_scratch(&ws.in_sa, &mut ws.psi_s);
            let mut sq = 0.0;
            {
                let psi = ws.psi_s.output();
                let z = batch.skill(i);
                for k in 0..ws.feature_dim {
                    let v = one_minus_gamma * psi[k] - z[k];
                    ws.target_vec[k] = v;
                    sq += v * v;
                }
            }
            let dist = sq.sqrt();
            if dist > 1e-12 && lambda != 0.0 {
                for k in 0..ws.feature_dim {
                    ws.upstream_head[k] = one_minus_gamma * ws.target_vec[k] / dist;
                }
                nets.psi.backward_scratch(
                    &mut ws.psi_s,
                    &ws.upstream_head[..ws.feature_dim],
                    &mut ws.sink_grad[..npsi],
                    Some(&mut ws.in_grad[..]),
                );
                for j in 0..a_dim {
                    ws.ga[j] += lambda * inv_b * ws.in_grad[ws.obs_dim + j];
                }
            }
            dist
        } else if mode.uses_distance_critic() {
            nets.xi.forward_scratch(&ws.in_sa, &mut ws.xi_s);
            let v = ws.xi_s.output()[0];
            if lambda != 0.0 {
                nets.xi.backward_scratch(
                    &mut ws.xi_s,
                    &[1.0],
                    &mut ws.sink_grad[..nxi],
                    Some(&mut ws.in_grad[..]),
                );
                for j in 0..a_dim {
                    ws.ga[j] += lambda * inv_b * ws.in_grad[ws.obs_dim + j];
                }
            }
            v
        } else {
            0.0
        };

        // Assemble the actor-head upstream: means then log-stds.
        for j in 0..a_dim {
            let da_du = 1.0 - ws.a[j] * ws.a[j];
            let dlogp_du = 2.0 * ws.a[j];
            let du = ws.ga[j] * da_du + beta * inv_b * dlogp_du;
            ws.actor_upstream[j] = du;
            ws.actor_upstream[a_dim + j] = if ws.clamped[j] {
                0.0
            } else {
                du * ws.std[j] * ws.eps[j] - beta * inv_b
            };
        }
        nets.actor
            .backward_scratch(&mut ws.actor_s, &ws.actor_upstream, grad_actor, None);

        info.loss += (-(1.0 - lambda) * q_min + lambda * penalty + beta * logp) * inv_b;
        info.mean_q += q_min * inv_b;
        info.mean_penalty += penalty * inv_b;
        info.mean_log_prob += logp * inv_b;
        info.mean_lambda += lambda * inv_b;
    }
    info
}

/// Temperature-tuning summary.
#[derive(Debug, Clone, Copy)]
pub struct TemperatureLossInfo {
    pub loss: f64,
    /// Gradient with respect to log β (equal to the loss itself, since the
    /// loss is linear in β = e^{log β}).
    pub grad: f64,
    pub mean_entropy: f64,
}

/// SAC temperature objective in log space:
///
/// ```text
/// L(log beta) = -beta * mean( log pi(a|s, z) + target_entropy ),
/// ```
///
/// with `a` freshly sampled and `log pi` stop-gradient. When the policy's
/// entropy sits below the target the gradient is negative, so the Adam step
/// raises β and strengthens the entropy bonus (and vice versa).
pub fn temperature_loss(
    nets: &QdacNetworks,
    batch: &Batch,
    target_entropy: f64,
    noise_seed: u64,
    ws: &mut Workspace,
) -> TemperatureLossInfo {
    assert!(batch.len > 0, "empty batch");
    let mut rng = seeding::rng(noise_seed, "loss.temperature");
    let inv_b = 1.0 / batch.len as f64;
    let mut mean_term = 0.0;
    let mut mean_logp = 0.0;
    for i in 0..batch.len {
        let logp = ws.sample(&nets.actor, batch.obs(i), batch.skill(i), &mut rng);
        mean_term += (logp + target_entropy) * inv_b;
        mean_logp += logp * inv_b;
    }
    let beta = nets.temperature();
    let loss = -beta * mean_term;
    TemperatureLossInfo {
        loss,
        grad: loss,
        mean_entropy: -mean_logp,
    }
}
