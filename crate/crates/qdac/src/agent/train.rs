//! The off-policy training loop.
//!
//! One environment step, one update (replay ratio 1). Each update runs, in
//! order: multiplier → both Q critics → the mode's feature critic (ψ or ξ)
//! → actor → temperature, followed by one Polyak step of each trained
//! critic's target. Modes never touch networks outside their ablation:
//! pinned-λ modes never step the multiplier optimizer, successor-feature
//! modes never step ξ, distance-critic modes never step ψ, and the
//! plain-SAC baseline steps neither feature critic.
//!
//! Every random stream (skills, warmup actions, exploration noise, replay
//! indices, relabeling, per-update loss noise) is derived from the config
//! seed under a distinct name, so two runs with equal configs produce
//! bit-identical logs and networks.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use super::config::{Mode, QdacConfig};
use super::losses::{self, Workspace};
use super::networks::QdacNetworks;
use super::replay::{relabel_batch, Batch, ReplayBuffer};
use crate::approx::{soft_update, AdamState, ApproxError};
use crate::envs::{EnvError, EnvSpec, Environment};
use crate::seeding;

/// Training failures. Divergence carries the full network state at the
/// failing step so callers can write a diagnostic checkpoint.
#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error("numeric divergence at step {step}: {quantity}")]
    Diverged {
        step: usize,
        quantity: String,
        networks: Box<QdacNetworks>,
    },
}

/// One row of the training log, emitted every `log_every` environment
/// steps. Loss fields hold the values from the most recent update (zero
/// until updates begin); unused heads log zero in modes that never train
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    /// Environment steps taken so far (1-based at emission).
    pub step: usize,
    /// Episodes completed so far.
    pub episodes: u64,
    /// Mean undiscounted return of episodes completed since the previous
    /// row (carries the last value forward when none completed).
    pub mean_return: f64,
    pub q_loss: f64,
    pub sf_loss: f64,
    pub xi_loss: f64,
    pub actor_loss: f64,
    pub lagrange_loss: f64,
    /// Mean multiplier weight used by the actor update.
    pub mean_lambda: f64,
    /// Fraction of the multiplier batch labeled "constraint violated".
    pub violation_rate: f64,
    pub temperature: f64,
    pub entropy: f64,
    pub mean_psi_norm: f64,
}

/// Everything a finished run hands back.
#[derive(Debug)]
pub struct TrainResult {
    pub networks: QdacNetworks,
    pub log: Vec<LogRow>,
    pub episodes: u64,
    pub updates: u64,
}

/// Skill for a new episode: uniform in the box, or pinned to the box
/// center for the skill-agnostic baseline.
fn draw_skill(mode: Mode, spec: &EnvSpec, rng: &mut ChaCha12Rng) -> Vec<f64> {
    if matches!(mode, Mode::PlainSac) {
        spec.skill_center()
    } else {
        spec.skill_lo
            .iter()
            .zip(&spec.skill_hi)
            .map(|(&lo, &hi)| rng.random_range(lo..=hi))
            .collect()
    }
}

/// Run the full training loop on `env` and return the trained networks
/// plus the log. The environment is reused across episodes (reset with
/// per-episode derived seeds); the caller keeps ownership.
pub fn train(env: &mut dyn Environment, cfg: &QdacConfig) -> Result<TrainResult, AgentError> {
    cfg.validate().map_err(AgentError::Config)?;
    let spec = env.spec().clone();
    let (obs_dim, action_dim, feature_dim) = (spec.obs_dim, spec.action_dim, spec.feature_dim);
    let skill_dim = feature_dim;
    let target_entropy = -(action_dim as f64);

    let mut nets = QdacNetworks::new(
        obs_dim,
        action_dim,
        feature_dim,
        &cfg.hidden,
        cfg.seed,
        cfg.init_temperature,
    )?;
    let mut ws = Workspace::new(&nets);
    let mut buffer = ReplayBuffer::new(
        cfg.buffer_capacity,
        obs_dim,
        action_dim,
        skill_dim,
        feature_dim,
    );
    let mut batch = Batch::new(obs_dim, action_dim, skill_dim, feature_dim);

    let mut opt_q1 = AdamState::new(nets.q1.spec().param_count(), cfg.lr);
    let mut opt_q2 = AdamState::new(nets.q2.spec().param_count(), cfg.lr);
    let mut opt_psi = AdamState::new(nets.psi.spec().param_count(), cfg.lr);
    let mut opt_xi = AdamState::new(nets.xi.spec().param_count(), cfg.lr);
    let mut opt_actor = AdamState::new(nets.actor.spec().param_count(), cfg.lr);
    let mut opt_lagrange = AdamState::new(nets.lagrange.spec().param_count(), cfg.lr);
    let mut opt_temperature = AdamState::new(1, cfg.lr);

    let mut g_q1: Vec<f64> = Vec::new();
    let mut g_q2: Vec<f64> = Vec::new();
    let mut g_psi: Vec<f64> = Vec::new();
    let mut g_xi: Vec<f64> = Vec::new();
    let mut g_actor: Vec<f64> = Vec::new();
    let mut g_lagrange: Vec<f64> = Vec::new();

    let mut skill_rng = seeding::rng(cfg.seed, "train.skill");
    let mut warmup_rng = seeding::rng(cfg.seed, "train.warmup");
    let mut explore_rng = seeding::rng(cfg.seed, "train.action");
    let mut sample_rng = seeding::rng(cfg.seed, "train.sample");
    let mut relabel_rng = seeding::rng(cfg.seed, "train.relabel");

    // Divergence sentinel: any trained ψ whose mean prediction norm exceeds
    // the geometric bound ‖φ‖max / (1 − γ) by more than 20% has left the
    // region the regression targets can justify.
    let phi_max = spec
        .skill_lo
        .iter()
        .zip(&spec.skill_hi)
        .map(|(lo, hi)| (lo * lo).max(hi * hi))
        .sum::<f64>()
        .sqrt();
    let psi_norm_limit = 1.2 * phi_max / (1.0 - cfg.gamma);

    macro_rules! diverged {
        ($step:expr, $($what:tt)*) => {
            return Err(AgentError::Diverged {
                step: $step,
                quantity: format!($($what)*),
                networks: Box::new(nets),
            })
        };
    }
    macro_rules! opt_step {
        ($step:expr, $opt:ident, $params:expr, $grad:expr, $what:expr) => {
            if let Err(e) = $opt.step($params, $grad) {
                diverged!($step, "{} optimizer rejected the gradient: {e}", $what);
            }
        };
    }

    // Per-update scalars carried into the next log row.
    #[derive(Clone, Copy, Default)]
    struct Latest {
        q: f64,
        sf: f64,
        xi: f64,
        actor: f64,
        lagrange: f64,
        lambda: f64,
        violation: f64,
        entropy: f64,
        psi_norm: f64,
    }
    let mut latest = Latest::default();

    let mut log = Vec::with_capacity(cfg.total_steps / cfg.log_every + 1);
    let mut episodes: u64 = 0;
    let mut updates: u64 = 0;
    let mut episode_return = 0.0;
    let mut finished_returns: Vec<f64> = Vec::new();
    let mut last_mean_return = 0.0;

    let mut skill = draw_skill(cfg.mode, &spec, &mut skill_rng);
    let mut obs = env.reset(seeding::derive_indexed(
        cfg.seed,
        seeding::tag("train.episode"),
        episodes,
    ));

    for step in 0..cfg.total_steps {
        // ---- collect one transition -----------------------------------
        let action: Vec<f64> = if step < cfg.warmup_steps {
            (0..action_dim)
                .map(|_| warmup_rng.random_range(-1.0..=1.0))
                .collect()
        } else {
            ws.sample(&nets.actor, &obs, &skill, &mut explore_rng);
            ws.last_action().to_vec()
        };
        if action.iter().any(|v| !v.is_finite()) {
            diverged!(step, "actor produced a non-finite action");
        }
        let sr = env.step(&action)?;
        episode_return += sr.reward;
        // Stored done is always false: these are continuing tasks, and the
        // episode end is a time limit, so the bootstrap must survive it.
        buffer.push(&obs, &action, &skill, &sr.obs, &sr.features, sr.reward, false);
        obs = sr.obs;
        if sr.done {
            episodes += 1;
            finished_returns.push(episode_return);
            episode_return = 0.0;
            skill = draw_skill(cfg.mode, &spec, &mut skill_rng);
            obs = env.reset(seeding::derive_indexed(
                cfg.seed,
                seeding::tag("train.episode"),
                episodes,
            ));
        }

        // ---- one update ------------------------------------------------
        if step >= cfg.warmup_steps && buffer.len() >= cfg.batch_size {
            let noise_seed = seeding::derive_indexed(cfg.seed, seeding::tag("train.update"), updates);
            buffer.sample_into(&mut batch, cfg.batch_size, &mut sample_rng);
            if cfg.relabel && !matches!(cfg.mode, Mode::PlainSac) {
                relabel_batch(&mut batch, &spec.skill_lo, &spec.skill_hi, &mut relabel_rng);
            }

            if cfg.mode.learns_lambda() {
                let info = losses::lagrange_loss(
                    &nets,
                    &batch,
                    cfg.gamma,
                    spec.delta,
                    cfg.mode.uses_distance_critic(),
                    noise_seed,
                    &mut ws,
                    &mut g_lagrange,
                );
                if !info.loss.is_finite() {
                    diverged!(step, "multiplier loss is {}", info.loss);
                }
                opt_step!(step, opt_lagrange, nets.lagrange.params_mut(), &g_lagrange, "multiplier");
                latest.lagrange = info.loss;
                latest.violation = info.violation_rate;
            }

            let q_info = losses::q_loss(
                &nets, &batch, cfg.gamma, noise_seed, &mut ws, &mut g_q1, &mut g_q2,
            );
            if !q_info.loss.is_finite() {
                diverged!(step, "q loss is {}", q_info.loss);
            }
            opt_step!(step, opt_q1, nets.q1.params_mut(), &g_q1, "q1");
            opt_step!(step, opt_q2, nets.q2.params_mut(), &g_q2, "q2");
            latest.q = q_info.loss;

            if cfg.mode.uses_successor_features() {
                let info = losses::sf_loss(&nets, &batch, cfg.gamma, noise_seed, &mut ws, &mut g_psi);
                if !info.loss.is_finite() {
                    diverged!(step, "successor-feature loss is {}", info.loss);
                }
                if info.mean_psi_norm > psi_norm_limit {
                    diverged!(
                        step,
                        "mean successor-feature norm {} exceeds the geometric bound {}",
                        info.mean_psi_norm,
                        psi_norm_limit
                    );
                }
                opt_step!(step, opt_psi, nets.psi.params_mut(), &g_psi, "successor features");
                latest.sf = info.loss;
                latest.psi_norm = info.mean_psi_norm;
            } else if cfg.mode.uses_distance_critic() {
                let info = losses::xi_loss(&nets, &batch, cfg.gamma, noise_seed, &mut ws, &mut g_xi);
                if !info.loss.is_finite() {
                    diverged!(step, "distance-critic loss is {}", info.loss);
                }
                opt_step!(step, opt_xi, nets.xi.params_mut(), &g_xi, "distance critic");
                latest.xi = info.loss;
            }

            let a_info = losses::actor_loss(
                &nets, &batch, cfg.mode, cfg.gamma, noise_seed, &mut ws, &mut g_actor,
            );
            if !a_info.loss.is_finite() {
                diverged!(step, "actor loss is {}", a_info.loss);
            }
            opt_step!(step, opt_actor, nets.actor.params_mut(), &g_actor, "actor");
            latest.actor = a_info.loss;
            latest.lambda = a_info.mean_lambda;

            let t_info = losses::temperature_loss(&nets, &batch, target_entropy, noise_seed, &mut ws);
            if !t_info.loss.is_finite() {
                diverged!(step, "temperature loss is {}", t_info.loss);
            }
            let mut log_temp = [nets.log_temperature];
            opt_step!(step, opt_temperature, &mut log_temp, &[t_info.grad], "temperature");
            nets.log_temperature = log_temp[0];
            latest.entropy = t_info.mean_entropy;

            // Polyak steps only for the critics this mode trains: running
            // `t = tau*o + (1-tau)*t` on a frozen head would still drift
            // the target by rounding, breaking the bit-identity invariant
            // for untouched networks.
            soft_update(nets.q1_target.params_mut(), nets.q1.params(), cfg.tau);
            soft_update(nets.q2_target.params_mut(), nets.q2.params(), cfg.tau);
            if cfg.mode.uses_successor_features() {
                soft_update(nets.psi_target.params_mut(), nets.psi.params(), cfg.tau);
            }
            if cfg.mode.uses_distance_critic() {
                soft_update(nets.xi_target.params_mut(), nets.xi.params(), cfg.tau);
            }
            updates += 1;
        }

        // ---- log row -----------------------------------------------------
        if (step + 1) % cfg.log_every == 0 {
            let mean_return = if finished_returns.is_empty() {
                last_mean_return
            } else {
                finished_returns.iter().sum::<f64>() / finished_returns.len() as f64
            };
            last_mean_return = mean_return;
            finished_returns.clear();
            log.push(LogRow {
                step: step + 1,
                episodes,
                mean_return,
                q_loss: latest.q,
                sf_loss: latest.sf,
                xi_loss: latest.xi,
                actor_loss: latest.actor,
                lagrange_loss: latest.lagrange,
                mean_lambda: latest.lambda,
                violation_rate: latest.violation,
                temperature: nets.temperature(),
                entropy: latest.entropy,
                mean_psi_norm: latest.psi_norm,
            });
        }
    }

    Ok(TrainResult {
        networks: nets,
        log,
        episodes,
        updates,
    })
}
