//! Subcommand implementations, exit codes, and artifact layout.
//!
//! Every subcommand writes its artifacts under `out_dir/<subcommand>/<seed>/`
//! and finishes with a `manifest.json` recording the config hash, the git
//! revision, wall-clock time, and the artifact names. Data artifacts are
//! deterministic given (config, seed); the manifest's wall-clock and git
//! fields are the only run-dependent bytes produced.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use crate::adapt::{few_shot_select, hierarchical_train, AdaptationCurve, MacroSkillEnv};
use crate::agent::{train, ActorPolicy, AgentError, LogRow, QdacNetworks};
use crate::envs::{
    make_env, rollout_trajectory, write_trajectory_csv, EnvSpec, Environment, Perturbation,
    TabularEmbedEnv,
};
use crate::metrics::{
    distance_profile, evaluate_grid, iqm, iqm_ci, performance_profile, scores, write_heatmap_csv,
    write_profile_csv, write_records_csv, SkillGrid,
};
use crate::policy::{PointVelocityController, SkillPolicy};
use crate::seeding;
use crate::tabular::{
    certify_avg_feature_bound, certify_avg_feature_bound_actions, distance_value_upper_bound,
    random_deterministic_instance, random_mdp, random_policy, random_skill, RandomMdpConfig,
    TabularError,
};

use super::config::{ExperimentConfig, SCRIPTED_CHECKPOINT};
use super::gradcheck::run_gradcheck;

pub const EXIT_OK: i32 = 0;
/// Configuration or setup problem (bad config file, missing checkpoint,
/// unwritable output directory).
pub const EXIT_CONFIG: i32 = 2;
/// Numeric failure (training diverged, a tabular solve failed).
pub const EXIT_NUMERIC: i32 = 3;
/// A verification subcommand ran to completion and found failures.
pub const EXIT_CHECK_FAILED: i32 = 4;

/// Randomized cases per gradient family in the `gradcheck` subcommand.
pub const GRADCHECK_CASES_PER_FAMILY: usize = 100;
/// Default certification corpus sizes for the `verify` subcommand.
pub const VERIFY_RANDOM_INSTANCES: usize = 200;
pub const VERIFY_DETERMINISTIC_INSTANCES: usize = 50;
/// Skills certified per tabular instance.
pub const VERIFY_SKILLS_PER_INSTANCE: usize = 5;
/// Episode length of the discrete diagnostic environment built for
/// `env = tabular_embed`.
const TABULAR_EMBED_EPISODE_LEN: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    /// Train an agent; writes the training log and a checkpoint.
    Train,
    /// Evaluate a checkpoint over the skill grid; writes records, profiles,
    /// scores, and (for 2-D skills) a heatmap.
    Profile,
    /// Few-shot skill selection under a perturbation sweep.
    Adapt,
    /// Train a meta-controller over a frozen skill-conditioned policy.
    Hier,
    /// Certify the tabular successor-feature bounds on a random corpus.
    Verify,
    /// Finite-difference check of every analytic gradient.
    Gradcheck,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Train => "train",
            Subcommand::Profile => "profile",
            Subcommand::Adapt => "adapt",
            Subcommand::Hier => "hier",
            Subcommand::Verify => "verify",
            Subcommand::Gradcheck => "gradcheck",
        }
    }
}

#[derive(Debug)]
pub enum CommandError {
    /// Invalid configuration or missing/mismatched inputs → exit 2.
    Config(String),
    /// Filesystem trouble while producing artifacts → exit 2.
    Io(String),
    /// Non-finite or unsolvable numerics → exit 3.
    Numeric(String),
    /// A check subcommand completed and found failures → exit 4.
    CheckFailed(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) | CommandError::Io(_) => EXIT_CONFIG,
            CommandError::Numeric(_) => EXIT_NUMERIC,
            CommandError::CheckFailed(_) => EXIT_CHECK_FAILED,
        }
    }
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CommandError::Config(m) => write!(f, "configuration error: {m}"),
            CommandError::Io(m) => write!(f, "io error: {m}"),
            CommandError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CommandError::CheckFailed(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl std::error::Error for CommandError {}

impl From<io::Error> for CommandError {
    fn from(e: io::Error) -> Self {
        CommandError::Io(e.to_string())
    }
}

/// What a completed subcommand leaves behind.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub subcommand: String,
    pub seed: u64,
    pub replication: u64,
    /// Hash of the full rendered config; changes iff any field changes.
    pub config_hash: String,
    /// `git describe --always --dirty`, or `"unknown"` outside a work tree.
    pub git_describe: String,
    pub wall_clock_seconds: f64,
    /// Artifact file names (relative to the manifest's directory).
    pub artifacts: Vec<String>,
    /// Directory the artifacts landed in (not serialized; the manifest
    /// lives in the same directory).
    #[serde(skip)]
    pub dir: PathBuf,
}

/// Collects artifacts for one run directory and records their names.
struct ArtifactSink {
    dir: PathBuf,
    names: Vec<String>,
}

impl ArtifactSink {
    fn create(cfg: &ExperimentConfig, sub: Subcommand) -> Result<Self, CommandError> {
        let dir = Path::new(&cfg.out_dir)
            .join(sub.name())
            .join(cfg.seed.to_string());
        fs::create_dir_all(&dir)
            .map_err(|e| CommandError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(ArtifactSink { dir, names: Vec::new() })
    }

    /// Stream one artifact through a buffered writer.
    fn write_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
    ) -> Result<(), CommandError> {
        let path = self.dir.join(name);
        let file = File::create(&path)
            .map_err(|e| CommandError::Io(format!("cannot create {}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        f(&mut w).map_err(|e| CommandError::Io(format!("writing {}: {e}", path.display())))?;
        w.flush()
            .map_err(|e| CommandError::Io(format!("flushing {}: {e}", path.display())))?;
        self.names.push(name.to_string());
        Ok(())
    }

    fn write_str(&mut self, name: &str, contents: &str) -> Result<(), CommandError> {
        self.write_with(name, |w| w.write_all(contents.as_bytes()))
    }

    /// Write `manifest.json` and consume the sink.
    fn finish(
        mut self,
        sub: Subcommand,
        cfg: &ExperimentConfig,
        started: Instant,
    ) -> Result<Manifest, CommandError> {
        let manifest = Manifest {
            subcommand: sub.name().to_string(),
            seed: cfg.seed,
            replication: cfg.replication,
            config_hash: cfg.hash(),
            git_describe: git_describe(),
            wall_clock_seconds: started.elapsed().as_secs_f64(),
            artifacts: std::mem::take(&mut self.names),
            dir: self.dir.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CommandError::Io(format!("serializing manifest: {e}")))?;
        let path = self.dir.join("manifest.json");
        fs::write(&path, text + "\n")
            .map_err(|e| CommandError::Io(format!("cannot write {}: {e}", path.display())))?;
        Ok(manifest)
    }
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".to_string())
}

/// Run one subcommand end to end. On success the returned manifest has been
/// written to disk; `CheckFailed` errors still leave the full artifact set
/// and manifest behind (the CSVs show exactly what failed).
pub fn execute(sub: Subcommand, cfg: &ExperimentConfig) -> Result<Manifest, CommandError> {
    cfg.validate().map_err(CommandError::Config)?;
    let started = Instant::now();
    let mut sink = ArtifactSink::create(cfg, sub)?;
    let failure = match sub {
        Subcommand::Train => cmd_train(cfg, &mut sink)?,
        Subcommand::Profile => cmd_profile(cfg, &mut sink)?,
        Subcommand::Adapt => cmd_adapt(cfg, &mut sink)?,
        Subcommand::Hier => cmd_hier(cfg, &mut sink)?,
        Subcommand::Verify => cmd_verify(cfg, &mut sink)?,
        Subcommand::Gradcheck => cmd_gradcheck(cfg, &mut sink)?,
    };
    let manifest = sink.finish(sub, cfg, started)?;
    match failure {
        None => Ok(manifest),
        Some(msg) => Err(CommandError::CheckFailed(msg)),
    }
}

/// [`execute`] with console reporting; returns the process exit code.
pub fn run(sub: Subcommand, cfg: &ExperimentConfig) -> i32 {
    match execute(sub, cfg) {
        Ok(m) => {
            println!(
                "{}: wrote {} artifacts under {}",
                m.subcommand,
                m.artifacts.len(),
                m.dir.display()
            );
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Instantiate the configured environment. Named environments come from the
/// registry; `tabular_embed` wraps a small fixed-shape random MDP derived
/// from the run seed so the whole construction stays reproducible.
fn build_env(cfg: &ExperimentConfig) -> Result<Box<dyn Environment>, CommandError> {
    match cfg.env.as_str() {
        "tabular_embed" => {
            let shape = RandomMdpConfig {
                n_states: 4,
                n_actions: 2,
                feature_dim: 2,
                gamma: cfg.gamma,
            };
            let mdp = random_mdp(&shape, seeding::derive(cfg.seed, seeding::tag("cli.tabular_embed")));
            let env = TabularEmbedEnv::new(mdp, TABULAR_EMBED_EPISODE_LEN)
                .map_err(|e| CommandError::Config(e.to_string()))?;
            Ok(Box::new(env))
        }
        name => make_env(name).map_err(|e| CommandError::Config(e.to_string())),
    }
}

/// Where `train` leaves its checkpoint for this config.
pub fn default_checkpoint_path(cfg: &ExperimentConfig) -> PathBuf {
    Path::new(&cfg.out_dir)
        .join("train")
        .join(cfg.seed.to_string())
        .join("checkpoint.qdac")
}

/// The frozen policy consumed by `profile`/`adapt`/`hier`: a trained actor
/// snapshot, or the built-in scripted point-mass controller when
/// `checkpoint = scripted`.
fn load_policy(
    cfg: &ExperimentConfig,
    spec: &EnvSpec,
) -> Result<Box<dyn SkillPolicy>, CommandError> {
    if cfg.checkpoint == SCRIPTED_CHECKPOINT {
        if cfg.env != "point_velocity" {
            return Err(CommandError::Config(format!(
                "checkpoint = {SCRIPTED_CHECKPOINT} is a point_velocity controller; env is `{}`",
                cfg.env
            )));
        }
        return Ok(Box::new(PointVelocityController::default()));
    }
    let path = if cfg.checkpoint.is_empty() {
        default_checkpoint_path(cfg)
    } else {
        PathBuf::from(&cfg.checkpoint)
    };
    let file = File::open(&path)
        .map_err(|e| CommandError::Config(format!("cannot open checkpoint {}: {e}", path.display())))?;
    let (nets, _meta) = QdacNetworks::load(&mut BufReader::new(file))
        .map_err(|e| CommandError::Config(format!("checkpoint {}: {e}", path.display())))?;
    if nets.obs_dim != spec.obs_dim
        || nets.action_dim != spec.action_dim
        || nets.feature_dim != spec.feature_dim
    {
        return Err(CommandError::Config(format!(
            "checkpoint dims (obs {}, action {}, features {}) do not match env `{}` \
             (obs {}, action {}, features {})",
            nets.obs_dim,
            nets.action_dim,
            nets.feature_dim,
            cfg.env,
            spec.obs_dim,
            spec.action_dim,
            spec.feature_dim
        )));
    }
    Ok(Box::new(ActorPolicy::from_networks(&nets)))
}

/// Training-log CSV: header plus one row per emitted [`LogRow`], floats at
/// 17 significant digits so values round-trip through text exactly.
pub fn write_log_csv<W: Write>(w: &mut W, log: &[LogRow]) -> io::Result<()> {
    writeln!(
        w,
        "step,episodes,mean_return,q_loss,sf_loss,xi_loss,actor_loss,lagrange_loss,\
         mean_lambda,violation_rate,temperature,entropy,mean_psi_norm"
    )?;
    for r in log {
        writeln!(
            w,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.step,
            r.episodes,
            r.mean_return,
            r.q_loss,
            r.sf_loss,
            r.xi_loss,
            r.actor_loss,
            r.lagrange_loss,
            r.mean_lambda,
            r.violation_rate,
            r.temperature,
            r.entropy,
            r.mean_psi_norm
        )?;
    }
    Ok(())
}

fn cmd_train(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<Option<String>, CommandError> {
    let mut env = build_env(cfg)?;
    sink.write_str("config.txt", &cfg.render())?;
    match train(env.as_mut(), &cfg.agent_config()) {
        Ok(result) => {
            sink.write_with("train_log.csv", |w| write_log_csv(w, &result.log))?;
            let extra = json!({
                "config_hash": cfg.hash(),
                "env": cfg.env,
                "mode": cfg.mode.to_string(),
                "seed": cfg.seed,
                "episodes": result.episodes,
                "updates": result.updates,
            });
            sink.write_with("checkpoint.qdac", |w| {
                result.networks.save(w, &extra).map_err(io::Error::other)
            })?;
            Ok(None)
        }
        Err(AgentError::Diverged { step, quantity, networks }) => {
            // Leave a diagnostic snapshot of the exact parameters that went
            // non-finite, then report the numeric failure.
            let extra = json!({
                "config_hash": cfg.hash(),
                "diverged": { "step": step, "quantity": quantity },
            });
            sink.write_with("diverged_checkpoint.qdac", |w| {
                networks.save(w, &extra).map_err(io::Error::other)
            })?;
            Err(CommandError::Numeric(format!(
                "training diverged at step {step}: {quantity} (diagnostic checkpoint written)"
            )))
        }
        Err(other) => Err(CommandError::Config(other.to_string())),
    }
}

/// Scores summary serialized to `scores.json`.
#[derive(Debug, Serialize)]
struct ScoresSummary {
    /// Mean of `-d(z)` over the grid (higher is better).
    distance_score: f64,
    /// Mean return over skills executed within `d_eval`.
    performance_score: f64,
    d_eval: f64,
    n_skills: usize,
    /// Interquartile mean of per-skill returns in this run.
    return_iqm: f64,
    /// 95% bootstrap interval for the IQM (absent with fewer than 2 skills).
    return_iqm_lo: Option<f64>,
    return_iqm_hi: Option<f64>,
}

fn cmd_profile(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<Option<String>, CommandError> {
    let env = build_env(cfg)?;
    let policy = load_policy(cfg, env.spec())?;
    let grid = SkillGrid::for_spec(env.spec(), cfg.grid_points_per_dim);
    let records = evaluate_grid(policy.as_ref(), env.as_ref(), &grid, cfg.n_rollouts, cfg.seed)
        .map_err(|e| CommandError::Config(e.to_string()))?;
    let d_eval = env.spec().d_eval;

    sink.write_with("records.csv", |w| write_records_csv(w, &records))?;

    // Distance profile over 201 thresholds spanning the skill-box diagonal
    // (the largest distance a skill inside the box can produce relative to
    // a feasible feature average is bounded by the diagonal's scale).
    let spec = env.spec();
    let diag = spec
        .skill_lo
        .iter()
        .zip(&spec.skill_hi)
        .map(|(lo, hi)| (hi - lo) * (hi - lo))
        .sum::<f64>()
        .sqrt()
        .max(1.0);
    let d_grid: Vec<f64> = (0..=200).map(|i| i as f64 * diag / 200.0).collect();
    let dist = distance_profile(&records, &d_grid);
    sink.write_with("distance_profile.csv", |w| write_profile_csv(w, "d", &d_grid, &dist))?;

    // Performance profile over 101 return thresholds padded past the
    // observed range.
    let (mut r_lo, mut r_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for rec in &records {
        r_lo = r_lo.min(rec.r);
        r_hi = r_hi.max(rec.r);
    }
    let r_grid: Vec<f64> = (0..=100)
        .map(|i| (r_lo - 1.0) + (r_hi - r_lo + 2.0) * i as f64 / 100.0)
        .collect();
    let perf = performance_profile(&records, d_eval, &r_grid);
    sink.write_with("performance_profile.csv", |w| write_profile_csv(w, "r", &r_grid, &perf))?;

    let (distance_score, performance_score) = scores(&records, d_eval);
    let returns: Vec<f64> = records.iter().map(|rec| rec.r).collect();
    let ci = iqm_ci(&returns, cfg.n_boot, cfg.seed).ok();
    let summary = ScoresSummary {
        distance_score,
        performance_score,
        d_eval,
        n_skills: records.len(),
        return_iqm: iqm(&returns),
        return_iqm_lo: ci.as_ref().map(|c| c.lo),
        return_iqm_hi: ci.as_ref().map(|c| c.hi),
    };
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| CommandError::Io(format!("serializing scores: {e}")))?;
    sink.write_str("scores.json", &(text + "\n"))?;

    if grid.dim() == 2 {
        sink.write_with("heatmap.csv", |w| write_heatmap_csv(w, &records, d_eval))?;
    }
    Ok(None)
}

/// `adaptation.csv`: one row per sweep level with the selected skill.
fn write_adaptation_csv<W: Write>(w: &mut W, curve: &AdaptationCurve, dim: usize) -> io::Result<()> {
    write!(w, "level,best_index,")?;
    for k in 1..=dim {
        write!(w, "best_z{k},")?;
    }
    writeln!(w, "best_return")?;
    for level in &curve.levels {
        write!(w, "{:.16e},{},", level.factor, level.best_index)?;
        for z in &level.best_skill {
            write!(w, "{z:.16e},")?;
        }
        writeln!(w, "{:.16e}", level.best_return)?;
    }
    Ok(())
}

/// `table.csv`: the full level × skill return table behind the selection.
fn write_adaptation_table_csv<W: Write>(
    w: &mut W,
    curve: &AdaptationCurve,
    grid: &SkillGrid,
) -> io::Result<()> {
    write!(w, "level,skill_index,")?;
    for k in 1..=grid.dim() {
        write!(w, "z{k},")?;
    }
    writeln!(w, "return")?;
    for level in &curve.levels {
        for (i, r) in level.returns.iter().enumerate() {
            write!(w, "{:.16e},{i},", level.factor)?;
            for z in grid.point(i) {
                write!(w, "{z:.16e},")?;
            }
            writeln!(w, "{r:.16e}")?;
        }
    }
    Ok(())
}

fn cmd_adapt(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<Option<String>, CommandError> {
    let env = build_env(cfg)?;
    let policy = load_policy(cfg, env.spec())?;
    let grid = SkillGrid::for_spec(env.spec(), cfg.grid_points_per_dim);
    let curve = few_shot_select(
        policy.as_ref(),
        env.as_ref(),
        cfg.perturbation,
        &cfg.levels,
        &grid,
        cfg.n_rollouts,
        cfg.seed,
    )
    .map_err(|e| CommandError::Config(e.to_string()))?;
    sink.write_with("adaptation.csv", |w| write_adaptation_csv(w, &curve, grid.dim()))?;
    sink.write_with("table.csv", |w| write_adaptation_table_csv(w, &curve, &grid))?;
    Ok(None)
}

fn cmd_hier(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<Option<String>, CommandError> {
    let mut inner = build_env(cfg)?;
    if cfg.env == "point_velocity" && cfg.wall_gap > 0.0 {
        inner = inner
            .perturbed(&Perturbation::Wall {
                x_position: cfg.wall_x,
                gap_halfwidth: cfg.wall_gap,
            })
            .map_err(|e| CommandError::Config(e.to_string()))?;
    }
    let low_level: Arc<dyn SkillPolicy> = Arc::from(load_policy(cfg, inner.spec())?);
    sink.write_str("config.txt", &cfg.render())?;
    match hierarchical_train(inner.as_ref(), Arc::clone(&low_level), cfg.k_macro, &cfg.agent_config()) {
        Ok(result) => {
            sink.write_with("meta_log.csv", |w| write_log_csv(w, &result.log))?;
            let extra = json!({
                "config_hash": cfg.hash(),
                "env": cfg.env,
                "k_macro": cfg.k_macro,
                "episodes": result.episodes,
                "updates": result.updates,
            });
            sink.write_with("meta_checkpoint.qdac", |w| {
                result.networks.save(w, &extra).map_err(io::Error::other)
            })?;

            // One greedy rollout of the trained meta-controller for
            // inspection: macro actions are the skills it commands.
            let mut macro_env = MacroSkillEnv::new(inner.clone_env(), low_level, cfg.k_macro);
            let skill = macro_env.spec().skill_center();
            let meta_policy = ActorPolicy::from_networks(&result.networks);
            let trajectory = rollout_trajectory(
                &mut macro_env,
                &meta_policy,
                &skill,
                seeding::derive(cfg.seed, seeding::tag("cli.hier.rollout")),
            )
            .map_err(|e| CommandError::Config(e.to_string()))?;
            sink.write_with("final_rollout.csv", |w| write_trajectory_csv(w, &trajectory))?;
            Ok(None)
        }
        Err(AgentError::Diverged { step, quantity, networks }) => {
            let extra = json!({
                "config_hash": cfg.hash(),
                "diverged": { "step": step, "quantity": quantity },
            });
            sink.write_with("diverged_meta_checkpoint.qdac", |w| {
                networks.save(w, &extra).map_err(io::Error::other)
            })?;
            Err(CommandError::Numeric(format!(
                "meta-training diverged at step {step}: {quantity} (diagnostic checkpoint written)"
            )))
        }
        Err(other) => Err(CommandError::Config(other.to_string())),
    }
}

/// One certified bound on one `(instance, skill)` pair.
#[derive(Debug, Clone)]
pub struct VerifyRow {
    /// `rand-NNN` or `det-NNN`.
    pub instance_id: String,
    /// `state_bound`, `action_bound`, or `dominance`.
    pub check: &'static str,
    /// Seed the instance was generated from.
    pub seed: u64,
    pub n_states: usize,
    pub n_actions: usize,
    pub feature_dim: usize,
    pub gamma: f64,
    pub z_index: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub epsilon: f64,
    pub holds: bool,
}

/// Instance shapes cycle deterministically through the corpus ranges
/// S ∈ [2, 10], A ∈ [1, 4], d ∈ [1, 3], γ ∈ {0.9, 0.99}.
fn verify_shape(i: usize) -> RandomMdpConfig {
    RandomMdpConfig {
        n_states: 2 + i % 9,
        n_actions: 1 + i % 4,
        feature_dim: 1 + i % 3,
        gamma: if i % 2 == 0 { 0.9 } else { 0.99 },
    }
}

/// Certify all three bounds on `n_random` stochastic and `n_deterministic`
/// deterministic instances, [`VERIFY_SKILLS_PER_INSTANCE`] skills each.
/// Deterministic instances must additionally have an exactly-zero Bellman
/// gap, folded into their `action_bound` rows' `holds`.
pub fn run_verify_corpus(
    seed: u64,
    n_random: usize,
    n_deterministic: usize,
) -> Result<Vec<VerifyRow>, TabularError> {
    let mut rows = Vec::new();
    let certify_instance = |instance_id: String,
                                inst_seed: u64,
                                shape: &RandomMdpConfig,
                                mdp: &crate::tabular::FiniteMdp,
                                pi: &crate::tabular::TabularPolicy,
                                require_exact_gap: bool,
                                rows: &mut Vec<VerifyRow>|
     -> Result<(), TabularError> {
        for j in 0..VERIFY_SKILLS_PER_INSTANCE {
            let z = random_skill(
                shape.feature_dim,
                seeding::derive_indexed(inst_seed, seeding::tag("cli.verify.skill"), j as u64),
            );
            let mut push = |check: &'static str, lhs: f64, rhs: f64, epsilon: f64, holds: bool| {
                rows.push(VerifyRow {
                    instance_id: instance_id.clone(),
                    check,
                    seed: inst_seed,
                    n_states: shape.n_states,
                    n_actions: shape.n_actions,
                    feature_dim: shape.feature_dim,
                    gamma: shape.gamma,
                    z_index: j,
                    lhs,
                    rhs,
                    epsilon,
                    holds,
                });
            };
            let state = certify_avg_feature_bound(mdp, pi, &z)?;
            push("state_bound", state.lhs, state.rhs, state.epsilon, state.holds);
            let action = certify_avg_feature_bound_actions(mdp, pi, &z)?;
            let holds = action.holds && (!require_exact_gap || action.epsilon == 0.0);
            push("action_bound", action.lhs, action.rhs, action.epsilon, holds);
            let dom = distance_value_upper_bound(mdp, pi, &z)?;
            push("dominance", dom.max_violation, 0.0, 0.0, dom.holds);
        }
        Ok(())
    };

    for i in 0..n_random {
        let shape = verify_shape(i);
        let inst_seed = seeding::derive_indexed(seed, seeding::tag("cli.verify.random"), i as u64);
        let mdp = random_mdp(&shape, inst_seed);
        let pi = random_policy(
            shape.n_states,
            shape.n_actions,
            seeding::derive_indexed(seed, seeding::tag("cli.verify.policy"), i as u64),
        );
        certify_instance(format!("rand-{i:03}"), inst_seed, &shape, &mdp, &pi, false, &mut rows)?;
    }
    for i in 0..n_deterministic {
        let shape = verify_shape(i);
        let inst_seed = seeding::derive_indexed(seed, seeding::tag("cli.verify.det"), i as u64);
        let (mdp, pi) = random_deterministic_instance(&shape, inst_seed);
        certify_instance(format!("det-{i:03}"), inst_seed, &shape, &mdp, &pi, true, &mut rows)?;
    }
    Ok(rows)
}

pub fn write_verify_csv<W: Write>(w: &mut W, rows: &[VerifyRow]) -> io::Result<()> {
    writeln!(w, "instance_id,check,seed,S,A,d,gamma,z_index,lhs,rhs,epsilon,holds")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{:.16e},{},{:.16e},{:.16e},{:.16e},{}",
            r.instance_id,
            r.check,
            r.seed,
            r.n_states,
            r.n_actions,
            r.feature_dim,
            r.gamma,
            r.z_index,
            r.lhs,
            r.rhs,
            r.epsilon,
            r.holds
        )?;
    }
    Ok(())
}

fn cmd_verify(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<Option<String>, CommandError> {
    let rows = run_verify_corpus(cfg.seed, VERIFY_RANDOM_INSTANCES, VERIFY_DETERMINISTIC_INSTANCES)
        .map_err(|e| CommandError::Numeric(e.to_string()))?;
    sink.write_with("results.csv", |w| write_verify_csv(w, &rows))?;
    let failures = rows.iter().filter(|r| !r.holds).count();
    if failures > 0 {
        Ok(Some(format!("{failures} of {} bound certifications failed", rows.len())))
    } else {
        Ok(None)
    }
}

fn cmd_gradcheck(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<Option<String>, CommandError> {
    let results = run_gradcheck(cfg.seed, GRADCHECK_CASES_PER_FAMILY);
    sink.write_with("gradcheck.csv", |w| {
        writeln!(w, "family,case,max_rel_err,tolerance,pass")?;
        for r in &results {
            writeln!(
                w,
                "{},{},{:.16e},{:.16e},{}",
                r.family, r.case, r.max_rel_err, r.tolerance, r.pass
            )?;
        }
        Ok(())
    })?;
    let failures = results.iter().filter(|r| !r.pass).count();
    if failures > 0 {
        Ok(Some(format!("{failures} of {} gradient cases failed", results.len())))
    } else {
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    /// A config small enough that train/profile/adapt/hier all run in
    /// well under a second each.
    fn tiny_config(out_dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.out_dir = out_dir.to_string_lossy().into_owned();
        cfg.total_steps = 400;
        cfg.warmup_steps = 50;
        cfg.batch_size = 16;
        cfg.buffer_capacity = 1_000;
        cfg.hidden = vec![8, 8];
        cfg.log_every = 100;
        cfg.grid_points_per_dim = 3;
        cfg.n_rollouts = 1;
        cfg.n_boot = 50;
        cfg.levels = vec![1.0, 0.5];
        cfg
    }

    fn read(dir: &Path, name: &str) -> String {
        fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
    }

    #[test]
    fn exit_codes_match_the_contract() {
        assert_eq!(CommandError::Config("x".into()).exit_code(), EXIT_CONFIG);
        assert_eq!(CommandError::Io("x".into()).exit_code(), EXIT_CONFIG);
        assert_eq!(CommandError::Numeric("x".into()).exit_code(), EXIT_NUMERIC);
        assert_eq!(CommandError::CheckFailed("x".into()).exit_code(), EXIT_CHECK_FAILED);
    }

    #[test]
    fn train_profile_adapt_pipeline_produces_consistent_artifacts() {
        let tmp = TempDir::new().unwrap();
        let cfg = tiny_config(tmp.path());

        let m = execute(Subcommand::Train, &cfg).expect("train");
        assert_eq!(m.subcommand, "train");
        assert_eq!(m.config_hash, cfg.hash());
        for name in ["config.txt", "train_log.csv", "checkpoint.qdac"] {
            assert!(m.artifacts.contains(&name.to_string()), "missing {name}");
            assert!(m.dir.join(name).exists());
        }
        // The saved config parses back to the config that ran.
        let back = crate::cli::parse_config(&read(&m.dir, "config.txt")).unwrap();
        assert_eq!(back, cfg);
        // Log rows: header + total_steps / log_every.
        let log = read(&m.dir, "train_log.csv");
        assert_eq!(log.lines().count(), 1 + cfg.total_steps / cfg.log_every);
        assert!(log.starts_with("step,episodes,mean_return,"));
        // Manifest on disk matches the returned manifest.
        let manifest: serde_json::Value =
            serde_json::from_str(&read(&m.dir, "manifest.json")).unwrap();
        assert_eq!(manifest["config_hash"], cfg.hash());
        assert_eq!(manifest["seed"], cfg.seed);
        assert!(manifest["artifacts"].as_array().unwrap().len() == 3);

        // Profile consumes the default checkpoint path left by train.
        let m = execute(Subcommand::Profile, &cfg).expect("profile");
        let records = read(&m.dir, "records.csv");
        assert_eq!(records.lines().count(), 1 + 9, "3x3 grid of records");
        assert!(m.dir.join("heatmap.csv").exists(), "2-D skills get a heatmap");
        let scores: serde_json::Value = serde_json::from_str(&read(&m.dir, "scores.json")).unwrap();
        assert_eq!(scores["n_skills"], 9);
        assert!(scores["distance_score"].as_f64().unwrap() <= 0.0);
        assert!(scores["return_iqm_lo"].as_f64().is_some());

        // Adapt sweeps two levels over the same grid.
        let m = execute(Subcommand::Adapt, &cfg).expect("adapt");
        let adaptation = read(&m.dir, "adaptation.csv");
        assert_eq!(adaptation.lines().count(), 1 + 2, "one row per level");
        let table = read(&m.dir, "table.csv");
        assert_eq!(table.lines().count(), 1 + 2 * 9, "level x skill rows");
    }

    #[test]
    fn train_logs_are_byte_identical_across_runs() {
        let tmp_a = TempDir::new().unwrap();
        let tmp_b = TempDir::new().unwrap();
        let cfg_a = tiny_config(tmp_a.path());
        let cfg_b = tiny_config(tmp_b.path());
        let m_a = execute(Subcommand::Train, &cfg_a).unwrap();
        let m_b = execute(Subcommand::Train, &cfg_b).unwrap();
        let log_a = fs::read(m_a.dir.join("train_log.csv")).unwrap();
        let log_b = fs::read(m_b.dir.join("train_log.csv")).unwrap();
        assert_eq!(log_a, log_b, "identical config+seed must reproduce the log bytes");
        // The checkpoint header embeds the config hash, which covers
        // out_dir and so differs between the temp dirs; everything after
        // the header line (role manifest + parameter payload) must match.
        let ck_a = fs::read(m_a.dir.join("checkpoint.qdac")).unwrap();
        let ck_b = fs::read(m_b.dir.join("checkpoint.qdac")).unwrap();
        let body = |ck: &[u8]| {
            let nl = ck.iter().position(|&b| b == b'\n').unwrap();
            ck[nl + 1..].to_vec()
        };
        assert_eq!(body(&ck_a), body(&ck_b), "checkpoint parameters are deterministic");
    }

    #[test]
    fn diverged_training_leaves_a_diagnostic_and_exits_numeric() {
        let tmp = TempDir::new().unwrap();
        let mut cfg = tiny_config(tmp.path());
        cfg.lr = 1e6; // deliberately absurd
        cfg.total_steps = 300;
        let err = execute(Subcommand::Train, &cfg).expect_err("must diverge");
        assert_eq!(err.exit_code(), EXIT_NUMERIC);
        let dir = Path::new(&cfg.out_dir).join("train").join(cfg.seed.to_string());
        assert!(dir.join("diverged_checkpoint.qdac").exists());
        // The diagnostic is loadable and carries the divergence report.
        let file = File::open(dir.join("diverged_checkpoint.qdac")).unwrap();
        let (_nets, extra) = QdacNetworks::load(&mut BufReader::new(file)).unwrap();
        assert!(extra["diverged"]["step"].as_u64().is_some());
    }

    #[test]
    fn profile_without_a_checkpoint_is_a_config_error() {
        let tmp = TempDir::new().unwrap();
        let cfg = tiny_config(tmp.path());
        let err = execute(Subcommand::Profile, &cfg).expect_err("no checkpoint yet");
        assert_eq!(err.exit_code(), EXIT_CONFIG);
        assert!(err.to_string().contains("checkpoint"));
    }

    #[test]
    fn scripted_checkpoint_only_fits_the_point_environment() {
        let tmp = TempDir::new().unwrap();
        let mut cfg = tiny_config(tmp.path());
        cfg.checkpoint = SCRIPTED_CHECKPOINT.to_string();
        cfg.env = "hopper_lite".to_string();
        let err = execute(Subcommand::Adapt, &cfg).expect_err("scripted is point-only");
        assert_eq!(err.exit_code(), EXIT_CONFIG);
    }

    #[test]
    fn adapt_with_scripted_controller_prefers_healthy_actuators() {
        let tmp = TempDir::new().unwrap();
        let mut cfg = tiny_config(tmp.path());
        cfg.checkpoint = SCRIPTED_CHECKPOINT.to_string();
        cfg.levels = vec![1.0, 0.0];
        let m = execute(Subcommand::Adapt, &cfg).expect("adapt");
        let adaptation = read(&m.dir, "adaptation.csv");
        let rows: Vec<&str> = adaptation.lines().skip(1).collect();
        assert_eq!(rows.len(), 2);
        let best_return = |row: &str| -> f64 {
            row.rsplit(',').next().unwrap().parse().unwrap()
        };
        // A dead x-actuator can only hurt the achievable return.
        assert!(best_return(rows[0]) >= best_return(rows[1]) - 1e-9);
    }

    #[test]
    fn hier_with_scripted_lowlevel_writes_meta_artifacts() {
        let tmp = TempDir::new().unwrap();
        let mut cfg = tiny_config(tmp.path());
        cfg.checkpoint = SCRIPTED_CHECKPOINT.to_string();
        cfg.total_steps = 150;
        cfg.warmup_steps = 30;
        cfg.batch_size = 8;
        cfg.wall_gap = 0.0; // plain env: no wall detour needed at this scale
        let m = execute(Subcommand::Hier, &cfg).expect("hier");
        for name in ["config.txt", "meta_log.csv", "meta_checkpoint.qdac", "final_rollout.csv"] {
            assert!(m.dir.join(name).exists(), "missing {name}");
        }
        // The macro episode holds each skill for k_macro inner steps.
        let rollout = read(&m.dir, "final_rollout.csv");
        assert_eq!(rollout.lines().count(), 1 + 200usize.div_ceil(cfg.k_macro));
    }

    #[test]
    fn verify_small_corpus_holds_everywhere() {
        let rows = run_verify_corpus(0, 8, 4).expect("corpus solves");
        assert_eq!(rows.len(), (8 + 4) * VERIFY_SKILLS_PER_INSTANCE * 3);
        for row in &rows {
            assert!(
                row.holds,
                "{} {} z{} failed: lhs {} rhs {} eps {}",
                row.instance_id, row.check, row.z_index, row.lhs, row.rhs, row.epsilon
            );
            if row.instance_id.starts_with("det-") && row.check == "action_bound" {
                assert_eq!(row.epsilon, 0.0, "deterministic Bellman gap must be exact");
            }
        }
        // Deterministic replay.
        let again = run_verify_corpus(0, 8, 4).unwrap();
        assert_eq!(rows.len(), again.len());
        for (a, b) in rows.iter().zip(&again) {
            assert_eq!(a.lhs.to_bits(), b.lhs.to_bits());
            assert_eq!(a.rhs.to_bits(), b.rhs.to_bits());
        }
    }

    #[test]
    fn gradcheck_command_writes_a_full_csv_and_passes() {
        let tmp = TempDir::new().unwrap();
        let cfg = tiny_config(tmp.path());
        let m = execute(Subcommand::Gradcheck, &cfg).expect("all gradients check out");
        let csv = read(&m.dir, "gradcheck.csv");
        assert_eq!(
            csv.lines().count(),
            1 + crate::cli::FAMILIES.len() * GRADCHECK_CASES_PER_FAMILY
        );
        assert!(!csv.contains(",false"), "no failing case expected");
    }

    #[test]
    fn unknown_env_fails_validation_before_any_io() {
        let tmp = TempDir::new().unwrap();
        let mut cfg = tiny_config(tmp.path());
        cfg.env = "atari".to_string();
        let err = execute(Subcommand::Train, &cfg).expect_err("unknown env");
        assert_eq!(err.exit_code(), EXIT_CONFIG);
        assert!(!Path::new(&cfg.out_dir).join("train").exists());
    }

    #[test]
    fn untrained_checkpoint_profiles_near_the_center_blob_baseline() {
        // An untrained squashed-Gaussian actor emits near-constant small
        // actions, so episode-average features sit near the origin and the
        // expected distance to skill z is about ||z||. The distance score
        // should therefore sit near -mean ||z|| over the grid.
        let tmp = TempDir::new().unwrap();
        let mut cfg = tiny_config(tmp.path());
        let nets = QdacNetworks::new(4, 2, 2, &cfg.hidden, 9, 0.2).unwrap();
        let path = tmp.path().join("untrained.qdac");
        let mut w = BufWriter::new(File::create(&path).unwrap());
        nets.save(&mut w, &serde_json::Value::Null).unwrap();
        w.flush().unwrap();
        cfg.checkpoint = path.to_string_lossy().into_owned();
        cfg.grid_points_per_dim = 5;

        let m = execute(Subcommand::Profile, &cfg).expect("profile");
        let scores: serde_json::Value = serde_json::from_str(&read(&m.dir, "scores.json")).unwrap();
        let ds = scores["distance_score"].as_f64().unwrap();

        let env = build_env(&cfg).unwrap();
        let grid = SkillGrid::for_spec(env.spec(), cfg.grid_points_per_dim);
        let mean_norm: f64 = grid
            .iter()
            .map(|z| z.iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum::<f64>()
            / grid.len() as f64;
        assert!(
            (ds + mean_norm).abs() < 0.25,
            "distance score {ds} vs random baseline {}",
            -mean_norm
        );
    }

    #[test]
    fn tabular_embed_env_is_constructible_and_trainable() {
        let tmp = TempDir::new().unwrap();
        let mut cfg = tiny_config(tmp.path());
        cfg.env = "tabular_embed".to_string();
        cfg.total_steps = 300;
        let m = execute(Subcommand::Train, &cfg).expect("train on the embedded MDP");
        assert!(m.dir.join("checkpoint.qdac").exists());
    }
}
