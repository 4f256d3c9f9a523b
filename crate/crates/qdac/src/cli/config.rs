//! Experiment configuration: a flat, typed, human-editable key-value file.
//!
//! One file describes one experiment replication. The format is a single
//! `key = value` pair per line, `#` starts a comment, blank lines are
//! ignored. Parsing is strict: unknown keys, duplicate keys, and malformed
//! values are rejected with the offending line number. Rendering a config
//! and parsing it back is lossless, which is what makes the config hash in
//! run manifests meaningful.

use std::fmt;

use thiserror::Error;

use crate::adapt::{PerturbationKind, DEFAULT_K_MACRO};
use crate::agent::{Mode, QdacConfig};
use crate::metrics::{DEFAULT_N_BOOT, DEFAULT_N_ROLLOUTS, DEFAULT_POINTS_PER_DIM};

/// Environment names accepted by the `env` key.
pub const KNOWN_ENVS: [&str; 3] = ["point_velocity", "hopper_lite", "tabular_embed"];

/// `checkpoint` value selecting the built-in scripted point-mass controller
/// instead of a trained snapshot (useful for exercising `adapt`/`hier`
/// without a prior training run).
pub const SCRIPTED_CHECKPOINT: &str = "scripted";

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    /// 1-based line number in the config text ( 0 for non-textual errors).
    pub line: usize,
    pub message: String,
}

impl ConfigError {
    fn new(line: usize, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line,
            message: message.into(),
        }
    }
}

/// Everything a subcommand needs, in one flat struct.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Environment name; see [`KNOWN_ENVS`].
    pub env: String,
    /// Agent variant.
    pub mode: Mode,
    /// Master seed; every stream the run uses is derived from it.
    pub seed: u64,
    /// Replication index, recorded in the manifest. Replications are driven
    /// by distinct seeds, not by this field; it only labels the artifacts.
    pub replication: u64,
    pub total_steps: usize,
    pub warmup_steps: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub gamma: f64,
    pub tau: f64,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub relabel: bool,
    pub init_temperature: f64,
    pub log_every: usize,
    /// Skill lattice resolution per dimension for evaluation subcommands.
    pub grid_points_per_dim: usize,
    /// Evaluation episodes per skill.
    pub n_rollouts: usize,
    /// Bootstrap resamples for confidence intervals.
    pub n_boot: usize,
    /// Low-level steps per meta action in the hierarchical task.
    pub k_macro: usize,
    /// Perturbation family swept by `adapt`.
    pub perturbation: PerturbationKind,
    /// Sweep factors for `adapt`.
    pub levels: Vec<f64>,
    /// Policy snapshot consumed by `profile`/`adapt`/`hier`. Empty selects
    /// the default path `<out_dir>/train/<seed>/checkpoint.qdac`; the
    /// sentinel `scripted` selects the built-in point-mass controller.
    pub checkpoint: String,
    /// Wall position for `hier` (x coordinate).
    pub wall_x: f64,
    /// Wall solid half-width for `hier`; `0` disables the wall.
    pub wall_gap: f64,
    /// Root directory for artifacts.
    pub out_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let agent = QdacConfig::default();
        ExperimentConfig {
            env: "point_velocity".to_string(),
            mode: agent.mode,
            seed: agent.seed,
            replication: 0,
            total_steps: agent.total_steps,
            warmup_steps: agent.warmup_steps,
            batch_size: agent.batch_size,
            buffer_capacity: agent.buffer_capacity,
            gamma: agent.gamma,
            tau: agent.tau,
            lr: agent.lr,
            hidden: agent.hidden,
            relabel: agent.relabel,
            init_temperature: agent.init_temperature,
            log_every: agent.log_every,
            grid_points_per_dim: DEFAULT_POINTS_PER_DIM,
            n_rollouts: DEFAULT_N_ROLLOUTS,
            n_boot: DEFAULT_N_BOOT,
            k_macro: DEFAULT_K_MACRO,
            perturbation: PerturbationKind::ActionScale { index: 0 },
            levels: vec![1.0, 0.75, 0.5, 0.25, 0.0],
            checkpoint: String::new(),
            wall_x: 0.2,
            wall_gap: 0.4,
            out_dir: "out".to_string(),
        }
    }
}

/// Key list in canonical render order. Kept in one place so the parser,
/// the renderer, and the duplicate-detection agree by construction.
const KEYS: [&str; 25] = [
    "env",
    "mode",
    "seed",
    "replication",
    "total_steps",
    "warmup_steps",
    "batch_size",
    "buffer_capacity",
    "gamma",
    "tau",
    "lr",
    "hidden",
    "relabel",
    "init_temperature",
    "log_every",
    "grid_points_per_dim",
    "n_rollouts",
    "n_boot",
    "k_macro",
    "perturbation",
    "levels",
    "checkpoint",
    "wall_x",
    "wall_gap",
    "out_dir",
];

fn key_index(key: &str) -> Option<usize> {
    KEYS.iter().position(|k| *k == key)
}

impl ExperimentConfig {
    /// Apply one `key = value` assignment. Shared by the file parser and
    /// the `--override` flag; returns a message without a line number.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String>
        where
            T::Err: fmt::Display,
        {
            value
                .parse::<T>()
                .map_err(|e| format!("bad value `{value}` for `{key}`: {e}"))
        }
        fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, String>
        where
            T::Err: fmt::Display,
        {
            if value.is_empty() {
                return Ok(Vec::new());
            }
            value.split(',').map(|item| parse(key, item.trim())).collect()
        }

        match key {
            "env" => self.env = value.to_string(),
            "mode" => self.mode = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "replication" => self.replication = parse(key, value)?,
            "total_steps" => self.total_steps = parse(key, value)?,
            "warmup_steps" => self.warmup_steps = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "buffer_capacity" => self.buffer_capacity = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "hidden" => self.hidden = parse_list(key, value)?,
            "relabel" => self.relabel = parse(key, value)?,
            "init_temperature" => self.init_temperature = parse(key, value)?,
            "log_every" => self.log_every = parse(key, value)?,
            "grid_points_per_dim" => self.grid_points_per_dim = parse(key, value)?,
            "n_rollouts" => self.n_rollouts = parse(key, value)?,
            "n_boot" => self.n_boot = parse(key, value)?,
            "k_macro" => self.k_macro = parse(key, value)?,
            "perturbation" => self.perturbation = parse(key, value)?,
            "levels" => self.levels = parse_list(key, value)?,
            "checkpoint" => self.checkpoint = value.to_string(),
            "wall_x" => self.wall_x = parse(key, value)?,
            "wall_gap" => self.wall_gap = parse(key, value)?,
            "out_dir" => self.out_dir = value.to_string(),
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Structural checks beyond per-value parsing.
    pub fn validate(&self) -> Result<(), String> {
        if !KNOWN_ENVS.contains(&self.env.as_str()) {
            return Err(format!(
                "unknown env `{}` (expected one of {})",
                self.env,
                KNOWN_ENVS.join(", ")
            ));
        }
        if self.out_dir.is_empty() {
            return Err("out_dir must not be empty".to_string());
        }
        if self.grid_points_per_dim == 0 {
            return Err("grid_points_per_dim must be at least 1".to_string());
        }
        if self.n_rollouts == 0 {
            return Err("n_rollouts must be at least 1".to_string());
        }
        if self.n_boot == 0 {
            return Err("n_boot must be at least 1".to_string());
        }
        if self.k_macro == 0 {
            return Err("k_macro must be at least 1".to_string());
        }
        if self.levels.is_empty() {
            return Err("levels must contain at least one factor".to_string());
        }
        if !(self.wall_gap >= 0.0) {
            return Err("wall_gap must be non-negative".to_string());
        }
        self.agent_config().validate().map_err(|e| e.to_string())
    }

    /// The agent-facing slice of this config.
    pub fn agent_config(&self) -> QdacConfig {
        QdacConfig {
            mode: self.mode,
            seed: self.seed,
            total_steps: self.total_steps,
            warmup_steps: self.warmup_steps,
            batch_size: self.batch_size,
            buffer_capacity: self.buffer_capacity,
            gamma: self.gamma,
            tau: self.tau,
            lr: self.lr,
            hidden: self.hidden.clone(),
            relabel: self.relabel,
            init_temperature: self.init_temperature,
            log_every: self.log_every,
        }
    }

    /// Canonical text form: every key, fixed order, parses back to `self`.
    pub fn render(&self) -> String {
        fn join<T: fmt::Display>(items: &[T]) -> String {
            items
                .iter()
                .map(T::to_string)
                .collect::<Vec<_>>()
                .join(",")
        }
        let mut out = String::new();
        for key in KEYS {
            let value = match key {
                "env" => self.env.clone(),
                "mode" => self.mode.to_string(),
                "seed" => self.seed.to_string(),
                "replication" => self.replication.to_string(),
                "total_steps" => self.total_steps.to_string(),
                "warmup_steps" => self.warmup_steps.to_string(),
                "batch_size" => self.batch_size.to_string(),
                "buffer_capacity" => self.buffer_capacity.to_string(),
                "gamma" => self.gamma.to_string(),
                "tau" => self.tau.to_string(),
                "lr" => self.lr.to_string(),
                "hidden" => join(&self.hidden),
                "relabel" => self.relabel.to_string(),
                "init_temperature" => self.init_temperature.to_string(),
                "log_every" => self.log_every.to_string(),
                "grid_points_per_dim" => self.grid_points_per_dim.to_string(),
                "n_rollouts" => self.n_rollouts.to_string(),
                "n_boot" => self.n_boot.to_string(),
                "k_macro" => self.k_macro.to_string(),
                "perturbation" => self.perturbation.to_string(),
                "levels" => join(&self.levels),
                "checkpoint" => self.checkpoint.clone(),
                "wall_x" => self.wall_x.to_string(),
                "wall_gap" => self.wall_gap.to_string(),
                "out_dir" => self.out_dir.clone(),
                _ => unreachable!("KEYS and render cover the same fields"),
            };
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&value);
            out.push('\n');
        }
        out
    }

    /// FNV-1a over the canonical rendering; two configs hash equal iff
    /// every field matches.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.render().as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// Parse a config file's text. Starts from the defaults, so a file only
/// needs the keys it wants to change.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    let mut seen = [false; KEYS.len()];
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::new(lineno, format!("expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::new(lineno, "missing key before `=`"));
        }
        if let Some(idx) = key_index(key) {
            if seen[idx] {
                return Err(ConfigError::new(lineno, format!("duplicate key `{key}`")));
            }
            seen[idx] = true;
        }
        cfg.set(key, value)
            .map_err(|message| ConfigError::new(lineno, message))?;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_the_default_config() {
        assert_eq!(parse_config("").unwrap(), ExperimentConfig::default());
        assert_eq!(
            parse_config("# only a comment\n\n").unwrap(),
            ExperimentConfig::default()
        );
    }

    #[test]
    fn parses_a_typical_file() {
        let text = "\
# training setup
env = hopper_lite
mode = fixed_lambda:0.25
seed = 7
hidden = 32, 32   # two layers
gamma = 0.97
relabel = false
levels = 1.0,0.5
perturbation = gravity_scale
checkpoint = runs/ckpt.qdac
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.env, "hopper_lite");
        assert_eq!(cfg.mode, Mode::FixedLambda(0.25));
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.hidden, vec![32, 32]);
        assert_eq!(cfg.gamma, 0.97);
        assert!(!cfg.relabel);
        assert_eq!(cfg.levels, vec![1.0, 0.5]);
        assert_eq!(cfg.perturbation, PerturbationKind::GravityScale);
        assert_eq!(cfg.checkpoint, "runs/ckpt.qdac");
        // Untouched keys keep their defaults.
        assert_eq!(cfg.batch_size, ExperimentConfig::default().batch_size);
    }

    #[test]
    fn errors_carry_the_line_number() {
        let err = parse_config("seed = 1\nbogus_key = 2\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.message.contains("unknown key"), "{}", err.message);

        let err = parse_config("\n\nseed = not_a_number\n").unwrap_err();
        assert_eq!(err.line, 3);
        assert!(err.message.contains("seed"), "{}", err.message);

        let err = parse_config("just some words\n").unwrap_err();
        assert_eq!(err.line, 1);
        assert!(err.message.contains("key = value"), "{}", err.message);

        let err = parse_config("seed = 1\n# fine\nseed = 2\n").unwrap_err();
        assert_eq!(err.line, 3);
        assert!(err.message.contains("duplicate"), "{}", err.message);

        let err = parse_config(" = 3\n").unwrap_err();
        assert_eq!(err.line, 1);
        assert!(err.message.contains("missing key"), "{}", err.message);
    }

    #[test]
    fn render_round_trips_losslessly() {
        let mut cfg = ExperimentConfig::default();
        cfg.env = "hopper_lite".into();
        cfg.mode = Mode::Uvfa(0.66);
        cfg.seed = 123456789;
        cfg.gamma = 0.937_465_281_903_4; // full-precision float survives
        cfg.lr = 3.07e-4;
        cfg.hidden = vec![16, 8, 4];
        cfg.levels = vec![1.0, 0.333_333_333_333_333_3, 0.0];
        cfg.perturbation = PerturbationKind::ActionScale { index: 1 };
        cfg.checkpoint = "some/path.qdac".into();
        cfg.replication = 3;

        let text = cfg.render();
        let back = parse_config(&text).unwrap();
        assert_eq!(back, cfg);
        // And rendering is a fixed point.
        assert_eq!(back.render(), text);
    }

    #[test]
    fn hash_changes_iff_a_field_changes() {
        let base = ExperimentConfig::default();
        let h0 = base.hash();
        assert_eq!(h0, ExperimentConfig::default().hash());

        // Each single-field change must move the hash.
        let mut c = base.clone();
        c.seed = 1;
        assert_ne!(c.hash(), h0);
        let mut c = base.clone();
        c.gamma = 0.991;
        assert_ne!(c.hash(), h0);
        let mut c = base.clone();
        c.hidden = vec![256, 256, 1];
        assert_ne!(c.hash(), h0);
        let mut c = base.clone();
        c.checkpoint = "x".into();
        assert_ne!(c.hash(), h0);
        let mut c = base.clone();
        c.replication = 9;
        assert_ne!(c.hash(), h0);
    }

    #[test]
    fn overrides_reuse_the_same_parser() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("mode", "no_sf").unwrap();
        assert_eq!(cfg.mode, Mode::NoSf);
        cfg.set("levels", "2.0, 1.0").unwrap();
        assert_eq!(cfg.levels, vec![2.0, 1.0]);
        assert!(cfg.set("mode", "nonsense").is_err());
        assert!(cfg.set("not_a_key", "1").is_err());
    }

    #[test]
    fn validate_rejects_structural_nonsense() {
        let mut cfg = ExperimentConfig::default();
        cfg.env = "atari".into();
        assert!(cfg.validate().unwrap_err().contains("unknown env"));

        let mut cfg = ExperimentConfig::default();
        cfg.gamma = 1.5;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.levels.clear();
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.grid_points_per_dim = 0;
        assert!(cfg.validate().is_err());

        assert!(ExperimentConfig::default().validate().is_ok());
    }

    #[test]
    fn comment_only_values_are_rejected() {
        // `lr = # comment` leaves an empty value, which must not parse.
        let err = parse_config("lr = # nothing here\n").unwrap_err();
        assert_eq!(err.line, 1);
    }

    #[test]
    fn empty_list_values_parse_as_empty() {
        // Allowed at parse time; validate() decides whether empties are
        // structurally acceptable.
        let cfg = parse_config("levels =\n").unwrap();
        assert!(cfg.levels.is_empty());
        assert!(cfg.validate().is_err());
    }
}
