//! Training configuration and ablation modes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Objective variant. The last three are the paper-matched ablations; each
/// changes only the actor's penalty term and/or the multiplier source, never
/// the SAC backbone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Full method: successor-feature distance penalty weighted by the
    /// learned multiplier λ(s, z).
    Qdac,
    /// Successor features replaced by a learned discounted per-step distance
    /// critic ξ(s, a, z), used directly as the penalty; λ still learned.
    NoSf,
    /// Successor-feature penalty with the multiplier pinned at λ0.
    FixedLambda(f64),
    /// Distance-critic penalty with the multiplier pinned at λ0 (a plain
    /// goal-conditioned value function baseline).
    Uvfa(f64),
    /// λ̄ = 0 and the skill input frozen at the box center: standard SAC.
    PlainSac,
}

impl Mode {
    /// Pinned multiplier value when this mode disables λ (0.5 / 0.66 for
    /// the fixed-λ / UVFA ablations respectively when left unspecified).
    pub const DEFAULT_FIXED_LAMBDA: f64 = 0.5;
    pub const DEFAULT_UVFA_LAMBDA: f64 = 0.66;

    /// True when the mode trains the λ network.
    pub fn learns_lambda(&self) -> bool {
        matches!(self, Mode::Qdac | Mode::NoSf)
    }

    /// True when the penalty is the successor-feature distance (trains ψ).
    pub fn uses_successor_features(&self) -> bool {
        matches!(self, Mode::Qdac | Mode::FixedLambda(_))
    }

    /// True when the penalty is the learned distance critic (trains ξ).
    pub fn uses_distance_critic(&self) -> bool {
        matches!(self, Mode::NoSf | Mode::Uvfa(_))
    }

    /// Fixed multiplier for modes that pin it; `None` when learned.
    pub fn pinned_lambda(&self) -> Option<f64> {
        match self {
            Mode::FixedLambda(l) | Mode::Uvfa(l) => Some(*l),
            Mode::PlainSac => Some(0.0),
            Mode::Qdac | Mode::NoSf => None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if let Mode::FixedLambda(l) | Mode::Uvfa(l) = self {
            if !(0.0..=1.0).contains(l) || !l.is_finite() {
                return Err(format!("pinned lambda must be in [0, 1], got {l}"));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Qdac => write!(f, "qdac"),
            Mode::NoSf => write!(f, "no_sf"),
            Mode::FixedLambda(l) => write!(f, "fixed_lambda:{l}"),
            Mode::Uvfa(l) => write!(f, "uvfa:{l}"),
            Mode::PlainSac => write!(f, "plain_sac"),
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    /// Accepts `qdac`, `no_sf`, `plain_sac`, and `fixed_lambda[:λ0]` /
    /// `uvfa[:λ0]` with the paper's default pin when `:λ0` is omitted.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let parse_lambda = |arg: Option<&str>, default: f64| -> Result<f64, String> {
            match arg {
                None => Ok(default),
                Some(a) => a
                    .parse::<f64>()
                    .map_err(|_| format!("invalid lambda value {a:?}")),
            }
        };
        let mode = match head {
            "qdac" => Mode::Qdac,
            "no_sf" => Mode::NoSf,
            "plain_sac" => Mode::PlainSac,
            "fixed_lambda" => Mode::FixedLambda(parse_lambda(arg, Self::DEFAULT_FIXED_LAMBDA)?),
            "uvfa" => Mode::Uvfa(parse_lambda(arg, Self::DEFAULT_UVFA_LAMBDA)?),
            other => {
                return Err(format!(
                    "unknown mode {other:?} (expected qdac, no_sf, fixed_lambda[:x], uvfa[:x], plain_sac)"
                ))
            }
        };
        if !matches!(mode, Mode::FixedLambda(_) | Mode::Uvfa(_)) && arg.is_some() {
            return Err(format!("mode {head:?} takes no argument"));
        }
        mode.validate()?;
        Ok(mode)
    }
}

impl Serialize for Mode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Mode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Hyperparameters of the learner. Environment-derived quantities (skill
/// box, constraint slack δ, episode length, target entropy −|A|) come from
/// the `EnvSpec` at training time and are not duplicated here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QdacConfig {
    pub mode: Mode,
    pub seed: u64,
    pub total_steps: usize,
    /// Steps of uniform-random action collection before updates begin.
    pub warmup_steps: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub gamma: f64,
    /// Target-network smoothing coefficient.
    pub tau: f64,
    /// Adam learning rate, shared by every network.
    pub lr: f64,
    /// Hidden layer widths, shared by every network.
    pub hidden: Vec<usize>,
    /// Duplicate each minibatch with uniformly resampled skills.
    pub relabel: bool,
    /// Initial entropy temperature β (optimized in log space).
    pub init_temperature: f64,
    /// Emit one training-log row every this many environment steps.
    pub log_every: usize,
}

impl Default for QdacConfig {
    fn default() -> Self {
        QdacConfig {
            mode: Mode::Qdac,
            seed: 0,
            total_steps: 200_000,
            warmup_steps: 1_000,
            batch_size: 256,
            buffer_capacity: 200_000,
            gamma: 0.99,
            tau: 0.005,
            lr: 3e-4,
            hidden: vec![256, 256],
            relabel: true,
            init_temperature: 0.2,
            log_every: 1_000,
        }
    }
}

impl QdacConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.mode.validate()?;
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(format!("gamma must be in [0, 1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(format!("tau must be in (0, 1], got {}", self.tau));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return Err("batch_size must be positive".to_string());
        }
        if self.buffer_capacity < self.batch_size {
            return Err(format!(
                "buffer_capacity {} smaller than batch_size {}",
                self.buffer_capacity, self.batch_size
            ));
        }
        if self.total_steps == 0 {
            return Err("total_steps must be positive".to_string());
        }
        if self.warmup_steps >= self.total_steps {
            return Err(format!(
                "warmup_steps {} must be below total_steps {}",
                self.warmup_steps, self.total_steps
            ));
        }
        if self.hidden.is_empty() || self.hidden.iter().any(|&w| w == 0) {
            return Err(format!("hidden widths must be nonzero, got {:?}", self.hidden));
        }
        if !(self.init_temperature > 0.0 && self.init_temperature.is_finite()) {
            return Err(format!(
                "init_temperature must be positive, got {}",
                self.init_temperature
            ));
        }
        if self.log_every == 0 {
            return Err("log_every must be positive".to_string());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_strings_round_trip() {
        for s in ["qdac", "no_sf", "plain_sac", "fixed_lambda:0.5", "uvfa:0.66"] {
            let m: Mode = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
            let json = serde_json::to_string(&m).unwrap();
            let back: Mode = serde_json::from_str(&json).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn bare_ablation_names_use_paper_defaults() {
        assert_eq!("fixed_lambda".parse::<Mode>().unwrap(), Mode::FixedLambda(0.5));
        assert_eq!("uvfa".parse::<Mode>().unwrap(), Mode::Uvfa(0.66));
    }

    #[test]
    fn bad_modes_are_rejected() {
        assert!("sac".parse::<Mode>().is_err());
        assert!("qdac:0.3".parse::<Mode>().is_err());
        assert!("fixed_lambda:1.5".parse::<Mode>().is_err());
        assert!("uvfa:abc".parse::<Mode>().is_err());
    }

    #[test]
    fn mode_predicates_match_the_ablation_table() {
        assert!(Mode::Qdac.learns_lambda() && Mode::Qdac.uses_successor_features());
        assert!(Mode::NoSf.learns_lambda() && Mode::NoSf.uses_distance_critic());
        let fixed = Mode::FixedLambda(0.5);
        assert!(!fixed.learns_lambda() && fixed.uses_successor_features());
        assert_eq!(fixed.pinned_lambda(), Some(0.5));
        let uvfa = Mode::Uvfa(0.66);
        assert!(!uvfa.learns_lambda() && uvfa.uses_distance_critic());
        assert_eq!(Mode::PlainSac.pinned_lambda(), Some(0.0));
        assert!(!Mode::PlainSac.uses_successor_features());
        assert!(!Mode::PlainSac.uses_distance_critic());
    }

    #[test]
    fn default_config_validates() {
        QdacConfig::default().validate().unwrap();
    }

    #[test]
    fn validation_catches_bad_fields() {
        let ok = QdacConfig::default();
        for f in [
            |c: &mut QdacConfig| c.gamma = 1.0,
            |c: &mut QdacConfig| c.tau = 0.0,
            |c: &mut QdacConfig| c.lr = -1.0,
            |c: &mut QdacConfig| c.batch_size = 0,
            |c: &mut QdacConfig| c.buffer_capacity = 1,
            |c: &mut QdacConfig| c.warmup_steps = c.total_steps,
            |c: &mut QdacConfig| c.hidden = vec![],
            |c: &mut QdacConfig| c.hidden = vec![32, 0],
            |c: &mut QdacConfig| c.init_temperature = 0.0,
            |c: &mut QdacConfig| c.log_every = 0,
        ] {
            let mut bad = ok.clone();
            f(&mut bad);
            assert!(bad.validate().is_err(), "expected rejection: {bad:?}");
        }
    }

    #[test]
    fn config_serde_round_trips() {
        let cfg = QdacConfig {
            mode: Mode::Uvfa(0.66),
            hidden: vec![32, 32],
            ..QdacConfig::default()
        };
        let json = serde_json::to_string(&cfg).unwrap();
        let back: QdacConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }
}
