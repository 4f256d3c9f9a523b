//! The learner's function approximators and their persistence.

use std::io::{BufRead, Write};

use serde_json::json;

use crate::approx::{
    read_checkpoint, soft_update, write_checkpoint, ApproxError, CheckpointEntry, CheckpointError,
    Mlp, MlpSpec,
};
use crate::policy::SkillPolicy;
use crate::seeding;

/// All networks of one agent, in every mode. Unused heads (ξ in
/// successor-feature modes, ψ in distance-critic modes, λ in pinned modes)
/// are still allocated and checkpointed so snapshots have one shape.
///
/// Input layouts:
/// - actor: `obs ⊕ skill → (mean ‖ log-std)`, `2 * action_dim` outputs
/// - q1/q2 (+targets): `obs ⊕ action ⊕ skill → 1`
/// - psi (+target): `obs ⊕ action ⊕ skill → feature_dim`
/// - xi (+target): `obs ⊕ action ⊕ skill → 1`
/// - lagrange: `obs ⊕ skill → 1` — the network emits the *logit*; the
///   multiplier is `sigmoid(logit)`, read through [`QdacNetworks::lambda`],
///   so the cross-entropy loss can work on the numerically benign
///   pre-activation while λ itself always lands in (0, 1).
///
/// The skill dimension always equals the feature dimension (skills are
/// targets in feature space).
#[derive(Debug, Clone)]
pub struct QdacNetworks {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub feature_dim: usize,
    pub actor: Mlp,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub psi: Mlp,
    pub psi_target: Mlp,
    pub xi: Mlp,
    pub xi_target: Mlp,
    pub lagrange: Mlp,
    /// Entropy temperature β, stored and optimized as log β.
    pub log_temperature: f64,
}

/// Checkpoint entry roles, in file order.
pub const CHECKPOINT_ROLES: [&str; 11] = [
    "actor",
    "q1",
    "q2",
    "q1_target",
    "q2_target",
    "psi",
    "psi_target",
    "xi",
    "xi_target",
    "lagrange",
    "log_temperature",
];

fn mlp_spec(input: usize, hidden: &[usize], output: usize) -> Result<MlpSpec, ApproxError> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(input);
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    MlpSpec::relu_linear(sizes)
}

impl QdacNetworks {
    pub fn new(
        obs_dim: usize,
        action_dim: usize,
        feature_dim: usize,
        hidden: &[usize],
        seed: u64,
        init_temperature: f64,
    ) -> Result<Self, ApproxError> {
        let skill_dim = feature_dim;
        let actor_spec = mlp_spec(obs_dim + skill_dim, hidden, 2 * action_dim)?;
        let q_spec = mlp_spec(obs_dim + action_dim + skill_dim, hidden, 1)?;
        let psi_spec = mlp_spec(obs_dim + action_dim + skill_dim, hidden, feature_dim)?;
        let lagrange_spec = mlp_spec(obs_dim + skill_dim, hidden, 1)?;

        let init = |spec: &MlpSpec, role: &str| Mlp::init(spec.clone(), seeding::derive(seed, seeding::tag(role)));
        let q1 = init(&q_spec, "net.q1");
        let q2 = init(&q_spec, "net.q2");
        let psi = init(&psi_spec, "net.psi");
        let xi = init(&q_spec, "net.xi");
        Ok(QdacNetworks {
            obs_dim,
            action_dim,
            feature_dim,
            actor: init(&actor_spec, "net.actor"),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            q1,
            q2,
            psi_target: psi.clone(),
            psi,
            xi_target: xi.clone(),
            xi,
            lagrange: init(&lagrange_spec, "net.lagrange"),
            log_temperature: init_temperature.ln(),
        })
    }

    pub fn skill_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn temperature(&self) -> f64 {
        self.log_temperature.exp()
    }

    /// Deterministic action head: `tanh(mean)`.
    pub fn mean_action(&self, obs: &[f64], skill: &[f64]) -> Vec<f64> {
        let mut input = Vec::with_capacity(obs.len() + skill.len());
        input.extend_from_slice(obs);
        input.extend_from_slice(skill);
        let out = self.actor.forward(&input);
        out[..self.action_dim].iter().map(|m| m.tanh()).collect()
    }

    /// Multiplier λ(s, z) ∈ (0, 1): sigmoid of the λ network's logit.
    pub fn lambda(&self, obs: &[f64], skill: &[f64]) -> f64 {
        let mut input = Vec::with_capacity(obs.len() + skill.len());
        input.extend_from_slice(obs);
        input.extend_from_slice(skill);
        sigmoid(self.lagrange.forward(&input)[0])
    }

    /// Polyak-average every target network toward its online copy. Note
    /// `tau*o + (1-tau)*t` rounds even at `o == t`, so callers that promise
    /// bit-identical untrained heads must skip those heads instead of
    /// relying on this being a fixed point (the training loop does).
    pub fn soft_update_targets(&mut self, tau: f64) {
        soft_update(self.q1_target.params_mut(), self.q1.params(), tau);
        soft_update(self.q2_target.params_mut(), self.q2.params(), tau);
        soft_update(self.psi_target.params_mut(), self.psi.params(), tau);
        soft_update(self.xi_target.params_mut(), self.xi.params(), tau);
    }

    /// Serialize every network plus the temperature into the checkpoint
    /// container. `extra` rides along in the metadata (typically the run
    /// config as JSON).
    pub fn save<W: Write>(&self, w: &mut W, extra: &serde_json::Value) -> Result<(), CheckpointError> {
        let meta = json!({
            "dims": {
                "obs_dim": self.obs_dim,
                "action_dim": self.action_dim,
                "feature_dim": self.feature_dim,
            },
            "extra": extra,
        });
        let nets: [(&str, &Mlp); 10] = [
            ("actor", &self.actor),
            ("q1", &self.q1),
            ("q2", &self.q2),
            ("q1_target", &self.q1_target),
            ("q2_target", &self.q2_target),
            ("psi", &self.psi),
            ("psi_target", &self.psi_target),
            ("xi", &self.xi),
            ("xi_target", &self.xi_target),
            ("lagrange", &self.lagrange),
        ];
        let mut entries: Vec<CheckpointEntry> = nets
            .iter()
            .map(|(role, net)| CheckpointEntry::mlp(role, net.spec().clone(), net.params().to_vec()))
            .collect();
        entries.push(CheckpointEntry::raw("log_temperature", vec![self.log_temperature]));
        write_checkpoint(w, &meta, &entries)
    }

    /// Load a checkpoint written by [`QdacNetworks::save`]. Returns the
    /// networks and the caller's `extra` metadata.
    pub fn load<R: BufRead>(r: &mut R) -> Result<(Self, serde_json::Value), CheckpointError> {
        let (meta, entries) = read_checkpoint(r)?;
        let dims = &meta["dims"];
        let read_dim = |key: &str| -> Result<usize, CheckpointError> {
            dims[key]
                .as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| CheckpointError::Malformed(format!("metadata missing dims.{key}")))
        };
        let obs_dim = read_dim("obs_dim")?;
        let action_dim = read_dim("action_dim")?;
        let feature_dim = read_dim("feature_dim")?;
        if obs_dim == 0 || action_dim == 0 || feature_dim == 0 {
            return Err(CheckpointError::Malformed("zero dimension in metadata".into()));
        }

        if entries.len() != CHECKPOINT_ROLES.len() {
            return Err(CheckpointError::Malformed(format!(
                "expected {} entries, found {}",
                CHECKPOINT_ROLES.len(),
                entries.len()
            )));
        }
        let mut slots: Vec<Option<CheckpointEntry>> = entries.into_iter().map(Some).collect();
        let mut take_mlp = |role: &str, input: usize, output: usize| -> Result<Mlp, CheckpointError> {
            let idx = CHECKPOINT_ROLES
                .iter()
                .position(|r| *r == role)
                .expect("role table");
            let entry = slots[idx]
                .take()
                .filter(|e| e.role == role)
                .ok_or_else(|| CheckpointError::Malformed(format!("entry {idx} must have role {role:?}")))?;
            let spec = entry
                .spec
                .clone()
                .ok_or_else(|| CheckpointError::Malformed(format!("{role}: missing network spec")))?;
            if spec.input_dim() != input || spec.output_dim() != output {
                return Err(CheckpointError::Malformed(format!(
                    "{role}: spec is {}→{}, dims require {}→{}",
                    spec.input_dim(),
                    spec.output_dim(),
                    input,
                    output
                )));
            }
            Mlp::from_params(spec, entry.values)
                .map_err(|e| CheckpointError::Malformed(format!("{role}: {e}")))
        };

        let skill_dim = feature_dim;
        let s_in = obs_dim + skill_dim;
        let sa_in = obs_dim + action_dim + skill_dim;
        let actor = take_mlp("actor", s_in, 2 * action_dim)?;
        let q1 = take_mlp("q1", sa_in, 1)?;
        let q2 = take_mlp("q2", sa_in, 1)?;
        let q1_target = take_mlp("q1_target", sa_in, 1)?;
        let q2_target = take_mlp("q2_target", sa_in, 1)?;
        let psi = take_mlp("psi", sa_in, feature_dim)?;
        let psi_target = take_mlp("psi_target", sa_in, feature_dim)?;
        let xi = take_mlp("xi", sa_in, 1)?;
        let xi_target = take_mlp("xi_target", sa_in, 1)?;
        let lagrange = take_mlp("lagrange", s_in, 1)?;

        let temp_entry = slots[10]
            .take()
            .filter(|e| e.role == "log_temperature" && e.spec.is_none() && e.values.len() == 1)
            .ok_or_else(|| {
                CheckpointError::Malformed("last entry must be the scalar log_temperature".into())
            })?;

        Ok((
            QdacNetworks {
                obs_dim,
                action_dim,
                feature_dim,
                actor,
                q1,
                q2,
                q1_target,
                q2_target,
                psi,
                psi_target,
                xi,
                xi_target,
                lagrange,
                log_temperature: temp_entry.values[0],
            },
            meta["extra"].clone(),
        ))
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// An immutable deterministic snapshot of the actor, usable wherever a
/// frozen skill-conditioned policy is needed (evaluation, adaptation,
/// hierarchical control).
#[derive(Debug, Clone)]
pub struct ActorPolicy {
    actor: Mlp,
    obs_dim: usize,
    action_dim: usize,
}

impl ActorPolicy {
    pub fn from_networks(nets: &QdacNetworks) -> Self {
        ActorPolicy {
            actor: nets.actor.clone(),
            obs_dim: nets.obs_dim,
            action_dim: nets.action_dim,
        }
    }

    /// FNV-1a over the exact parameter bits; used to assert snapshots are
    /// never mutated by evaluation code.
    pub fn param_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in self.actor.params() {
            for byte in p.to_bits().to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

impl SkillPolicy for ActorPolicy {
    fn action(&self, obs: &[f64], skill: &[f64]) -> Vec<f64> {
        debug_assert_eq!(obs.len(), self.obs_dim);
        let mut input = Vec::with_capacity(obs.len() + skill.len());
        input.extend_from_slice(obs);
        input.extend_from_slice(skill);
        let out = self.actor.forward(&input);
        out[..self.action_dim].iter().map(|m| m.tanh()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn nets() -> QdacNetworks {
        QdacNetworks::new(4, 2, 2, &[8, 8], 7, 0.2).unwrap()
    }

    #[test]
    fn construction_is_deterministic_and_roles_differ() {
        let a = nets();
        let b = nets();
        assert_eq!(a.actor.params(), b.actor.params());
        assert_eq!(a.q1.params(), b.q1.params());
        assert_ne!(a.q1.params(), a.q2.params(), "per-role seeds must differ");
    }

    #[test]
    fn targets_start_equal_to_online() {
        let n = nets();
        assert_eq!(n.q1.params(), n.q1_target.params());
        assert_eq!(n.q2.params(), n.q2_target.params());
        assert_eq!(n.psi.params(), n.psi_target.params());
        assert_eq!(n.xi.params(), n.xi_target.params());
    }

    #[test]
    fn temperature_round_trips_through_log() {
        let n = nets();
        assert!((n.temperature() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn lambda_is_a_proper_probability() {
        let n = nets();
        for seed in 0..20u64 {
            let obs: Vec<f64> = (0..4).map(|i| ((seed + i) as f64).sin()).collect();
            let z = [0.3, -0.4];
            let l = n.lambda(&obs, &z);
            assert!(l > 0.0 && l < 1.0, "lambda {l} outside (0,1)");
        }
    }

    #[test]
    fn mean_action_is_squashed() {
        let n = nets();
        let a = n.mean_action(&[0.1, -0.2, 0.3, 0.4], &[1.0, -1.0]);
        assert_eq!(a.len(), 2);
        assert!(a.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn soft_update_moves_targets() {
        let mut n = nets();
        // Shift q1 online params, then check the target tracks by tau.
        let before = n.q1_target.params().to_vec();
        for p in n.q1.params_mut() {
            *p += 1.0;
        }
        n.soft_update_targets(0.25);
        for (i, t) in n.q1_target.params().iter().enumerate() {
            let expected = before[i] + 0.25 * 1.0;
            assert!((t - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let mut n = nets();
        n.log_temperature = -1.7;
        let mut buf = Vec::new();
        n.save(&mut buf, &serde_json::json!({"note": "test"})).unwrap();
        let (back, extra) = QdacNetworks::load(&mut Cursor::new(&buf)).unwrap();
        assert_eq!(extra["note"], "test");
        assert_eq!(back.obs_dim, 4);
        assert_eq!(back.action_dim, 2);
        assert_eq!(back.feature_dim, 2);
        assert_eq!(back.actor.params(), n.actor.params());
        assert_eq!(back.lagrange.params(), n.lagrange.params());
        assert_eq!(back.log_temperature, -1.7);
    }

    #[test]
    fn load_rejects_role_shuffles_and_dim_mismatches() {
        // The container mixes JSON manifest lines with raw f64 payload
        // bytes, so tampering works on bytes (length-preserving).
        fn replace_bytes(buf: &[u8], from: &[u8], to: &[u8]) -> Option<Vec<u8>> {
            assert_eq!(from.len(), to.len());
            let pos = buf.windows(from.len()).position(|w| w == from)?;
            let mut out = buf.to_vec();
            out[pos..pos + to.len()].copy_from_slice(to);
            Some(out)
        }
        let n = nets();
        let mut buf = Vec::new();
        n.save(&mut buf, &serde_json::Value::Null).unwrap();
        // Corrupt the declared action_dim in the header metadata.
        let tampered = replace_bytes(&buf, b"\"action_dim\":2", b"\"action_dim\":3")
            .expect("dims are in the header");
        assert!(
            QdacNetworks::load(&mut Cursor::new(tampered)).is_err(),
            "dim tampering must be rejected"
        );
        // Renaming a role breaks the fixed ordering contract.
        let swapped = replace_bytes(&buf, b"\"role\":\"q1\"", b"\"role\":\"q9\"")
            .expect("q1 manifest present");
        assert!(
            QdacNetworks::load(&mut Cursor::new(swapped)).is_err(),
            "unknown role must be rejected"
        );
    }

    #[test]
    fn sigmoid_and_softplus_are_stable_at_extremes() {
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert_eq!(softplus(-1000.0), 0.0);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn actor_policy_matches_mean_action_and_hashes_stably() {
        let n = nets();
        let p = ActorPolicy::from_networks(&n);
        let obs = [0.1, 0.2, -0.3, 0.0];
        let z = [0.5, 0.5];
        assert_eq!(p.action(&obs, &z), n.mean_action(&obs, &z));
        assert_eq!(p.param_hash(), ActorPolicy::from_networks(&n).param_hash());
    }
}
