//! Shared policy abstraction for evaluation and adaptation.

/// A frozen skill-conditioned policy: observation and commanded skill in,
/// action out. Implemented by trained agent snapshots (deterministic head)
/// and by scripted controllers in tests.
pub trait SkillPolicy: Send + Sync {
    fn action(&self, obs: &[f64], skill: &[f64]) -> Vec<f64>;
}

/// A scripted proportional velocity controller for the point-mass
/// environment: steers the observed velocity toward the commanded skill.
/// Useful as a known-good low-level policy in adaptation tests.
///
/// The feedforward term cancels the point mass's nominal drag at the
/// commanded velocity (`drag / a_max = 0.5 / 2`), so tracking has no
/// steady-state offset.
#[derive(Debug, Clone)]
pub struct PointVelocityController {
    /// Proportional gain on the velocity error.
    pub gain: f64,
    /// Feedforward per unit of commanded velocity.
    pub feedforward: f64,
}

impl Default for PointVelocityController {
    fn default() -> Self {
        PointVelocityController {
            gain: 4.0,
            feedforward: 0.25,
        }
    }
}

impl SkillPolicy for PointVelocityController {
    fn action(&self, obs: &[f64], skill: &[f64]) -> Vec<f64> {
        // Observation layout: (x, y, vx, vy).
        let (vx, vy) = (obs[2], obs[3]);
        vec![
            (self.gain * (skill[0] - vx) + self.feedforward * skill[0]).clamp(-1.0, 1.0),
            (self.gain * (skill[1] - vy) + self.feedforward * skill[1]).clamp(-1.0, 1.0),
        ]
    }
}
