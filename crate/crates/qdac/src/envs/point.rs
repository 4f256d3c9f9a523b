//! Planar point mass with velocity features.

use super::{clip_action, jitter, EnvError, EnvSpec, Environment, Perturbation, StepResult};
use crate::seeding;

/// Point mass on the plane driven by a bounded acceleration command.
///
/// State `(x, y, vx, vy)`. Semi-implicit Euler at `dt = 0.05`:
///
/// ```text
/// v' = clamp(v + (a_max * u - drag * v) * dt, -v_max, v_max)   (per component)
/// p' = p + v' * dt
/// ```
///
/// with `a_max = 2`, `v_max = 1`, nominal drag `0.5`. Features are the new
/// velocity `(vx', vy')`, the skill box is `[-1, 1]^2`, and the reward is
/// forward progress minus an energy cost: `r = vx' - 0.1 * |u|^2`. An
/// episode lasts 200 steps; there are no terminal states.
///
/// Perturbations: per-component actuator scaling, drag scaling, and a wall
/// at `x = wall.0` whose solid section spans `|y| < wall.1` (crossing
/// attempts stop at the wall and zero the horizontal velocity; the path
/// around the wall's ends stays open).
#[derive(Debug, Clone)]
pub struct PointVelocityEnv {
    spec: EnvSpec,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    t: usize,
    action_scale: Option<(usize, f64)>,
    drag_factor: f64,
    wall: Option<(f64, f64)>,
    /// Which side of the wall the point was on when it was last parked on
    /// the plane (`-1.0` left, `1.0` right, `0.0` when not in contact).
    /// Needed so a point resting exactly at `x = wall` cannot slip through.
    wall_side: f64,
}

impl PointVelocityEnv {
    pub const DT: f64 = 0.05;
    pub const A_MAX: f64 = 2.0;
    pub const V_MAX: f64 = 1.0;
    pub const ENERGY_COST: f64 = 0.1;
    pub const NOMINAL_DRAG: f64 = 0.5;
    pub const EPISODE_LEN: usize = 200;
    const RESET_JITTER: f64 = 0.01;

    pub fn new() -> Self {
        PointVelocityEnv {
            spec: EnvSpec {
                obs_dim: 4,
                action_dim: 2,
                feature_dim: 2,
                skill_lo: vec![-1.0, -1.0],
                skill_hi: vec![1.0, 1.0],
                episode_len: Self::EPISODE_LEN,
                delta: 0.02,
                d_eval: 0.2,
            },
            x: 0.0,
            y: 0.0,
            vx: 0.0,
            vy: 0.0,
            t: 0,
            action_scale: None,
            drag_factor: 1.0,
            wall: None,
            wall_side: 0.0,
        }
    }

    fn obs(&self) -> Vec<f64> {
        vec![self.x, self.y, self.vx, self.vy]
    }

    /// Direct state override for closed-form dynamics tests.
    #[cfg(test)]
    pub(crate) fn set_state(&mut self, x: f64, y: f64, vx: f64, vy: f64) {
        self.x = x;
        self.y = y;
        self.vx = vx;
        self.vy = vy;
    }
}

impl Default for PointVelocityEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for PointVelocityEnv {
    fn name(&self) -> &'static str {
        "point_velocity"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = seeding::rng(seed, "point_velocity.reset");
        self.x = 0.0;
        self.y = 0.0;
        self.vx = jitter(&mut rng, Self::RESET_JITTER);
        self.vy = jitter(&mut rng, Self::RESET_JITTER);
        self.t = 0;
        self.wall_side = 0.0;
        self.obs()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if self.t >= self.spec.episode_len {
            return Err(EnvError::EpisodeOver);
        }
        let mut u = clip_action(action, 2)?;
        if let Some((index, factor)) = self.action_scale {
            u[index] *= factor;
        }

        let drag = Self::NOMINAL_DRAG * self.drag_factor;
        self.vx = (self.vx + (Self::A_MAX * u[0] - drag * self.vx) * Self::DT)
            .clamp(-Self::V_MAX, Self::V_MAX);
        self.vy = (self.vy + (Self::A_MAX * u[1] - drag * self.vy) * Self::DT)
            .clamp(-Self::V_MAX, Self::V_MAX);

        let x_new = self.x + self.vx * Self::DT;
        let y_new = self.y + self.vy * Self::DT;
        if let Some((wall_x, halfwidth)) = self.wall {
            let from = self.x - wall_x;
            let to = x_new - wall_x;
            let crossing = if from == 0.0 {
                // Resting on the plane: only motion back toward the side it
                // was parked from is free.
                self.wall_side != 0.0 && to * self.wall_side < 0.0
            } else {
                from * to < 0.0 || to == 0.0
            };
            if crossing && y_new.abs() < halfwidth {
                // Stopped by the wall: park at the plane, kill the velocity
                // component into it, remember the approach side.
                self.x = wall_x;
                self.vx = 0.0;
                if from != 0.0 {
                    self.wall_side = from.signum();
                }
            } else {
                self.x = x_new;
                if to != 0.0 {
                    self.wall_side = 0.0;
                } else if from != 0.0 {
                    // Landed exactly on the plane (outside the solid span or
                    // moving back): remember which side it came from.
                    self.wall_side = from.signum();
                }
            }
        } else {
            self.x = x_new;
        }
        self.y = y_new;

        self.t += 1;
        let energy: f64 = u.iter().map(|a| a * a).sum();
        Ok(StepResult {
            obs: self.obs(),
            reward: self.vx - Self::ENERGY_COST * energy,
            features: vec![self.vx, self.vy],
            done: self.t == self.spec.episode_len,
        })
    }

    fn clone_env(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }

    fn perturbed(&self, p: &Perturbation) -> Result<Box<dyn Environment>, EnvError> {
        Ok(Box::new(self.apply(p)?))
    }
}

impl PointVelocityEnv {
    /// Concrete-typed perturbation application backing [`Environment::perturbed`].
    pub fn apply(&self, p: &Perturbation) -> Result<PointVelocityEnv, EnvError> {
        p.validate()?;
        let mut env = self.clone();
        match *p {
            Perturbation::ActionScale { index, factor } => {
                if index >= 2 {
                    return Err(EnvError::InvalidPerturbation(format!(
                        "action index {index} out of range for 2-D actions"
                    )));
                }
                env.action_scale = Some((index, factor));
            }
            Perturbation::DragScale { factor } => env.drag_factor = factor,
            Perturbation::Wall {
                x_position,
                gap_halfwidth,
            } => env.wall = Some((x_position, gap_halfwidth)),
            Perturbation::GravityScale { .. } => {
                return Err(EnvError::IncompatiblePerturbation {
                    perturbation: "gravity_scale",
                    env: "point_velocity",
                })
            }
        }
        Ok(env)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_action_at_rest_is_a_fixed_point() {
        let mut env = PointVelocityEnv::new();
        env.reset(0);
        env.set_state(0.0, 0.0, 0.0, 0.0);
        let r = env.step(&[0.0, 0.0]).unwrap();
        assert_eq!(r.obs, vec![0.0, 0.0, 0.0, 0.0]);
        assert_eq!(r.reward, 0.0);
        assert_eq!(r.features, vec![0.0, 0.0]);
    }

    #[test]
    fn euler_step_from_rest_hand_computed() {
        // From v = (0,0) under u = (1,0): vx' = clamp(0 + 2.0*0.05*1) = 0.1,
        // reward = 0.1 - 0.1 * 1^2 = 0. Drag contributes nothing at v = 0.
        let mut env = PointVelocityEnv::new();
        env.reset(0);
        env.set_state(0.0, 0.0, 0.0, 0.0);
        let r = env.step(&[1.0, 0.0]).unwrap();
        assert_eq!(r.obs[2], 0.1);
        assert_eq!(r.reward, 0.0);
        assert_eq!(r.features, vec![0.1, 0.0]);
        // Semi-implicit: the position moved with the *new* velocity.
        assert_eq!(r.obs[0], 0.1 * PointVelocityEnv::DT);
    }

    #[test]
    fn velocity_saturates_at_v_max() {
        let mut env = PointVelocityEnv::new();
        env.reset(0);
        env.set_state(0.0, 0.0, 0.0, 0.0);
        for _ in 0..100 {
            let r = env.step(&[1.0, 1.0]).unwrap();
            assert!(r.obs[2] <= PointVelocityEnv::V_MAX);
            assert!(r.obs[3] <= PointVelocityEnv::V_MAX);
        }
        // Full thrust beats drag, so the clamp binds.
        let r = env.step(&[1.0, 1.0]).unwrap();
        assert_eq!(r.obs[2], PointVelocityEnv::V_MAX);
    }

    #[test]
    fn reset_jitter_is_bounded_and_deterministic() {
        let mut env = PointVelocityEnv::new();
        let a = env.reset(7);
        let b = env.reset(7);
        assert_eq!(a, b);
        assert_eq!(a[0], 0.0);
        assert_eq!(a[1], 0.0);
        assert!(a[2].abs() <= 0.01 && a[3].abs() <= 0.01);
        let c = env.reset(8);
        assert_ne!(a, c);
    }

    #[test]
    fn episode_ends_exactly_at_t() {
        let mut env = PointVelocityEnv::new();
        env.reset(1);
        for t in 1..=PointVelocityEnv::EPISODE_LEN {
            let r = env.step(&[0.1, 0.0]).unwrap();
            assert_eq!(r.done, t == PointVelocityEnv::EPISODE_LEN);
        }
        assert!(matches!(env.step(&[0.0, 0.0]), Err(EnvError::EpisodeOver)));
    }

    #[test]
    fn rejects_bad_actions() {
        let mut env = PointVelocityEnv::new();
        env.reset(0);
        assert!(matches!(
            env.step(&[0.0]),
            Err(EnvError::ActionDimension { .. })
        ));
        assert!(matches!(
            env.step(&[0.0, f64::NAN]),
            Err(EnvError::NonFiniteAction { index: 1 })
        ));
    }

    #[test]
    fn identity_perturbations_are_bit_identical() {
        let base = PointVelocityEnv::new();
        for p in [
            Perturbation::ActionScale {
                index: 0,
                factor: 1.0,
            },
            Perturbation::DragScale { factor: 1.0 },
            Perturbation::Wall {
                x_position: 0.3,
                gap_halfwidth: 0.0,
            },
        ] {
            let mut a: Box<dyn Environment> = base.clone_env();
            let mut b = base.perturbed(&p).unwrap();
            a.reset(3);
            b.reset(3);
            for k in 0..PointVelocityEnv::EPISODE_LEN {
                let act = [(k as f64 * 0.37).sin(), (k as f64 * 0.11).cos()];
                let ra = a.step(&act).unwrap();
                let rb = b.step(&act).unwrap();
                assert_eq!(ra.obs, rb.obs, "{p:?} diverged at step {k}");
                assert_eq!(ra.reward.to_bits(), rb.reward.to_bits());
            }
        }
    }

    #[test]
    fn zero_action_scale_detaches_the_actuator() {
        let mut env = PointVelocityEnv::new()
            .apply(&Perturbation::ActionScale {
                index: 0,
                factor: 0.0,
            })
            .unwrap();
        env.reset(0);
        env.set_state(0.0, 0.0, 0.0, 0.0);
        // Thrust on x does nothing; with vx = 0 the drag term is zero too,
        // so vx stays exactly zero while vy responds normally.
        let mut r = None;
        for _ in 0..50 {
            r = Some(env.step(&[1.0, 0.3]).unwrap());
        }
        let r = r.unwrap();
        assert_eq!(r.obs[2], 0.0);
        assert!(r.obs[3] > 0.1, "vy should still respond to u[1]");
    }

    #[test]
    fn drag_scale_slows_the_sustained_speed() {
        // With drag k and full thrust the sustained speed is
        // min(v_max, a_max / k); at factor 5 that is 2 / 2.5 = 0.8.
        let mut env = PointVelocityEnv::new()
            .apply(&Perturbation::DragScale { factor: 5.0 })
            .unwrap();
        env.reset(0);
        env.set_state(0.0, 0.0, 0.0, 0.0);
        let mut vx = 0.0;
        for _ in 0..PointVelocityEnv::EPISODE_LEN {
            vx = env.step(&[1.0, 0.0]).unwrap().obs[2];
        }
        assert_relative_eq!(vx, 0.8, max_relative = 1e-6);
    }

    #[test]
    fn wall_blocks_the_straight_path_but_not_the_flanks() {
        let wall = Perturbation::Wall {
            x_position: 0.2,
            gap_halfwidth: 1.0,
        };

        // Straight along +x at y = 0: stopped at the wall, vx zeroed.
        let mut env = PointVelocityEnv::new().apply(&wall).unwrap();
        env.reset(0);
        env.set_state(0.0, 0.0, 0.0, 0.0);
        let mut last = None;
        for _ in 0..100 {
            last = Some(env.step(&[1.0, 0.0]).unwrap());
        }
        let last = last.unwrap();
        assert_eq!(last.obs[0], 0.2);
        assert_eq!(last.obs[2], 0.0);

        // Same push but starting beyond the wall's end (|y| > gap): passes.
        let mut env = PointVelocityEnv::new().apply(&wall).unwrap();
        env.reset(0);
        env.set_state(0.0, 1.5, 0.0, 0.0);
        let mut x = 0.0;
        for _ in 0..100 {
            x = env.step(&[1.0, 0.0]).unwrap().obs[0];
        }
        assert!(x > 0.2, "flank path should clear the wall, got x = {x}");
    }

    #[test]
    fn features_stay_inside_the_skill_box() {
        let mut env = PointVelocityEnv::new();
        let mut rng = crate::seeding::rng(0, "features_box");
        use rand::Rng;
        env.reset(0);
        for _ in 0..PointVelocityEnv::EPISODE_LEN {
            let act = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
            let r = env.step(&act).unwrap();
            for (f, (lo, hi)) in r
                .features
                .iter()
                .zip(env.spec.skill_lo.iter().zip(&env.spec.skill_hi))
            {
                assert!(f >= lo && f <= hi);
            }
            assert!(r.reward.is_finite());
        }
    }
}
