//! Ring-buffer transition storage and minibatch assembly.
//!
//! Stored as struct-of-arrays so minibatch gathers are cache-friendly and
//! the hot update loop never chases pointers. Transitions carry the skill
//! they were collected under; relabeling appends copies with fresh skills.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// A minibatch in struct-of-arrays layout. Row `i` of each field belongs to
/// the same transition.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub len: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub skill_dim: usize,
    pub feature_dim: usize,
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub skill: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub features: Vec<f64>,
    pub reward: Vec<f64>,
    pub done: Vec<f64>,
}

impl Batch {
    pub fn new(obs_dim: usize, action_dim: usize, skill_dim: usize, feature_dim: usize) -> Self {
        Batch {
            len: 0,
            obs_dim,
            action_dim,
            skill_dim,
            feature_dim,
            ..Default::default()
        }
    }

    pub fn clear(&mut self) {
        self.len = 0;
        self.obs.clear();
        self.action.clear();
        self.skill.clear();
        self.next_obs.clear();
        self.features.clear();
        self.reward.clear();
        self.done.clear();
    }

    pub fn obs(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.action[i * self.action_dim..(i + 1) * self.action_dim]
    }

    pub fn skill(&self, i: usize) -> &[f64] {
        &self.skill[i * self.skill_dim..(i + 1) * self.skill_dim]
    }

    pub fn next_obs(&self, i: usize) -> &[f64] {
        &self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }
}

/// Fixed-capacity uniform-sampling replay buffer.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    action_dim: usize,
    skill_dim: usize,
    feature_dim: usize,
    len: usize,
    head: usize,
    obs: Vec<f64>,
    action: Vec<f64>,
    skill: Vec<f64>,
    next_obs: Vec<f64>,
    features: Vec<f64>,
    reward: Vec<f64>,
    done: Vec<f64>,
}

impl ReplayBuffer {
    pub fn new(
        capacity: usize,
        obs_dim: usize,
        action_dim: usize,
        skill_dim: usize,
        feature_dim: usize,
    ) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            obs_dim,
            action_dim,
            skill_dim,
            feature_dim,
            len: 0,
            head: 0,
            obs: vec![0.0; capacity * obs_dim],
            action: vec![0.0; capacity * action_dim],
            skill: vec![0.0; capacity * skill_dim],
            next_obs: vec![0.0; capacity * obs_dim],
            features: vec![0.0; capacity * feature_dim],
            reward: vec![0.0; capacity],
            done: vec![0.0; capacity],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Insert one transition, overwriting the oldest once full.
    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        obs: &[f64],
        action: &[f64],
        skill: &[f64],
        next_obs: &[f64],
        features: &[f64],
        reward: f64,
        done: bool,
    ) {
        debug_assert_eq!(obs.len(), self.obs_dim);
        debug_assert_eq!(action.len(), self.action_dim);
        debug_assert_eq!(skill.len(), self.skill_dim);
        debug_assert_eq!(next_obs.len(), self.obs_dim);
        debug_assert_eq!(features.len(), self.feature_dim);
        let i = self.head;
        self.obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(obs);
        self.action[i * self.action_dim..(i + 1) * self.action_dim].copy_from_slice(action);
        self.skill[i * self.skill_dim..(i + 1) * self.skill_dim].copy_from_slice(skill);
        self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(next_obs);
        self.features[i * self.feature_dim..(i + 1) * self.feature_dim].copy_from_slice(features);
        self.reward[i] = reward;
        self.done[i] = if done { 1.0 } else { 0.0 };
        self.head = (self.head + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    /// Fill `batch` with `batch_size` transitions sampled uniformly with
    /// replacement from the current contents.
    pub fn sample_into(&self, batch: &mut Batch, batch_size: usize, rng: &mut ChaCha12Rng) {
        assert!(!self.is_empty(), "cannot sample from an empty buffer");
        batch.clear();
        batch.obs_dim = self.obs_dim;
        batch.action_dim = self.action_dim;
        batch.skill_dim = self.skill_dim;
        batch.feature_dim = self.feature_dim;
        for _ in 0..batch_size {
            let i = rng.random_range(0..self.len);
            batch
                .obs
                .extend_from_slice(&self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]);
            batch
                .action
                .extend_from_slice(&self.action[i * self.action_dim..(i + 1) * self.action_dim]);
            batch
                .skill
                .extend_from_slice(&self.skill[i * self.skill_dim..(i + 1) * self.skill_dim]);
            batch
                .next_obs
                .extend_from_slice(&self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim]);
            batch.features.extend_from_slice(
                &self.features[i * self.feature_dim..(i + 1) * self.feature_dim],
            );
            batch.reward.push(self.reward[i]);
            batch.done.push(self.done[i]);
        }
        batch.len = batch_size;
    }
}

/// Append a copy of every transition with its skill resampled uniformly
/// from the box `[lo, hi]`. Rewards and features are untouched — they do
/// not depend on the skill. The original half keeps its exact bytes.
pub fn relabel_batch(batch: &mut Batch, lo: &[f64], hi: &[f64], rng: &mut ChaCha12Rng) {
    debug_assert_eq!(lo.len(), batch.skill_dim);
    debug_assert_eq!(hi.len(), batch.skill_dim);
    let n = batch.len;
    for field in [
        (batch.obs_dim, &mut batch.obs),
        (batch.action_dim, &mut batch.action),
        (batch.obs_dim, &mut batch.next_obs),
        (batch.feature_dim, &mut batch.features),
    ] {
        let (dim, vec) = field;
        vec.extend_from_within(0..n * dim);
    }
    batch.reward.extend_from_within(0..n);
    batch.done.extend_from_within(0..n);
    for _ in 0..n {
        for k in 0..batch.skill_dim {
            batch.skill.push(rng.random_range(lo[k]..=hi[k]));
        }
    }
    batch.len = 2 * n;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;

    fn tiny_buffer() -> ReplayBuffer {
        ReplayBuffer::new(4, 2, 1, 1, 1)
    }

    #[test]
    fn push_grows_then_wraps() {
        let mut buf = tiny_buffer();
        for i in 0..6 {
            let v = i as f64;
            buf.push(&[v, v], &[v], &[v], &[v + 0.5, v + 0.5], &[v], v, false);
            assert_eq!(buf.len(), (i + 1).min(4));
        }
        // After 6 pushes into capacity 4, slots hold transitions 4,5,2,3.
        assert_eq!(buf.reward, vec![4.0, 5.0, 2.0, 3.0]);
    }

    #[test]
    fn sampling_is_uniform_over_contents_and_deterministic() {
        let mut buf = tiny_buffer();
        for i in 0..4 {
            let v = i as f64;
            buf.push(&[v, v], &[v], &[v], &[v, v], &[v], v, false);
        }
        let mut batch = Batch::new(2, 1, 1, 1);
        let mut rng = seeding::rng(3, "test.sample");
        buf.sample_into(&mut batch, 4000, &mut rng);
        assert_eq!(batch.len, 4000);
        let mut counts = [0usize; 4];
        for i in 0..batch.len {
            counts[batch.reward[i] as usize] += 1;
        }
        for &c in &counts {
            assert!(
                (800..1200).contains(&c),
                "uniform sampling expected, got {counts:?}"
            );
        }
        // Determinism: same seed, same draw.
        let mut batch2 = Batch::new(2, 1, 1, 1);
        let mut rng2 = seeding::rng(3, "test.sample");
        buf.sample_into(&mut batch2, 4000, &mut rng2);
        assert_eq!(batch.reward, batch2.reward);
    }

    #[test]
    fn rows_stay_aligned_across_fields() {
        let mut buf = tiny_buffer();
        for i in 0..4 {
            let v = i as f64;
            buf.push(
                &[v, 10.0 + v],
                &[20.0 + v],
                &[30.0 + v],
                &[40.0 + v, 50.0 + v],
                &[60.0 + v],
                v,
                i % 2 == 1,
            );
        }
        let mut batch = Batch::new(2, 1, 1, 1);
        let mut rng = seeding::rng(9, "test.align");
        buf.sample_into(&mut batch, 64, &mut rng);
        for i in 0..batch.len {
            let v = batch.reward[i];
            assert_eq!(batch.obs(i), &[v, 10.0 + v]);
            assert_eq!(batch.action(i), &[20.0 + v]);
            assert_eq!(batch.skill(i), &[30.0 + v]);
            assert_eq!(batch.next_obs(i), &[40.0 + v, 50.0 + v]);
            assert_eq!(batch.features(i), &[60.0 + v]);
            assert_eq!(batch.done[i], (v as usize % 2) as f64);
        }
    }

    #[test]
    fn relabel_doubles_and_preserves_the_original_half() {
        let mut batch = Batch::new(2, 1, 2, 1);
        for i in 0..3 {
            let v = i as f64;
            batch.obs.extend_from_slice(&[v, v]);
            batch.action.push(v);
            batch.skill.extend_from_slice(&[0.1 * v, 0.2 * v]);
            batch.next_obs.extend_from_slice(&[v, v]);
            batch.features.push(v);
            batch.reward.push(v);
            batch.done.push(0.0);
        }
        batch.len = 3;
        let original = batch.clone();
        let mut rng = seeding::rng(4, "test.relabel");
        relabel_batch(&mut batch, &[-1.0, 0.0], &[1.0, 2.0], &mut rng);
        assert_eq!(batch.len, 6);
        assert_eq!(&batch.skill[..6], &original.skill[..]);
        assert_eq!(&batch.obs[..], &[&original.obs[..], &original.obs[..]].concat()[..]);
        assert_eq!(&batch.reward[..3], &batch.reward[3..]);
        for i in 3..6 {
            let z = batch.skill(i);
            assert!((-1.0..=1.0).contains(&z[0]));
            assert!((0.0..=2.0).contains(&z[1]));
        }
    }

    #[test]
    fn relabeled_skills_are_uniform_by_ks_test() {
        // Kolmogorov-Smirnov against U[0,1] on 10^4 relabeled duplicates;
        // the 1% critical value is 1.63 / sqrt(n).
        let n = 10_000;
        let mut batch = Batch::new(1, 1, 1, 1);
        for _ in 0..n {
            batch.obs.push(0.0);
            batch.action.push(0.0);
            batch.skill.push(0.5);
            batch.next_obs.push(0.0);
            batch.features.push(0.0);
            batch.reward.push(0.0);
            batch.done.push(0.0);
        }
        batch.len = n;
        let mut rng = seeding::rng(11, "test.ks");
        relabel_batch(&mut batch, &[0.0], &[1.0], &mut rng);
        let mut z: Vec<f64> = batch.skill[n..].to_vec();
        z.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut d_stat: f64 = 0.0;
        for (i, &v) in z.iter().enumerate() {
            let emp_hi = (i + 1) as f64 / n as f64;
            let emp_lo = i as f64 / n as f64;
            d_stat = d_stat.max((emp_hi - v).abs()).max((v - emp_lo).abs());
        }
        let critical = 1.63 / (n as f64).sqrt();
        assert!(
            d_stat < critical,
            "KS statistic {d_stat} exceeds 1% critical value {critical}"
        );
    }
}
