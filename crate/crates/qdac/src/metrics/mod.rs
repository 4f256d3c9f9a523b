//! Quality-diversity evaluation.
//!
//! A trained policy is judged on two axes: how *faithfully* it executes a
//! commanded skill (the distance between the commanded skill and the
//! episode's observed feature average) and how *well* it performs while
//! doing so (undiscounted return). This module evaluates a policy over a
//! lattice of skills and aggregates the per-skill records into profiles,
//! scalar scores, and inter-quartile means with bootstrap confidence
//! intervals. The observed skill is always recomputed from raw episode
//! features — never read off a critic, which is an estimator, not ground
//! truth.

use std::io::{self, Write};

use rand::Rng;
use thiserror::Error;

use crate::envs::{EnvError, EnvSpec, Environment};
use crate::policy::SkillPolicy;
use crate::seeding;

/// Default lattice resolution per skill dimension.
pub const DEFAULT_POINTS_PER_DIM: usize = 21;
/// Hard cap on the total number of lattice points; the per-dimension
/// resolution shrinks until the lattice fits.
pub const MAX_GRID_POINTS: usize = 441;
/// Default number of evaluation episodes per skill.
pub const DEFAULT_N_ROLLOUTS: usize = 10;
/// Default number of bootstrap resamples for confidence intervals.
pub const DEFAULT_N_BOOT: usize = 2000;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("confidence interval needs at least 2 replications, got {0}")]
    TooFewReplications(usize),
}

/// A regular lattice of skill vectors covering a skill box.
///
/// Points are stored in row-major order (first dimension slowest, last
/// fastest), so the ordering is a pure function of the box and the
/// resolution. Construction shrinks the per-dimension resolution until the
/// total point count fits under [`MAX_GRID_POINTS`].
#[derive(Debug, Clone, PartialEq)]
pub struct SkillGrid {
    dim: usize,
    points_per_dim: usize,
    /// Flattened points, `len = points_per_dim^dim * dim`.
    points: Vec<f64>,
}

/// Total lattice size `r^dim` without overflow.
fn lattice_total(r: usize, dim: usize) -> usize {
    let mut total = 1usize;
    for _ in 0..dim {
        total = total.saturating_mul(r);
    }
    total
}

impl SkillGrid {
    /// Lattice over the box `[lo, hi]` with at most `points_per_dim` points
    /// per dimension, shrunk until the total fits under
    /// [`MAX_GRID_POINTS`]. A dimension with a single point sits at the box
    /// center.
    pub fn new(lo: &[f64], hi: &[f64], points_per_dim: usize) -> SkillGrid {
        assert_eq!(lo.len(), hi.len(), "skill box bounds must match");
        assert!(!lo.is_empty(), "skill box must have at least one dimension");
        assert!(points_per_dim >= 1, "need at least one point per dimension");
        let dim = lo.len();
        let mut r = points_per_dim;
        while r > 1 && lattice_total(r, dim) > MAX_GRID_POINTS {
            r -= 1;
        }
        let total = lattice_total(r, dim);

        // Per-dimension coordinates as exact convex combinations of the
        // bounds, so both endpoints are hit exactly.
        let coord = |k: usize, j: usize| -> f64 {
            if r == 1 {
                return 0.5 * (lo[k] + hi[k]);
            }
            let t = (r - 1 - j) as f64;
            let s = j as f64;
            ((t * lo[k] + s * hi[k]) / (r - 1) as f64).clamp(lo[k], hi[k])
        };

        let mut points = Vec::with_capacity(total * dim);
        for i in 0..total {
            for k in 0..dim {
                let stride = lattice_total(r, dim - 1 - k);
                points.push(coord(k, (i / stride) % r));
            }
        }
        SkillGrid {
            dim,
            points_per_dim: r,
            points,
        }
    }

    /// Lattice over an environment's skill box.
    pub fn for_spec(spec: &EnvSpec, points_per_dim: usize) -> SkillGrid {
        SkillGrid::new(&spec.skill_lo, &spec.skill_hi, points_per_dim)
    }

    /// Number of lattice points.
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Skill-space dimensionality.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Resolution actually used per dimension (after capping).
    pub fn points_per_dim(&self) -> usize {
        self.points_per_dim
    }

    /// The `i`-th lattice point.
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }
}

/// Evaluation outcome for one commanded skill: the mean distance between
/// the commanded and observed skill and the mean undiscounted return, both
/// averaged over exactly `n_rollouts` independent episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    /// Commanded skill.
    pub z: Vec<f64>,
    /// Mean over rollouts of `‖observed − z‖₂`, where `observed` is the
    /// per-episode average of the step features.
    pub d: f64,
    /// Mean undiscounted return over the same rollouts.
    pub r: f64,
    /// Number of episodes behind the two means.
    pub n_rollouts: usize,
}

/// Run `n_rollouts` episodes of `policy` commanded with skill `z` and
/// average the distance-to-skill and the undiscounted return.
///
/// Each rollout runs on a fresh clone of `env` reset with a seed derived
/// from `(seed, rollout index)`, so records are a pure function of
/// `(policy, env, z, n_rollouts, seed)`.
pub fn evaluate_skill(
    policy: &dyn SkillPolicy,
    env: &dyn Environment,
    z: &[f64],
    n_rollouts: usize,
    seed: u64,
) -> Result<EvalRecord, EnvError> {
    assert!(n_rollouts >= 1, "need at least one rollout");
    let feature_dim = env.spec().feature_dim;
    assert_eq!(z.len(), feature_dim, "skill and feature dimensions differ");

    let rollout_tag = seeding::tag("metrics.rollout");
    let mut dist_sum = 0.0;
    let mut return_sum = 0.0;
    let mut feature_sum = vec![0.0; feature_dim];
    for rollout in 0..n_rollouts {
        let mut episode = env.clone_env();
        let mut obs = episode.reset(seeding::derive_indexed(seed, rollout_tag, rollout as u64));
        feature_sum.fill(0.0);
        let mut episode_return = 0.0;
        let mut steps = 0usize;
        loop {
            let action = policy.action(&obs, z);
            let result = episode.step(&action)?;
            for (sum, f) in feature_sum.iter_mut().zip(&result.features) {
                *sum += f;
            }
            episode_return += result.reward;
            steps += 1;
            obs = result.obs;
            if result.done {
                break;
            }
        }
        let t = steps as f64;
        dist_sum += feature_sum
            .iter()
            .zip(z)
            .map(|(sum, zk)| {
                let e = sum / t - zk;
                e * e
            })
            .sum::<f64>()
            .sqrt();
        return_sum += episode_return;
    }
    let n = n_rollouts as f64;
    Ok(EvalRecord {
        z: z.to_vec(),
        d: dist_sum / n,
        r: return_sum / n,
        n_rollouts,
    })
}

/// Evaluate every lattice point of `grid`, deriving one independent seed
/// per skill from `(seed, skill index)`.
pub fn evaluate_grid(
    policy: &dyn SkillPolicy,
    env: &dyn Environment,
    grid: &SkillGrid,
    n_rollouts: usize,
    seed: u64,
) -> Result<Vec<EvalRecord>, EnvError> {
    let skill_tag = seeding::tag("metrics.skill");
    let mut records = Vec::with_capacity(grid.len());
    for (i, z) in grid.iter().enumerate() {
        let skill_seed = seeding::derive_indexed(seed, skill_tag, i as u64);
        records.push(evaluate_skill(policy, env, z, n_rollouts, skill_seed)?);
    }
    Ok(records)
}

/// Fraction of skills whose expected distance is *strictly* below each
/// query threshold: `curve[j] = (1/N_z) Σᵢ 1(dᵢ < d_grid[j])`.
/// Non-decreasing in the threshold, valued in `[0, 1]`.
pub fn distance_profile(records: &[EvalRecord], d_grid: &[f64]) -> Vec<f64> {
    assert!(!records.is_empty(), "distance_profile needs records");
    let n = records.len() as f64;
    d_grid
        .iter()
        .map(|&d| records.iter().filter(|rec| rec.d < d).count() as f64 / n)
        .collect()
}

/// Fraction of skills that both pass the distance filter and *strictly*
/// exceed each return threshold:
/// `curve[j] = (1/N_z) Σᵢ 1(dᵢ < d_eval ∧ Rᵢ > r_grid[j])`.
///
/// The denominator is the full skill count `N_z`, not the filtered count,
/// so a policy that executes few skills is penalized even at low return
/// thresholds.
pub fn performance_profile(records: &[EvalRecord], d_eval: f64, r_grid: &[f64]) -> Vec<f64> {
    assert!(!records.is_empty(), "performance_profile needs records");
    let n = records.len() as f64;
    r_grid
        .iter()
        .map(|&q| {
            records
                .iter()
                .filter(|rec| rec.d < d_eval && rec.r > q)
                .count() as f64
                / n
        })
        .collect()
}

/// Scalar summaries of a record set:
/// `distance_score = (1/N_z) Σᵢ −dᵢ` (never positive) and
/// `performance_score = (1/N_z) Σᵢ Rᵢ·1(dᵢ < d_eval)`.
pub fn scores(records: &[EvalRecord], d_eval: f64) -> (f64, f64) {
    assert!(!records.is_empty(), "scores needs records");
    let n = records.len() as f64;
    let distance_score = records.iter().map(|rec| -rec.d).sum::<f64>() / n;
    let performance_score = records
        .iter()
        .filter(|rec| rec.d < d_eval)
        .map(|rec| rec.r)
        .sum::<f64>()
        / n;
    (distance_score, performance_score)
}

/// Inter-quartile mean: drop the lowest and highest `⌊n/4⌋` values and
/// average the rest.
pub fn iqm(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "iqm needs at least one value");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let trim = sorted.len() / 4;
    let kept = &sorted[trim..sorted.len() - trim];
    kept.iter().sum::<f64>() / kept.len() as f64
}

/// An IQM point estimate with a percentile-bootstrap confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IqmCi {
    pub iqm: f64,
    /// 2.5th percentile of the bootstrap IQM distribution.
    pub lo: f64,
    /// 97.5th percentile of the bootstrap IQM distribution.
    pub hi: f64,
}

/// IQM of per-replication values with a 95% percentile-bootstrap
/// confidence interval: `n_boot` resamples (with replacement, seeded),
/// IQM of each, then the 2.5th and 97.5th percentiles of those statistics.
pub fn iqm_ci(values: &[f64], n_boot: usize, seed: u64) -> Result<IqmCi, MetricsError> {
    if values.len() < 2 {
        return Err(MetricsError::TooFewReplications(values.len()));
    }
    assert!(n_boot >= 1, "need at least one bootstrap resample");
    let point = iqm(values);
    let mut rng = seeding::rng(seed, "metrics.bootstrap");
    let n = values.len();
    let mut resample = vec![0.0; n];
    let mut stats = Vec::with_capacity(n_boot);
    for _ in 0..n_boot {
        for slot in resample.iter_mut() {
            *slot = values[rng.random_range(0..n)];
        }
        stats.push(iqm(&resample));
    }
    stats.sort_by(f64::total_cmp);
    Ok(IqmCi {
        iqm: point,
        lo: percentile(&stats, 0.025),
        hi: percentile(&stats, 0.975),
    })
}

/// Linear-interpolation percentile on an already-sorted slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let i = h.floor() as usize;
    let frac = h - i as f64;
    if frac == 0.0 || i + 1 == sorted.len() {
        sorted[i]
    } else {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    }
}

/// Write one CSV row per record: the skill coordinates, the expected
/// distance, and the expected return. Floats carry 17 significant digits
/// so the file round-trips bit-exactly.
pub fn write_records_csv<W: Write>(w: &mut W, records: &[EvalRecord]) -> io::Result<()> {
    let dim = match records.first() {
        Some(rec) => rec.z.len(),
        None => return Ok(()),
    };
    for k in 1..=dim {
        write!(w, "z{k},")?;
    }
    writeln!(w, "d,R")?;
    for rec in records {
        for zk in &rec.z {
            write!(w, "{zk:.16e},")?;
        }
        writeln!(w, "{:.16e},{:.16e}", rec.d, rec.r)?;
    }
    Ok(())
}

/// Write a profile curve as a two-column CSV (`threshold, fraction`).
pub fn write_profile_csv<W: Write>(
    w: &mut W,
    threshold_name: &str,
    thresholds: &[f64],
    fractions: &[f64],
) -> io::Result<()> {
    assert_eq!(thresholds.len(), fractions.len());
    writeln!(w, "{threshold_name},fraction")?;
    for (t, f) in thresholds.iter().zip(fractions) {
        writeln!(w, "{t:.16e},{f:.16e}")?;
    }
    Ok(())
}

/// Heatmap export for 2-D skill spaces: one row per record with columns
/// `z1, z2, neg_d, R` where the return cell is left *empty* for skills the
/// policy failed to execute (`d ≥ d_eval`), so a plot of the file shows at
/// a glance which skills were reached.
pub fn write_heatmap_csv<W: Write>(
    w: &mut W,
    records: &[EvalRecord],
    d_eval: f64,
) -> io::Result<()> {
    writeln!(w, "z1,z2,neg_d,R")?;
    for rec in records {
        assert_eq!(rec.z.len(), 2, "heatmap export needs 2-D skills");
        write!(w, "{:.16e},{:.16e},{:.16e},", rec.z[0], rec.z[1], -rec.d)?;
        if rec.d < d_eval {
            writeln!(w, "{:.16e}", rec.r)?;
        } else {
            writeln!(w)?;
        }
    }
    Ok(())
}
