//! Finite-difference verification of every analytic gradient in the crate.
//!
//! Two kinds of check run side by side:
//!
//! 1. **Network shape families** (`actor`, `q`, `psi`, `lagrange`): random
//!    architectures of each head's shape, random inputs and upstream
//!    weights; the reverse pass's parameter *and* input gradients of
//!    `<upstream, f(x)>` are compared against central differences.
//! 2. **Loss families** (`q_loss`, `sf_loss`, `xi_loss`, `lagrange_loss`,
//!    `actor_loss`, `temperature_loss`): tiny random networks plus a random
//!    minibatch; the gradient each loss reports for its trained head is
//!    compared against central differences of the scalar loss. The fresh
//!    action noise inside each loss is a fixed function of the case seed,
//!    so the loss is a deterministic, almost-everywhere-smooth function of
//!    the parameters and central differences are well defined.
//!
//! Central differences are evaluated on a ladder of step sizes
//! (1e-5, 1e-6, 1e-7), keeping the best match per coordinate. At a smooth
//! point the first step already agrees to O(h^2) and the rest are skipped;
//! when a ReLU or `min(q1, q2)` kink happens to sit inside the +/-h bracket
//! the smaller steps shrink the bracket past it and recover the one-sided
//! slope that the analytic gradient reports. A genuinely wrong gradient
//! disagrees at every step size, so the ladder cannot mask real bugs.

use rand::Rng;

use crate::agent::losses::{
    actor_loss, lagrange_loss, q_loss, sf_loss, temperature_loss, xi_loss, Workspace,
};
use crate::agent::{Batch, Mode, QdacNetworks};
use crate::approx::{Activation, Mlp, MlpSpec, OutputActivation};
use crate::seeding;

/// Relative-error tolerance for critic heads and scalar losses.
pub const TOL_DEFAULT: f64 = 1e-4;
/// Looser tolerance for the actor's end-to-end gradient, which chains
/// through every critic and the squashed-Gaussian reparameterization.
pub const TOL_ACTOR: f64 = 1e-3;

/// Step-size ladder for central differences (see module docs).
const STEPS: [f64; 3] = [1e-5, 1e-6, 1e-7];

/// Outcome of one randomized case.
#[derive(Debug, Clone)]
pub struct GradcheckCase {
    pub family: &'static str,
    pub case: usize,
    /// Worst relative error over every checked coordinate.
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// All family names, in report order.
pub const FAMILIES: [&str; 10] = [
    "actor",
    "q",
    "psi",
    "lagrange",
    "q_loss",
    "sf_loss",
    "xi_loss",
    "lagrange_loss",
    "actor_loss",
    "temperature_loss",
];

/// `|fd - analytic|` scaled by the larger magnitude, floored so that
/// near-zero gradients are compared absolutely.
fn rel_err(fd: f64, analytic: f64) -> f64 {
    (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-3)
}

/// Worst relative error between `analytic` and central differences of
/// `eval` over coordinates `0..count` of some parameter vector, accessed
/// through `read`/`write` so the same routine serves flat MLP parameters,
/// raw input vectors, and the temperature scalar.
fn fd_max_rel_err<T>(
    obj: &mut T,
    count: usize,
    read: impl Fn(&T, usize) -> f64,
    write: impl Fn(&mut T, usize, f64),
    mut eval: impl FnMut(&T) -> f64,
    analytic: &[f64],
    tol: f64,
) -> f64 {
    assert_eq!(analytic.len(), count);
    let mut worst = 0.0f64;
    for i in 0..count {
        let v0 = read(obj, i);
        let mut best = f64::INFINITY;
        for &h in &STEPS {
            write(obj, i, v0 + h);
            let up = eval(obj);
            write(obj, i, v0 - h);
            let down = eval(obj);
            write(obj, i, v0);
            let fd = (up - down) / (2.0 * h);
            best = best.min(rel_err(fd, analytic[i]));
            // The first step suffices at smooth coordinates; escalate only
            // when it looks like a kink sits inside the bracket.
            if best <= 0.25 * tol {
                break;
            }
        }
        worst = worst.max(best);
    }
    worst
}

/// One network-shape case: random architecture, parameters, input, and
/// upstream weights; checks parameter and input gradients together.
fn run_mlp_case(family: &'static str, case: usize, seed: u64) -> GradcheckCase {
    let mut rng = seeding::rng_indexed(seed, &format!("gradcheck.{family}"), case as u64);
    let obs_dim = rng.random_range(2..=4usize);
    let feature_dim = rng.random_range(1..=3usize);
    let action_dim = rng.random_range(1..=3usize);
    let (input_dim, output_dim) = match family {
        "actor" => (obs_dim + feature_dim, 2 * action_dim),
        "q" => (obs_dim + action_dim + feature_dim, 1),
        "psi" => (obs_dim + action_dim + feature_dim, feature_dim),
        "lagrange" => (obs_dim + feature_dim, 1),
        other => unreachable!("not an MLP family: {other}"),
    };
    let mut sizes = vec![input_dim];
    for _ in 0..rng.random_range(1..=2usize) {
        sizes.push(rng.random_range(3..=6usize));
    }
    sizes.push(output_dim);
    // Production heads are ReLU + linear; cycling the other activations
    // through the same families keeps every backward branch covered.
    let hidden = if case % 2 == 0 { Activation::Relu } else { Activation::Tanh };
    let output = if case % 4 < 2 { OutputActivation::Linear } else { OutputActivation::Sigmoid };
    let spec = MlpSpec::new(sizes, hidden, output).expect("widths are nonzero");
    let mut mlp = Mlp::init(spec, rng.random::<u64>());
    // Fresh init keeps biases at exactly zero, which parks deeper ReLU
    // units exactly on their kink whenever every input unit is dead; a
    // finite difference is meaningless at a nondifferentiable point, so
    // jitter all parameters to a generic position first.
    for p in mlp.params_mut() {
        *p += rng.random_range(-0.1..0.1);
    }

    let input: Vec<f64> = (0..input_dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    let upstream: Vec<f64> = (0..output_dim).map(|_| rng.random_range(-1.0..1.0)).collect();

    let (param_grad, input_grad) = mlp.backward(&input, &upstream);
    let weighted = |m: &Mlp, x: &[f64]| -> f64 {
        m.forward(x).iter().zip(&upstream).map(|(y, u)| y * u).sum()
    };

    let n = mlp.spec().param_count();
    let err_params = fd_max_rel_err(
        &mut mlp,
        n,
        |m, i| m.params()[i],
        |m, i, v| m.params_mut()[i] = v,
        |m| weighted(m, &input),
        &param_grad,
        TOL_DEFAULT,
    );
    let mut input_vec = input.clone();
    let err_input = fd_max_rel_err(
        &mut input_vec,
        input_dim,
        |x, i| x[i],
        |x, i, v| x[i] = v,
        |x| weighted(&mlp, x),
        &input_grad,
        TOL_DEFAULT,
    );

    let max_rel_err = err_params.max(err_input);
    GradcheckCase {
        family,
        case,
        max_rel_err,
        tolerance: TOL_DEFAULT,
        pass: max_rel_err < TOL_DEFAULT,
    }
}

/// Ingredients shared by every loss-family case.
struct LossCase {
    nets: QdacNetworks,
    batch: Batch,
    gamma: f64,
    noise_seed: u64,
}

fn make_loss_case(family: &str, case: usize, seed: u64) -> LossCase {
    let mut rng = seeding::rng_indexed(seed, &format!("gradcheck.{family}"), case as u64);
    let obs_dim = rng.random_range(2..=3usize);
    let action_dim = rng.random_range(1..=2usize);
    let feature_dim = rng.random_range(1..=2usize);
    let hidden = [rng.random_range(3..=5usize), rng.random_range(3..=5usize)];
    let init_temperature = rng.random_range(0.1..0.5);
    let mut nets = QdacNetworks::new(
        obs_dim,
        action_dim,
        feature_dim,
        &hidden,
        rng.random::<u64>(),
        init_temperature,
    )
    .expect("small dims are valid");
    // Jitter every head away from the fresh init: zero biases park deeper
    // ReLU units exactly on their kink (where finite differences are
    // meaningless), and independent target noise makes bootstrap terms
    // generic rather than mirrored.
    for head in [
        &mut nets.actor,
        &mut nets.q1,
        &mut nets.q2,
        &mut nets.q1_target,
        &mut nets.q2_target,
        &mut nets.psi,
        &mut nets.psi_target,
        &mut nets.xi,
        &mut nets.xi_target,
        &mut nets.lagrange,
    ] {
        for p in head.params_mut() {
            *p += rng.random_range(-0.1..0.1);
        }
    }

    let len = 3;
    let mut batch = Batch::new(obs_dim, action_dim, feature_dim, feature_dim);
    for i in 0..len {
        for _ in 0..obs_dim {
            batch.obs.push(rng.random_range(-1.0..1.0));
        }
        for _ in 0..action_dim {
            batch.action.push(rng.random_range(-0.95..0.95));
        }
        for _ in 0..feature_dim {
            batch.skill.push(rng.random_range(-1.0..1.0));
        }
        for _ in 0..obs_dim {
            batch.next_obs.push(rng.random_range(-1.0..1.0));
        }
        for _ in 0..feature_dim {
            batch.features.push(rng.random_range(-1.0..1.0));
        }
        batch.reward.push(rng.random_range(-1.0..1.0));
        batch.done.push(if i == len - 1 { 1.0 } else { 0.0 });
    }
    batch.len = len;

    LossCase {
        nets,
        batch,
        gamma: rng.random_range(0.9..0.99),
        noise_seed: rng.random::<u64>(),
    }
}

/// Which head an MLP-parameter FD sweep should perturb.
#[derive(Clone, Copy)]
enum Head {
    Q1,
    Q2,
    Psi,
    Xi,
    Lagrange,
    Actor,
}

fn head_mut(nets: &mut QdacNetworks, head: Head) -> &mut Mlp {
    match head {
        Head::Q1 => &mut nets.q1,
        Head::Q2 => &mut nets.q2,
        Head::Psi => &mut nets.psi,
        Head::Xi => &mut nets.xi,
        Head::Lagrange => &mut nets.lagrange,
        Head::Actor => &mut nets.actor,
    }
}

fn head_ref(nets: &QdacNetworks, head: Head) -> &Mlp {
    match head {
        Head::Q1 => &nets.q1,
        Head::Q2 => &nets.q2,
        Head::Psi => &nets.psi,
        Head::Xi => &nets.xi,
        Head::Lagrange => &nets.lagrange,
        Head::Actor => &nets.actor,
    }
}

/// FD sweep of one head's parameters against the analytic gradient the
/// loss reported for it.
fn check_head(
    case: &mut LossCase,
    head: Head,
    analytic: &[f64],
    mut eval: impl FnMut(&QdacNetworks, &Batch, f64, u64) -> f64,
    tol: f64,
) -> f64 {
    let count = head_ref(&case.nets, head).spec().param_count();
    let (gamma, noise_seed) = (case.gamma, case.noise_seed);
    // The batch is untouched by parameter nudges; split it out so the
    // closure can borrow it while `fd_max_rel_err` mutates the networks.
    let batch = case.batch.clone();
    fd_max_rel_err(
        &mut case.nets,
        count,
        move |n, i| head_ref(n, head).params()[i],
        move |n, i, v| head_mut(n, head).params_mut()[i] = v,
        |n| eval(n, &batch, gamma, noise_seed),
        analytic,
        tol,
    )
}

fn run_loss_case(family: &'static str, case: usize, seed: u64) -> GradcheckCase {
    let mut lc = make_loss_case(family, case, seed);
    let mut ws = Workspace::new(&lc.nets);
    let mut g1 = Vec::new();
    let mut g2 = Vec::new();
    let tol = if family == "actor_loss" { TOL_ACTOR } else { TOL_DEFAULT };

    let max_rel_err = match family {
        "q_loss" => {
            q_loss(&lc.nets, &lc.batch, lc.gamma, lc.noise_seed, &mut ws, &mut g1, &mut g2);
            let (a1, a2) = (g1.clone(), g2.clone());
            let e1 = check_head(
                &mut lc,
                Head::Q1,
                &a1,
                |n, b, g, s| q_loss(n, b, g, s, &mut ws, &mut g1, &mut g2).loss,
                tol,
            );
            let e2 = check_head(
                &mut lc,
                Head::Q2,
                &a2,
                |n, b, g, s| q_loss(n, b, g, s, &mut ws, &mut g1, &mut g2).loss,
                tol,
            );
            e1.max(e2)
        }
        "sf_loss" => {
            sf_loss(&lc.nets, &lc.batch, lc.gamma, lc.noise_seed, &mut ws, &mut g1);
            let analytic = g1.clone();
            check_head(
                &mut lc,
                Head::Psi,
                &analytic,
                |n, b, g, s| sf_loss(n, b, g, s, &mut ws, &mut g1).loss,
                tol,
            )
        }
        "xi_loss" => {
            xi_loss(&lc.nets, &lc.batch, lc.gamma, lc.noise_seed, &mut ws, &mut g1);
            let analytic = g1.clone();
            check_head(
                &mut lc,
                Head::Xi,
                &analytic,
                |n, b, g, s| xi_loss(n, b, g, s, &mut ws, &mut g1).loss,
                tol,
            )
        }
        "lagrange_loss" => {
            // The constraint label depends only on the frozen estimate
            // nets, so any slack and either critic flavor FD-checks.
            let delta = 0.1 + 0.2 * (case % 4) as f64;
            let use_xi = case % 2 == 1;
            lagrange_loss(
                &lc.nets, &lc.batch, lc.gamma, delta, use_xi, lc.noise_seed, &mut ws, &mut g1,
            );
            let analytic = g1.clone();
            check_head(
                &mut lc,
                Head::Lagrange,
                &analytic,
                |n, b, g, s| {
                    lagrange_loss(n, b, g, delta, use_xi, s, &mut ws, &mut g1).loss
                },
                tol,
            )
        }
        "actor_loss" => {
            let mode = match case % 5 {
                0 => Mode::Qdac,
                1 => Mode::NoSf,
                2 => Mode::FixedLambda(0.5),
                3 => Mode::Uvfa(0.66),
                _ => Mode::PlainSac,
            };
            actor_loss(&lc.nets, &lc.batch, mode, lc.gamma, lc.noise_seed, &mut ws, &mut g1);
            let analytic = g1.clone();
            check_head(
                &mut lc,
                Head::Actor,
                &analytic,
                |n, b, g, s| actor_loss(n, b, mode, g, s, &mut ws, &mut g1).loss,
                tol,
            )
        }
        "temperature_loss" => {
            let target_entropy = -(lc.nets.action_dim as f64);
            let info = temperature_loss(&lc.nets, &lc.batch, target_entropy, lc.noise_seed, &mut ws);
            let batch = lc.batch.clone();
            let noise_seed = lc.noise_seed;
            fd_max_rel_err(
                &mut lc.nets,
                1,
                |n, _| n.log_temperature,
                |n, _, v| n.log_temperature = v,
                |n| temperature_loss(n, &batch, target_entropy, noise_seed, &mut ws).loss,
                &[info.grad],
                tol,
            )
        }
        other => unreachable!("not a loss family: {other}"),
    };

    GradcheckCase {
        family,
        case,
        max_rel_err,
        tolerance: tol,
        pass: max_rel_err < tol,
    }
}

/// Run every family for `cases_per_family` randomized cases each.
pub fn run_gradcheck(seed: u64, cases_per_family: usize) -> Vec<GradcheckCase> {
    let mut out = Vec::with_capacity(FAMILIES.len() * cases_per_family);
    for family in FAMILIES {
        for case in 0..cases_per_family {
            let result = match family {
                "actor" | "q" | "psi" | "lagrange" => run_mlp_case(family, case, seed),
                _ => run_loss_case(family, case, seed),
            };
            out.push(result);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rel_err_is_scale_aware() {
        assert_eq!(rel_err(2.0, 2.0), 0.0);
        assert!((rel_err(2.0, 1.0) - 0.5).abs() < 1e-15);
        // Tiny absolute disagreements near zero use the floor.
        assert!(rel_err(1e-9, 0.0) < 1e-5);
    }

    #[test]
    fn fd_harness_matches_a_quadratic_exactly_enough() {
        // f(x) = x0^2 + 3 x0 x1, gradient (2 x0 + 3 x1, 3 x0) at (1.5, -0.5).
        let mut x = vec![1.5, -0.5];
        let analytic = [2.0 * 1.5 + 3.0 * -0.5, 3.0 * 1.5];
        let err = fd_max_rel_err(
            &mut x,
            2,
            |x, i| x[i],
            |x, i, v| x[i] = v,
            |x| x[0] * x[0] + 3.0 * x[0] * x[1],
            &analytic,
            TOL_DEFAULT,
        );
        assert!(err < 1e-8, "quadratic FD error {err}");
    }

    #[test]
    fn fd_harness_catches_a_wrong_gradient() {
        let mut x = vec![1.0];
        // True derivative of x^2 at 1 is 2; claim 2.1.
        let err = fd_max_rel_err(
            &mut x,
            1,
            |x, i| x[i],
            |x, i, v| x[i] = v,
            |x| x[0] * x[0],
            &[2.1],
            TOL_DEFAULT,
        );
        assert!(err > 0.04, "sabotaged gradient must be flagged, got {err}");
    }

    #[test]
    fn fd_harness_restores_parameters() {
        let mut x = vec![0.123456789, -9.87];
        let orig = x.clone();
        let _ = fd_max_rel_err(
            &mut x,
            2,
            |x, i| x[i],
            |x, i, v| x[i] = v,
            |x| x.iter().sum(),
            &[1.0, 1.0],
            TOL_DEFAULT,
        );
        assert_eq!(x, orig, "FD sweep must leave parameters bit-identical");
    }

    #[test]
    fn mlp_families_pass_a_small_sweep() {
        for family in ["actor", "q", "psi", "lagrange"] {
            for case in 0..8 {
                let r = run_mlp_case(family, case, 0);
                assert!(
                    r.pass,
                    "{family} case {case}: rel err {} >= {}",
                    r.max_rel_err, r.tolerance
                );
            }
        }
    }

    #[test]
    fn loss_families_pass_a_small_sweep() {
        for family in ["q_loss", "sf_loss", "xi_loss", "lagrange_loss", "actor_loss", "temperature_loss"] {
            for case in 0..8 {
                let r = run_loss_case(family, case, 0);
                assert!(
                    r.pass,
                    "{family} case {case}: rel err {} >= {}",
                    r.max_rel_err, r.tolerance
                );
            }
        }
    }

    #[test]
    fn sabotaged_analytic_gradients_fail_a_loss_check() {
        // Corrupt the reported gradient and make sure check_head notices;
        // this guards the harness itself against vacuous passes.
        let mut lc = make_loss_case("sf_loss", 0, 0);
        let mut ws = Workspace::new(&lc.nets);
        let mut g = Vec::new();
        sf_loss(&lc.nets, &lc.batch, lc.gamma, lc.noise_seed, &mut ws, &mut g);
        let mut corrupted = g.clone();
        // Scale a coordinate with a clearly nonzero gradient.
        let idx = corrupted
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap();
        corrupted[idx] *= 1.5;
        let err = check_head(
            &mut lc,
            Head::Psi,
            &corrupted,
            |n, b, gm, s| sf_loss(n, b, gm, s, &mut ws, &mut g).loss,
            TOL_DEFAULT,
        );
        assert!(err > 0.2, "corrupted gradient slipped through: {err}");
    }

    #[test]
    fn full_run_is_deterministic() {
        let a = run_gradcheck(3, 2);
        let b = run_gradcheck(3, 2);
        assert_eq!(a.len(), FAMILIES.len() * 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.family, y.family);
            assert_eq!(x.case, y.case);
            assert_eq!(x.max_rel_err.to_bits(), y.max_rel_err.to_bits());
        }
    }
}
