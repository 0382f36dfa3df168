//! One multinomial-NUTS transition: leapfrog integration over a doubling
//! binary tree with the generalized no-U-turn criterion, proposals drawn
//! multinomially by trajectory weight.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::math::log_add_exp;

use super::Target;

const DIVERGENCE_THRESHOLD: f64 = 1000.0;

#[derive(Debug, Clone)]
pub struct State {
    pub q: Vec<f64>,
    pub logp: f64,
    pub grad: Vec<f64>,
}

pub struct Transition {
    pub accept_stat: f64,
    pub divergent: bool,
    pub depth: usize,
}

/// Endpoint of a trajectory: position, momentum, gradient.
#[derive(Clone)]
struct Point {
    q: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
}

struct Tree {
    left: Point,
    right: Point,
    /// Multinomial proposal drawn from this subtree.
    proposal_q: Vec<f64>,
    proposal_logp: f64,
    proposal_grad: Vec<f64>,
    log_weight: f64,
    /// Momentum sum across the subtree (U-turn criterion).
    rho: Vec<f64>,
    sum_accept: f64,
    n_leaves: usize,
    divergent: bool,
    turning: bool,
}

fn kinetic(p: &[f64], inv_mass: &[f64]) -> f64 {
    0.5 * p.iter().zip(inv_mass).map(|(&pi, &im)| pi * pi * im).sum::<f64>()
}

/// Generalized U-turn test: rho against the velocities at both endpoints.
fn is_turning(rho: &[f64], p_left: &[f64], p_right: &[f64], inv_mass: &[f64]) -> bool {
    let mut dot_left = 0.0;
    let mut dot_right = 0.0;
    for j in 0..rho.len() {
        dot_left += rho[j] * p_left[j] * inv_mass[j];
        dot_right += rho[j] * p_right[j] * inv_mass[j];
    }
    !(dot_left.is_finite() && dot_right.is_finite()) || dot_left < 0.0 || dot_right < 0.0
}

/// One leapfrog step from `point` in `direction`; returns the new point and
/// its log density.
fn leapfrog<T: Target>(
    target: &T,
    point: &Point,
    eps: f64,
    direction: f64,
    inv_mass: &[f64],
) -> (Point, f64) {
    let h = eps * direction;
    let dim = point.q.len();
    let mut p = point.p.clone();
    let mut q = point.q.clone();
    for j in 0..dim {
        p[j] += 0.5 * h * point.grad[j];
        q[j] += h * p[j] * inv_mass[j];
    }
    let mut grad = vec![0.0; dim];
    let logp = target.logp_grad(&q, &mut grad);
    if logp.is_finite() {
        for j in 0..dim {
            p[j] += 0.5 * h * grad[j];
        }
    }
    (Point { q, p, grad }, logp)
}

/// Build a subtree of `depth` doublings from `start`, moving in
/// `direction`. `h0` is the Hamiltonian at the trajectory start.
#[allow(clippy::too_many_arguments)]
fn build_tree<T: Target>(
    target: &T,
    start: &Point,
    depth: usize,
    direction: f64,
    h0: f64,
    eps: f64,
    inv_mass: &[f64],
    rng: &mut impl Rng,
) -> Tree {
    if depth == 0 {
        let (point, logp) = leapfrog(target, start, eps, direction, inv_mass);
        let h = -logp + kinetic(&point.p, inv_mass);
        let energy_error = h - h0;
        let divergent = !energy_error.is_finite() || energy_error > DIVERGENCE_THRESHOLD;
        let log_weight = if divergent { f64::NEG_INFINITY } else { -energy_error };
        let accept = if energy_error.is_finite() { (-energy_error).exp().min(1.0) } else { 0.0 };
        return Tree {
            rho: point.p.clone(),
            proposal_q: point.q.clone(),
            proposal_logp: logp,
            proposal_grad: point.grad.clone(),
            left: point.clone(),
            right: point,
            log_weight,
            sum_accept: accept,
            n_leaves: 1,
            divergent,
            turning: false,
        };
    }

    let mut inner = build_tree(target, start, depth - 1, direction, h0, eps, inv_mass, rng);
    if inner.divergent || inner.turning {
        return inner;
    }

    let edge = if direction > 0.0 { inner.right.clone() } else { inner.left.clone() };
    let outer = build_tree(target, &edge, depth - 1, direction, h0, eps, inv_mass, rng);

    // Multinomial proposal swap between the two half-trees.
    let select_outer = (outer.log_weight - log_add_exp(inner.log_weight, outer.log_weight)).exp();
    if rng.random::<f64>() < select_outer {
        inner.proposal_q = outer.proposal_q;
        inner.proposal_logp = outer.proposal_logp;
        inner.proposal_grad = outer.proposal_grad;
    }
    inner.log_weight = log_add_exp(inner.log_weight, outer.log_weight);
    inner.sum_accept += outer.sum_accept;
    inner.n_leaves += outer.n_leaves;
    inner.divergent |= outer.divergent;
    inner.turning |= outer.turning;

    // Cross-subtree U-turn checks (in addition to the merged check below):
    // the boundary momenta of the two half-trees.
    let (rho_in, rho_out) = (inner.rho.clone(), outer.rho.clone());
    let (junction_in, junction_out) = if direction > 0.0 {
        (inner.right.p.clone(), outer.left.p.clone())
    } else {
        (inner.left.p.clone(), outer.right.p.clone())
    };

    for j in 0..inner.rho.len() {
        inner.rho[j] += outer.rho[j];
    }
    if direction > 0.0 {
        inner.right = outer.right;
    } else {
        inner.left = outer.left;
    }

    if !inner.turning {
        let full = is_turning(&inner.rho, &inner.left.p, &inner.right.p, inv_mass);
        let cross1: Vec<f64> =
            rho_in.iter().zip(&junction_out).map(|(a, b)| a + b).collect();
        let cross2: Vec<f64> =
            rho_out.iter().zip(&junction_in).map(|(a, b)| a + b).collect();
        let (t1, t2) = if direction > 0.0 {
            (
                is_turning(&cross1, &inner.left.p, &junction_out, inv_mass),
                is_turning(&cross2, &junction_in, &inner.right.p, inv_mass),
            )
        } else {
            (
                is_turning(&cross1, &junction_out, &inner.right.p, inv_mass),
                is_turning(&cross2, &inner.left.p, &junction_in, inv_mass),
            )
        };
        inner.turning = full || t1 || t2;
    }
    inner
}

/// Run one transition, updating `state` in place.
pub fn transition<T: Target>(
    target: &T,
    state: &mut State,
    eps: f64,
    inv_mass: &[f64],
    max_treedepth: usize,
    rng: &mut impl Rng,
) -> Transition {
    let dim = state.q.len();
    let mut p = vec![0.0; dim];
    for j in 0..dim {
        let z: f64 = rng.sample(StandardNormal);
        p[j] = z / inv_mass[j].sqrt();
    }
    let h0 = -state.logp + kinetic(&p, inv_mass);

    let mut tree = Tree {
        left: Point { q: state.q.clone(), p: p.clone(), grad: state.grad.clone() },
        right: Point { q: state.q.clone(), p: p.clone(), grad: state.grad.clone() },
        proposal_q: state.q.clone(),
        proposal_logp: state.logp,
        proposal_grad: state.grad.clone(),
        log_weight: 0.0,
        rho: p,
        sum_accept: 0.0,
        n_leaves: 0,
        divergent: false,
        turning: false,
    };

    let mut depth = 0;
    while depth < max_treedepth {
        let direction: f64 = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let edge = if direction > 0.0 { tree.right.clone() } else { tree.left.clone() };
        let subtree =
            build_tree(target, &edge, depth, direction, h0, eps, inv_mass, rng);

        let sub_divergent = subtree.divergent;
        let sub_turning = subtree.turning;

        // Progressive sampling, biased toward the new subtree.
        if !sub_divergent && !sub_turning {
            let p_new = (subtree.log_weight - tree.log_weight).exp().min(1.0);
            if rng.random::<f64>() < p_new {
                tree.proposal_q = subtree.proposal_q.clone();
                tree.proposal_logp = subtree.proposal_logp;
                tree.proposal_grad = subtree.proposal_grad.clone();
            }
        }
        tree.log_weight = log_add_exp(tree.log_weight, subtree.log_weight);
        tree.sum_accept += subtree.sum_accept;
        tree.n_leaves += subtree.n_leaves;
        tree.divergent |= sub_divergent;

        // Cross checks between the existing tree and the fresh subtree.
        let rho_existing = tree.rho.clone();
        let (junction_existing, junction_sub) = if direction > 0.0 {
            (tree.right.p.clone(), subtree.left.p.clone())
        } else {
            (tree.left.p.clone(), subtree.right.p.clone())
        };
        for j in 0..tree.rho.len() {
            tree.rho[j] += subtree.rho[j];
        }
        if direction > 0.0 {
            tree.right = subtree.right;
        } else {
            tree.left = subtree.left;
        }
        depth += 1;

        if sub_divergent || sub_turning {
            break;
        }
        let full = is_turning(&tree.rho, &tree.left.p, &tree.right.p, inv_mass);
        let cross1: Vec<f64> =
            rho_existing.iter().zip(&junction_sub).map(|(a, b)| a + b).collect();
        let cross2: Vec<f64> =
            subtree.rho.iter().zip(&junction_existing).map(|(a, b)| a + b).collect();
        let (t1, t2) = if direction > 0.0 {
            (
                is_turning(&cross1, &tree.left.p, &junction_sub, inv_mass),
                is_turning(&cross2, &junction_existing, &tree.right.p, inv_mass),
            )
        } else {
            (
                is_turning(&cross1, &junction_sub, &tree.right.p, inv_mass),
                is_turning(&cross2, &tree.left.p, &junction_existing, inv_mass),
            )
        };
        if full || t1 || t2 {
            break;
        }
    }

    let accept_stat =
        if tree.n_leaves > 0 { tree.sum_accept / tree.n_leaves as f64 } else { 0.0 };

    if tree.proposal_q.iter().all(|v| v.is_finite()) && tree.proposal_logp.is_finite() {
        state.q = tree.proposal_q;
        state.logp = tree.proposal_logp;
        state.grad = tree.proposal_grad;
    }

    Transition { accept_stat: accept_stat.clamp(0.0, 1.0), divergent: tree.divergent, depth }
}
