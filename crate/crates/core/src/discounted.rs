//! Discounted-cost solvers: fixed-policy evaluation and the optimality
//! equation on the truncated model.
//!
//! Everything is computed internally in gain/relative form: a policy value
//! is represented as `(u, h)` with `u = alpha * J(0)` and `h(i) = J(i) - J(0)`,
//! `h(0) = 0`. The linear system in these variables stays well conditioned
//! as `alpha` tends to zero, which the vanishing-discount sequence depends
//! on; reconstructing `J(i) = u/alpha + h(i)` is lossless at the accuracy
//! the residual contracts require.
//!
//! The optimality equation is first attacked by Gauss-Seidel sweeps of the
//! uniformized fixed point (contraction modulus `Lambda/(alpha+Lambda)`),
//! then, once the greedy policy stabilizes, polished by exact linear solves
//! of the greedy policy until the greedy policy is a fixed point. The pure
//! sweep iteration alone cannot reach small discount factors within any
//! reasonable iteration budget; the solver contract is the reported
//! Bellman residual.

use serde::{Deserialize, Serialize};

use crate::linalg::{self, BandedLu, SparseMatrix};
use crate::model::{CtmdpModel, StateIndex, StationaryPolicy};
use crate::{Error, Result};

/// Solution of the discounted optimality equation on the truncated model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscountedSolution {
    pub alpha: f64,
    /// Optimal values `J*_alpha(i)`.
    pub values: Vec<f64>,
    /// Greedy policy attaining the per-state minimum (ties to lowest action id).
    pub greedy: StationaryPolicy,
    /// Sup-norm residual of the optimality equation at the returned values.
    pub residual: f64,
    pub iterations: usize,
    /// `alpha * J*(0)`.
    pub gain: f64,
    /// Relative values `J*(i) - J*(0)`; exact zero at index 0.
    pub relative: Vec<f64>,
}

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

/// Uniformization constant of the truncated model: the maximum exit rate
/// over all (state, action) pairs. A truncation-level device only; the
/// denumerable model has unbounded rates.
pub fn uniformization_constant(model: &CtmdpModel) -> f64 {
    model.max_exit_rate()
}

/// Solve `(alpha I - Q) J = c` for a fixed generator/cost pair, returned in
/// gain/relative form `(alpha * J(0), h)`.
pub fn solve_linear_relative(q: &SparseMatrix, c: &[f64], alpha: f64) -> Result<(f64, Vec<f64>)> {
    assert!(alpha > 0.0, "discount factor must be positive");
    let n = q.n();
    assert_eq!(c.len(), n);
    if n == 1 {
        return Ok((c[0], vec![0.0]));
    }
    // Interior block B = alpha I - Q on states 1..n, densely reindexed.
    let b_rows: Vec<Vec<(usize, f64)>> = (1..n)
        .map(|i| {
            let mut row: Vec<(usize, f64)> = q
                .row(i)
                .iter()
                .filter(|&&(j, _)| j >= 1)
                .map(|&(j, v)| (j - 1, -v))
                .collect();
            match row.iter_mut().find(|(j, _)| *j == i - 1) {
                Some((_, v)) => *v += alpha,
                None => row.push((i - 1, alpha)),
            }
            row
        })
        .collect();
    let b = SparseMatrix::from_rows(b_rows);
    let lu = BandedLu::factor(&b)?;
    let ones = vec![1.0; n - 1];
    let w = linalg::solve_refined(&b, &lu, &ones, 3);
    let solve_pair = |rhs_interior: &[f64], rhs0: f64| -> (f64, Vec<f64>) {
        let p = linalg::solve_refined(&b, &lu, rhs_interior, 3);
        // Row 0 of the full system: u + sum_{j!=0} (-q(0,j)) h_j = c_0.
        let mut denom = 1.0;
        let mut numer = rhs0;
        for &(j, v) in q.row(0) {
            if j >= 1 {
                denom += v * w[j - 1];
                numer += v * p[j - 1];
            }
        }
        let u = numer / denom;
        let mut h = Vec::with_capacity(n);
        h.push(0.0);
        for j in 0..n - 1 {
            h.push(p[j] - u * w[j]);
        }
        (u, h)
    };
    let (mut u, mut h) = solve_pair(&c[1..], c[0]);
    // One refinement pass on the full bordered system.
    let residual = |u: f64, h: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let qh: f64 = q.row(i).iter().map(|&(j, v)| v * h[j]).sum();
                c[i] - (u + alpha * h[i] - qh)
            })
            .collect()
    };
    let cscale = 1.0 + c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let r = residual(u, &h);
    let rnorm = r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if rnorm > 1e-13 * cscale {
        let (du, dh) = solve_pair(&r[1..], r[0]);
        u += du;
        for (hi, di) in h.iter_mut().zip(&dh) {
            *hi += di;
        }
    }
    let r = residual(u, &h);
    let rnorm = r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-9 * cscale;
    if rnorm > tol {
        return Err(Error::ResidualTooLarge {
            residual: rnorm,
            tol,
        });
    }
    Ok((u, h))
}

/// Expected discounted cost of a fixed stationary policy, in gain/relative
/// form.
pub fn evaluate_policy_relative(
    model: &CtmdpModel,
    policy: &StationaryPolicy,
    alpha: f64,
) -> Result<(f64, Vec<f64>)> {
    let q = model.induced_generator(policy)?;
    let c = model.cost_vector(policy)?;
    solve_linear_relative(&q, &c, alpha)
}

/// Expected discounted cost `J_alpha(., f)` of a fixed stationary policy.
pub fn evaluate_policy(
    model: &CtmdpModel,
    policy: &StationaryPolicy,
    alpha: f64,
) -> Result<Vec<f64>> {
    let (u, h) = evaluate_policy_relative(model, policy, alpha)?;
    Ok(h.iter().map(|hi| u / alpha + hi).collect())
}

/// Greedy policy from relative (or absolute) values: per state, the action
/// minimizing `c(i,a) + sum_j q(j|i,a) v(j)`, ties to the lowest action id.
pub fn greedy_policy(model: &CtmdpModel, values: &[f64]) -> StationaryPolicy {
    let choice = (0..model.n_states())
        .map(|i| {
            let mut best = (f64::INFINITY, 0);
            for &a in model.actions_at(i) {
                let row = model.row(i, a).expect("action from model");
                let mut v = model.cost(i, a).expect("action from model") + row.diagonal() * values[i];
                for &(j, r) in row.entries() {
                    v += r * values[j];
                }
                if v < best.0 {
                    best = (v, a);
                }
            }
            best.1
        })
        .collect();
    StationaryPolicy::new(choice)
}

/// Bellman expression `min_a { c(i,a) + sum_j q(j|i,a) v(j) }` per state.
pub fn bellman_min(model: &CtmdpModel, values: &[f64]) -> Vec<f64> {
    (0..model.n_states())
        .map(|i| {
            model
                .actions_at(i)
                .iter()
                .map(|&a| {
                    let row = model.row(i, a).expect("action from model");
                    let mut v =
                        model.cost(i, a).expect("action from model") + row.diagonal() * values[i];
                    for &(j, r) in row.entries() {
                        v += r * values[j];
                    }
                    v
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// One Gauss-Seidel sweep of the uniformized fixed point
/// `J(i) <- min_a [c + sum_{j!=i} q J(j) + (Lambda - lambda(i,a)) J(i)] / (alpha + Lambda)`,
/// updating `j` in index order. Returns the sup-norm change.
pub fn bellman_sweep(model: &CtmdpModel, alpha: f64, big_lambda: f64, j: &mut [f64]) -> f64 {
    let mut delta = 0.0f64;
    for i in 0..model.n_states() {
        let mut best = f64::INFINITY;
        for &a in model.actions_at(i) {
            let row = model.row(i, a).expect("action from model");
            let mut v = model.cost(i, a).expect("action from model")
                + (big_lambda - row.exit_rate()) * j[i];
            for &(t, r) in row.entries() {
                v += r * j[t];
            }
            v /= alpha + big_lambda;
            if v < best {
                best = v;
            }
        }
        delta = delta.max((best - j[i]).abs());
        j[i] = best;
    }
    delta
}

fn finish(
    model: &CtmdpModel,
    alpha: f64,
    u: f64,
    h: Vec<f64>,
    greedy: StationaryPolicy,
    iterations: usize,
) -> DiscountedSolution {
    let bm = bellman_min(model, &h);
    let residual = (0..model.n_states())
        .map(|i| (u + alpha * h[i] - bm[i]).abs())
        .fold(0.0f64, f64::max);
    let values = h.iter().map(|hi| u / alpha + hi).collect();
    DiscountedSolution {
        alpha,
        values,
        greedy,
        residual,
        iterations,
        gain: u,
        relative: h,
    }
}

/// Solve the discounted optimality equation.
pub fn solve_optimal(
    model: &CtmdpModel,
    alpha: f64,
    tol: f64,
    max_iter: usize,
) -> Result<DiscountedSolution> {
    solve_optimal_from(model, alpha, tol, max_iter, None)
}

/// As [`solve_optimal`], warm-started from an initial policy guess (used by
/// the vanishing-discount schedule, where the greedy policy of the previous
/// discount factor is usually already optimal).
pub fn solve_optimal_from(
    model: &CtmdpModel,
    alpha: f64,
    tol: f64,
    max_iter: usize,
    init: Option<&StationaryPolicy>,
) -> Result<DiscountedSolution> {
    assert!(alpha > 0.0 && tol > 0.0);
    let n = model.n_states();
    let big_lambda = uniformization_constant(model);
    let mut iterations = 0usize;

    let mut policy = match init {
        Some(p) => {
            p.check_feasible(model)?;
            p.clone()
        }
        None => {
            // Sweep phase from J = 0 until the greedy policy settles.
            let mut j = vec![0.0; n];
            let mut greedy = greedy_policy(model, &j);
            let mut stable = 0;
            loop {
                let delta = bellman_sweep(model, alpha, big_lambda, &mut j);
                iterations += 1;
                let g = greedy_policy(model, &j);
                if g == greedy {
                    stable += 1;
                } else {
                    stable = 0;
                    greedy = g;
                }
                if stable >= 3 || delta <= tol {
                    break;
                }
                if iterations >= max_iter {
                    return Err(Error::MaxIterExceeded {
                        max_iter,
                        residual: delta,
                    });
                }
            }
            greedy
        }
    };

    // Polish: exact solve of the current greedy policy, re-derive the greedy
    // policy from the solved relative values, repeat until it is a fixed point.
    let cap = 500;
    for _ in 0..cap {
        let (u, h) = evaluate_policy_relative(model, &policy, alpha)?;
        iterations += 1;
        let next = greedy_policy(model, &h);
        if next == policy {
            let sol = finish(model, alpha, u, h, policy, iterations);
            let scaled = sol.residual / (alpha + big_lambda);
            if scaled > tol {
                return Err(Error::ResidualTooLarge {
                    residual: scaled,
                    tol,
                });
            }
            return Ok(sol);
        }
        policy = next;
    }
    Err(Error::MaxIterExceeded {
        max_iter: cap,
        residual: f64::NAN,
    })
}

/// Coordinate-wise monotonicity check: returns every pair `(i, j)` with
/// `j = i + e_k` inside the box and `values[j] < values[i] - 1e-9`.
pub fn check_monotone(model: &CtmdpModel, values: &[f64]) -> Vec<(StateIndex, StateIndex)> {
    let mut out = Vec::new();
    for i in 0..model.n_states() {
        let coords = model.state(i).coords();
        for k in 0..coords.len() {
            let mut up = coords.to_vec();
            up[k] += 1;
            if let Some(j) = model.index_of(&crate::model::StateVec(up)) {
                if values[j] < values[i] - 1e-9 {
                    out.push((i, j));
                }
            }
        }
    }
    out
}
