//! Analysis of the CTMC induced by a stationary policy: stationary
//! distribution, first-passage times and costs, hitting distributions,
//! standard-policy verification and the renewal identities linking the
//! long-run average cost to first-passage quantities and to discounted
//! values.

use std::collections::HashSet;

use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::discounted;
use crate::linalg::{self, BandedLu, SparseMatrix};
use crate::model::{CtmdpModel, StateIndex, StationaryPolicy};
use crate::{Error, Result};

/// First-passage summary to a target set, "at least one transition occurs"
/// convention: entries at target states are mean return quantities.
/// Unreachable entries carry the `f64::INFINITY` sentinel, never a large
/// float, so finiteness verdicts are exact on the truncation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FirstPassageReport {
    pub targets: Vec<StateIndex>,
    /// Expected first-passage (or return) time per start state.
    pub m: Vec<f64>,
    /// Expected accumulated cost over the first passage.
    pub cost: Vec<f64>,
    /// Whether the target set is hit almost surely from each start state.
    pub reachable: Vec<bool>,
}

impl FirstPassageReport {
    pub fn all_finite(&self) -> bool {
        self.m.iter().all(|v| v.is_finite()) && self.cost.iter().all(|v| v.is_finite())
    }
}

/// Stationary distribution of a policy-induced chain, concentrated on its
/// unique closed communicating class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainSummary {
    pub pi: Vec<f64>,
    pub irreducible: bool,
    /// Long-run average cost `sum_j pi_j c(j)`, when a cost vector was supplied.
    pub j_r: Option<f64>,
}

impl ChainSummary {
    pub fn average_cost(&self, c: &[f64]) -> f64 {
        self.pi.iter().zip(c).map(|(p, ci)| p * ci).sum()
    }

    pub fn with_cost(mut self, c: &[f64]) -> Self {
        self.j_r = Some(self.average_cost(c));
        self
    }
}

fn reverse_adjacency(q: &SparseMatrix) -> Vec<Vec<usize>> {
    let mut pred = vec![Vec::new(); q.n()];
    for (i, row) in q.rows().iter().enumerate() {
        for &(j, v) in row {
            if j != i && v > 0.0 {
                pred[j].push(i);
            }
        }
    }
    pred
}

/// States from which some seed is reachable, optionally forbidding paths
/// through `avoid` (seed states themselves are always included).
fn can_reach(
    pred: &[Vec<usize>],
    seeds: impl IntoIterator<Item = usize>,
    avoid: &HashSet<usize>,
) -> Vec<bool> {
    let mut mark = vec![false; pred.len()];
    let mut stack: Vec<usize> = seeds.into_iter().collect();
    for &s in &stack {
        mark[s] = true;
    }
    while let Some(u) = stack.pop() {
        for &p in &pred[u] {
            if !mark[p] && !avoid.contains(&p) {
                mark[p] = true;
                stack.push(p);
            }
        }
    }
    mark
}

/// The closed communicating classes (recurrent classes on the truncation)
/// of a conservative generator, each sorted ascending.
pub fn closed_classes(q: &SparseMatrix) -> Vec<Vec<usize>> {
    let n = q.n();
    let mut g = DiGraph::<(), ()>::new();
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for (i, row) in q.rows().iter().enumerate() {
        for &(j, v) in row {
            if j != i && v > 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let sccs = petgraph::algo::tarjan_scc(&g);
    let mut comp = vec![0usize; n];
    for (k, scc) in sccs.iter().enumerate() {
        for &nd in scc {
            comp[nd.index()] = k;
        }
    }
    let mut closed = Vec::new();
    for (k, scc) in sccs.iter().enumerate() {
        let mut is_closed = true;
        'outer: for &nd in scc {
            let i = nd.index();
            for &(j, v) in q.row(i) {
                if j != i && v > 0.0 && comp[j] != k {
                    is_closed = false;
                    break 'outer;
                }
            }
        }
        if is_closed {
            let mut class: Vec<usize> = scc.iter().map(|nd| nd.index()).collect();
            class.sort_unstable();
            closed.push(class);
        }
    }
    closed.sort();
    closed
}

/// Stationary distribution of the chain with generator `q`.
///
/// Solved through the regenerative-cycle occupation measure around a
/// reference state of the closed class, which keeps every linear system
/// banded and well conditioned. The returned `pi` satisfies
/// `||pi Q||_inf <= 1e-10` and sums to one.
pub fn stationary_distribution(q: &SparseMatrix) -> Result<ChainSummary> {
    let n = q.n();
    let closed = closed_classes(q);
    if closed.len() != 1 {
        return Err(Error::MultipleClosedClasses(closed.len()));
    }
    let class = &closed[0];
    let mut pi = vec![0.0; n];
    if class.len() == 1 {
        pi[class[0]] = 1.0;
    } else {
        let r = class[0];
        let lambda_r = -q.get(r, r);
        let interior: Vec<usize> = class.iter().copied().filter(|&i| i != r).collect();
        let mut pos = vec![usize::MAX; n];
        for (k, &i) in interior.iter().enumerate() {
            pos[i] = k;
        }
        // (-Q) restricted to the class minus the reference state.
        let b_rows: Vec<Vec<(usize, f64)>> = interior
            .iter()
            .map(|&i| {
                q.row(i)
                    .iter()
                    .filter_map(|&(j, v)| (pos[j] != usize::MAX).then(|| (pos[j], -v)))
                    .collect()
            })
            .collect();
        let bt = SparseMatrix::from_rows(b_rows).transpose();
        let mut p0 = vec![0.0; interior.len()];
        for &(j, v) in q.row(r) {
            if pos[j] != usize::MAX {
                p0[pos[j]] = v / lambda_r;
            }
        }
        let nu = linalg::solve(&bt, &p0)?;
        let total = 1.0 / lambda_r + nu.iter().sum::<f64>();
        pi[r] = (1.0 / lambda_r) / total;
        for (k, &i) in interior.iter().enumerate() {
            pi[i] = nu[k] / total;
        }
    }
    let residual = q
        .transpose()
        .mul_vec(&pi)
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    if residual > 1e-10 {
        return Err(Error::ResidualTooLarge {
            residual,
            tol: 1e-10,
        });
    }
    Ok(ChainSummary {
        pi,
        irreducible: class.len() == n,
        j_r: None,
    })
}

/// Expected first-passage time and cost from every state to the target set.
///
/// Off the target set, `m` and `cost` solve `sum_j q(j|i) m(j) = -1` and
/// `sum_j q(j|i) cost(j) = -c(i)` with boundary value 0 on the targets. On
/// the target set the return convention applies: one exponential holding
/// time plus the first-passage values over the embedded jump distribution.
pub fn first_passage(
    q: &SparseMatrix,
    c: &[f64],
    targets: &[StateIndex],
) -> Result<FirstPassageReport> {
    let n = q.n();
    assert_eq!(c.len(), n);
    assert!(!targets.is_empty());
    let tset: HashSet<usize> = targets.iter().copied().collect();
    let pred = reverse_adjacency(q);
    let reach = can_reach(&pred, tset.iter().copied(), &HashSet::new());
    let dead: Vec<usize> = (0..n).filter(|i| !reach[*i]).collect();
    // States that can wander into the no-return region before hitting the
    // targets never hit them almost surely.
    let doomed = if dead.is_empty() {
        vec![false; n]
    } else {
        can_reach(&pred, dead.iter().copied(), &tset)
    };
    let solve_set: Vec<usize> = (0..n)
        .filter(|&i| !tset.contains(&i) && !doomed[i])
        .collect();
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in solve_set.iter().enumerate() {
        pos[i] = k;
    }
    let mut m = vec![f64::INFINITY; n];
    let mut cost = vec![f64::INFINITY; n];
    if !solve_set.is_empty() {
        let b_rows: Vec<Vec<(usize, f64)>> = solve_set
            .iter()
            .map(|&i| {
                q.row(i)
                    .iter()
                    .filter_map(|&(j, v)| (pos[j] != usize::MAX).then(|| (pos[j], -v)))
                    .collect()
            })
            .collect();
        let b = SparseMatrix::from_rows(b_rows);
        let lu = BandedLu::factor(&b)?;
        let ones = vec![1.0; solve_set.len()];
        let cs: Vec<f64> = solve_set.iter().map(|&i| c[i]).collect();
        let msol = linalg::solve_refined(&b, &lu, &ones, 3);
        let csol = linalg::solve_refined(&b, &lu, &cs, 3);
        for (k, &i) in solve_set.iter().enumerate() {
            m[i] = msol[k];
            cost[i] = csol[k];
        }
    }
    // Return convention at the targets.
    for &t in targets {
        let lambda = -q.get(t, t);
        if lambda <= 0.0 {
            continue; // absorbing target never completes a transition
        }
        let mut mt = 1.0 / lambda;
        let mut ct = c[t] / lambda;
        for &(j, v) in q.row(t) {
            if j != t && v > 0.0 && !tset.contains(&j) {
                mt += v / lambda * m[j];
                ct += v / lambda * cost[j];
            }
        }
        m[t] = mt;
        cost[t] = ct;
    }
    let reachable = m.iter().map(|v| v.is_finite()).collect();
    Ok(FirstPassageReport {
        targets: targets.to_vec(),
        m,
        cost,
        reachable,
    })
}

/// Verdict for the standard-policy condition at `i0`: finite expected
/// first-passage time *and* cost from every state, return state included.
pub fn check_standard(
    model: &CtmdpModel,
    policy: &StationaryPolicy,
    i0: StateIndex,
) -> Result<(bool, FirstPassageReport)> {
    let q = model.induced_generator(policy)?;
    let c = model.cost_vector(policy)?;
    let report = first_passage(&q, &c, &[i0])?;
    let verdict = report.all_finite();
    Ok((verdict, report))
}

/// Renewal-identity evidence for a fixed policy: the long-run average cost
/// against the cycle ratio `cost_{i,i}/m_{i,i}` at probe states and against
/// `alpha * sum_i pi_i J_alpha(i)` for each supplied discount factor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenewalReport {
    pub j_r: f64,
    /// `(probe state, cycle ratio, absolute deviation)`.
    pub probe_checks: Vec<(StateIndex, f64, f64)>,
    /// `(alpha, stationary-weighted discounted value, absolute deviation)`.
    pub alpha_checks: Vec<(f64, f64, f64)>,
    pub tol: f64,
    pub pass: bool,
}

pub fn renewal_identities(
    model: &CtmdpModel,
    policy: &StationaryPolicy,
    i0: StateIndex,
    alphas: &[f64],
) -> Result<RenewalReport> {
    let q = model.induced_generator(policy)?;
    let c = model.cost_vector(policy)?;
    let summary = stationary_distribution(&q)?;
    let j_r = summary.average_cost(&c);
    let tol = 1e-6 * (1.0 + j_r);

    // Probe states ordered by stationary mass. States below 1e-8 mass have
    // return times around 1e8 or more; the cycle quantities for those are
    // dominated by rounding and say nothing about the identity.
    let mut class: Vec<usize> = (0..model.n_states())
        .filter(|&i| summary.pi[i] >= 1e-8)
        .collect();
    class.sort_by(|&a, &b| summary.pi[b].total_cmp(&summary.pi[a]));
    let mut probes = vec![i0];
    for cand in [class[(class.len() - 1) / 2], *class.last().unwrap()] {
        if !probes.contains(&cand) {
            probes.push(cand);
        }
    }
    let mut k = 0;
    while probes.len() < 3 && k < class.len() {
        if !probes.contains(&class[k]) {
            probes.push(class[k]);
        }
        k += 1;
    }

    let mut pass = true;
    let mut probe_checks = Vec::new();
    for &i in &probes {
        let rep = first_passage(&q, &c, &[i])?;
        let ratio = rep.cost[i] / rep.m[i];
        let dev = (j_r - ratio).abs();
        pass &= dev <= tol;
        probe_checks.push((i, ratio, dev));
    }

    let mut alpha_checks = Vec::new();
    for &alpha in alphas {
        let (u, h) = discounted::solve_linear_relative(&q, &c, alpha)?;
        // alpha * sum_i pi_i J_alpha(i) = u + alpha * sum_i pi_i h(i),
        // since pi sums to one.
        let weighted = u + alpha * summary.pi.iter().zip(&h).map(|(p, hi)| p * hi).sum::<f64>();
        let dev = (j_r - weighted).abs();
        pass &= dev <= tol;
        alpha_checks.push((alpha, weighted, dev));
    }

    Ok(RenewalReport {
        j_r,
        probe_checks,
        alpha_checks,
        tol,
        pass,
    })
}

/// Distribution of the chain's location at the moment it first enters `G`,
/// starting from `start`. Returned probabilities align with `targets` and
/// sum to one within 1e-10.
pub fn hitting_distribution(
    q: &SparseMatrix,
    start: StateIndex,
    targets: &[StateIndex],
) -> Result<Vec<f64>> {
    let n = q.n();
    assert!(!targets.is_empty());
    let tset: HashSet<usize> = targets.iter().copied().collect();
    if tset.contains(&start) {
        return Ok(targets.iter().map(|&t| if t == start { 1.0 } else { 0.0 }).collect());
    }
    let pred = reverse_adjacency(q);
    let reach = can_reach(&pred, tset.iter().copied(), &HashSet::new());
    if !reach[start] {
        return Err(Error::Unreachable(start));
    }
    let dead: Vec<usize> = (0..n).filter(|i| !reach[*i]).collect();
    let doomed = if dead.is_empty() {
        vec![false; n]
    } else {
        can_reach(&pred, dead.iter().copied(), &tset)
    };
    if doomed[start] {
        return Err(Error::Unreachable(start));
    }
    let solve_set: Vec<usize> = (0..n)
        .filter(|&i| !tset.contains(&i) && !doomed[i])
        .collect();
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in solve_set.iter().enumerate() {
        pos[i] = k;
    }
    let b_rows: Vec<Vec<(usize, f64)>> = solve_set
        .iter()
        .map(|&i| {
            q.row(i)
                .iter()
                .filter_map(|&(j, v)| (pos[j] != usize::MAX).then(|| (pos[j], -v)))
                .collect()
        })
        .collect();
    let b = SparseMatrix::from_rows(b_rows);
    let lu = BandedLu::factor(&b)?;
    let mut probs = Vec::with_capacity(targets.len());
    for &t in targets {
        let rhs: Vec<f64> = solve_set.iter().map(|&i| q.get(i, t).max(0.0)).collect();
        let sol = linalg::solve_refined(&b, &lu, &rhs, 3);
        probs.push(sol[pos[start]]);
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::ResidualTooLarge {
            residual: (total - 1.0).abs(),
            tol: 1e-10,
        });
    }
    Ok(probs)
}
