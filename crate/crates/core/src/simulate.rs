//! Monte Carlo cross-validation of the analytic solvers.
//!
//! Trajectories of the policy-induced chain are simulated with exponential
//! holding times. Replication `r` draws from an independent counter-based
//! RNG stream derived from the user seed, so estimates are bit-identical
//! for a given `(seed, n_reps)` regardless of how replications are split
//! across threads.

use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::SparseMatrix;
use crate::model::{CtmdpModel, StateIndex, StationaryPolicy};
use crate::{Error, Result};

/// Point estimate with a normal-approximation 95% confidence interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationEstimate {
    pub mean: f64,
    pub half_width_95: f64,
    pub n_reps: usize,
    pub seed: u64,
    /// Replications discarded (event cap hit before the stopping condition).
    pub discarded: usize,
}

fn summarize(samples: &[f64], seed: u64, discarded: usize) -> SimulationEstimate {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    SimulationEstimate {
        mean,
        half_width_95: 1.96 * (var / n as f64).sqrt(),
        n_reps: n,
        seed,
        discarded,
    }
}

fn rep_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

fn exp_sample(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let u: f64 = rng.gen();
    -(-u).ln_1p() / rate
}

/// One jump of the chain from state `i`: holding time and next state, or
/// `None` when `i` is absorbing.
fn step(q: &SparseMatrix, i: usize, rng: &mut ChaCha8Rng) -> Option<(f64, usize)> {
    let row = q.row(i);
    let exit: f64 = row.iter().filter(|&&(j, _)| j != i).map(|&(_, v)| v).sum();
    if exit <= 0.0 {
        return None;
    }
    let dt = exp_sample(rng, exit);
    let mut u = rng.gen::<f64>() * exit;
    let mut next = i;
    for &(j, v) in row {
        if j == i {
            continue;
        }
        next = j;
        if u < v {
            break;
        }
        u -= v;
    }
    Some((dt, next))
}

/// Run `n_reps` replications of `body` (indexed by replication number)
/// split across `threads` workers. The per-replication values come back in
/// replication order, so the reduction is independent of the split.
fn run_reps<F>(n_reps: usize, threads: usize, body: F) -> Vec<f64>
where
    F: Fn(u64) -> f64 + Sync,
{
    let threads = threads.max(1).min(n_reps.max(1));
    if threads == 1 {
        return (0..n_reps as u64).map(&body).collect();
    }
    let mut out = vec![0.0; n_reps];
    let chunk = n_reps.div_ceil(threads);
    thread::scope(|s| {
        let mut slices: Vec<&mut [f64]> = out.chunks_mut(chunk).collect();
        for (t, slice) in slices.drain(..).enumerate() {
            let body = &body;
            s.spawn(move || {
                for (k, v) in slice.iter_mut().enumerate() {
                    *v = body((t * chunk + k) as u64);
                }
            });
        }
    });
    out
}

/// Lump costs charged on specific jumps, with a matching adjustment that
/// removes the rate-folded equivalent from the running cost rate. Used to
/// check that event-based and rate-based accounting of the same charges
/// agree in long-run average.
#[derive(Debug, Clone)]
pub struct LumpCosts {
    /// Per origin state: `(target, lump)` pairs.
    pub per_jump: Vec<Vec<(StateIndex, f64)>>,
    /// Per origin state: amount subtracted from the cost rate.
    pub rate_adjust: Vec<f64>,
}

/// Lump-cost view of the upgrade charges in the two-queue model: pay
/// `c_transfer` per upgrade jump instead of the folded rate term. Both
/// accountings have the same expected cost on the truncated chain.
pub fn upgrade_lump_costs(
    model: &CtmdpModel,
    c_transfer: f64,
    lambda_t: f64,
) -> Result<LumpCosts> {
    if model.truncation().kind != "upgrade-queue" {
        return Err(Error::ModelShape(
            "lump upgrade costs require the two-queue upgrade model".into(),
        ));
    }
    let upper = model.truncation().upper[1];
    let n = model.n_states();
    let mut per_jump = vec![Vec::new(); n];
    let mut rate_adjust = vec![0.0; n];
    for i in 0..n {
        let c = model.state(i).coords();
        let (q1, q2) = (c[0], c[1]);
        if q1 >= 1 && q2 < upper {
            let target = model
                .index_of(&crate::model::StateVec(vec![q1 - 1, q2 + 1]))
                .expect("upgrade target inside the box");
            per_jump[i].push((target, c_transfer));
            rate_adjust[i] = c_transfer * q1 as f64 * lambda_t;
        }
    }
    Ok(LumpCosts {
        per_jump,
        rate_adjust,
    })
}

/// Estimate the long-run average cost of a stationary policy from
/// time-averages over `[0, horizon]`, one trajectory per replication.
pub fn simulate_average_cost(
    model: &CtmdpModel,
    policy: &StationaryPolicy,
    start: StateIndex,
    horizon: f64,
    n_reps: usize,
    seed: u64,
    threads: usize,
) -> Result<SimulationEstimate> {
    simulate_average_cost_impl(model, policy, start, horizon, n_reps, seed, threads, None)
}

/// As [`simulate_average_cost`], charging the supplied lump costs on jumps
/// and removing their rate-folded counterpart from the cost rate.
pub fn simulate_average_cost_with_lumps(
    model: &CtmdpModel,
    policy: &StationaryPolicy,
    start: StateIndex,
    horizon: f64,
    n_reps: usize,
    seed: u64,
    threads: usize,
    lumps: &LumpCosts,
) -> Result<SimulationEstimate> {
    simulate_average_cost_impl(
        model,
        policy,
        start,
        horizon,
        n_reps,
        seed,
        threads,
        Some(lumps),
    )
}

#[allow(clippy::too_many_arguments)]
fn simulate_average_cost_impl(
    model: &CtmdpModel,
    policy: &StationaryPolicy,
    start: StateIndex,
    horizon: f64,
    n_reps: usize,
    seed: u64,
    threads: usize,
    lumps: Option<&LumpCosts>,
) -> Result<SimulationEstimate> {
    if !(horizon > 0.0) || n_reps == 0 || start >= model.n_states() {
        return Err(Error::InvalidParams(
            "need horizon > 0, n_reps > 0 and a valid start state".into(),
        ));
    }
    let q = model.induced_generator(policy)?;
    let mut c = model.cost_vector(policy)?;
    if let Some(l) = lumps {
        for (ci, adj) in c.iter_mut().zip(&l.rate_adjust) {
            *ci -= adj;
        }
    }
    let samples = run_reps(n_reps, threads, |rep| {
        let mut rng = rep_rng(seed, rep);
        let mut i = start;
        let mut t = 0.0;
        let mut total = 0.0;
        while t < horizon {
            match step(&q, i, &mut rng) {
                Some((dt, next)) => {
                    let dt_clipped = dt.min(horizon - t);
                    total += c[i] * dt_clipped;
                    t += dt;
                    if t < horizon {
                        if let Some(l) = lumps {
                            for &(tgt, lump) in &l.per_jump[i] {
                                if tgt == next {
                                    total += lump;
                                }
                            }
                        }
                    }
                    i = next;
                }
                None => {
                    total += c[i] * (horizon - t);
                    break;
                }
            }
        }
        total / horizon
    });
    Ok(summarize(&samples, seed, 0))
}

/// Estimate the expected discounted cost of a stationary policy from
/// `start`. Each sojourn contributes its discounted integral in closed
/// form; the trajectory stops once the discount weight drops below 1e-12.
pub fn simulate_discounted_cost(
    model: &CtmdpModel,
    policy: &StationaryPolicy,
    alpha: f64,
    start: StateIndex,
    n_reps: usize,
    seed: u64,
    threads: usize,
) -> Result<SimulationEstimate> {
    if !(alpha > 0.0) || n_reps == 0 || start >= model.n_states() {
        return Err(Error::InvalidParams(
            "need alpha > 0, n_reps > 0 and a valid start state".into(),
        ));
    }
    let q = model.induced_generator(policy)?;
    let c = model.cost_vector(policy)?;
    let t_cut = -(1e-12f64).ln() / alpha;
    let samples = run_reps(n_reps, threads, |rep| {
        let mut rng = rep_rng(seed, rep);
        let mut i = start;
        let mut t = 0.0;
        let mut total = 0.0;
        while t < t_cut {
            match step(&q, i, &mut rng) {
                Some((dt, next)) => {
                    total += c[i] / alpha * ((-alpha * t).exp() - (-alpha * (t + dt)).exp());
                    t += dt;
                    i = next;
                }
                None => {
                    total += c[i] / alpha * (-alpha * t).exp();
                    break;
                }
            }
        }
        total
    });
    Ok(summarize(&samples, seed, 0))
}

/// Event cap per replication for first-passage runs.
const EVENT_CAP: usize = 100_000_000;

/// Estimate expected first-passage time and accumulated cost from `start`
/// to `targets` under a stationary policy. When `start` is itself a target
/// this is the return time (at least one jump is always taken).
/// Replications that hit the event cap are discarded and counted.
pub fn simulate_first_passage(
    model: &CtmdpModel,
    policy: &StationaryPolicy,
    start: StateIndex,
    targets: &[StateIndex],
    n_reps: usize,
    seed: u64,
    threads: usize,
) -> Result<(SimulationEstimate, SimulationEstimate)> {
    if n_reps == 0 || targets.is_empty() || start >= model.n_states() {
        return Err(Error::InvalidParams(
            "need n_reps > 0, a nonempty target set and a valid start state".into(),
        ));
    }
    let q = model.induced_generator(policy)?;
    let c = model.cost_vector(policy)?;
    let is_target = {
        let mut v = vec![false; model.n_states()];
        for &t in targets {
            v[t] = true;
        }
        v
    };
    // (time, cost) per replication; NaN marks a discarded replication. The
    // thread split mirrors run_reps so the stream layout is identical.
    let mut times = Vec::with_capacity(n_reps);
    let mut costs = Vec::with_capacity(n_reps);
    let mut discarded = 0usize;
    let results: Vec<(f64, f64)> = {
        let threads = threads.max(1).min(n_reps);
        let mut out = vec![(f64::NAN, f64::NAN); n_reps];
        let chunk = n_reps.div_ceil(threads);
        let body = |rep: u64| -> (f64, f64) {
            let mut rng = rep_rng(seed, rep);
            let mut i = start;
            let mut t = 0.0;
            let mut cost = 0.0;
            for _ in 0..EVENT_CAP {
                match step(&q, i, &mut rng) {
                    Some((dt, next)) => {
                        t += dt;
                        cost += c[i] * dt;
                        i = next;
                        if is_target[i] {
                            return (t, cost);
                        }
                    }
                    None => return (f64::NAN, f64::NAN),
                }
            }
            (f64::NAN, f64::NAN)
        };
        thread::scope(|s| {
            let mut slices: Vec<&mut [(f64, f64)]> = out.chunks_mut(chunk).collect();
            for (tix, slice) in slices.drain(..).enumerate() {
                let body = &body;
                s.spawn(move || {
                    for (k, v) in slice.iter_mut().enumerate() {
                        *v = body((tix * chunk + k) as u64);
                    }
                });
            }
        });
        out
    };
    for (t, cst) in results {
        if t.is_nan() {
            discarded += 1;
        } else {
            times.push(t);
            costs.push(cst);
        }
    }
    if times.is_empty() {
        return Err(Error::Unreachable(start));
    }
    Ok((
        summarize(&times, seed, discarded),
        summarize(&costs, seed, discarded),
    ))
}
