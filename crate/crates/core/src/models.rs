//! Built-in model constructors: the single-server two-buffer upgrade queue,
//! its priority-service (PS) policy and geometric Lyapunov function, and an
//! M/M/1 birth-death chain used as a closed-form test oracle.

use serde::{Deserialize, Serialize};

use crate::model::{
    ActionId, CtmdpModel, GeneratorRow, StateIndex, StateVec, StationaryPolicy, TruncationMeta,
};
use crate::{Error, Result};

pub const ACTION_IDLE: ActionId = 0;
pub const ACTION_SERVE_1: ActionId = 1;
pub const ACTION_SERVE_2: ActionId = 2;

/// Parameters of the upgrade queue: two Poisson arrival streams, a single
/// exponential server, and waiting type-1 customers that upgrade to type 2
/// at per-customer rate `lambda_t`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct UpgradeQueueParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub lambda_t: f64,
    /// Holding cost per type-1 customer per unit time.
    pub h1: f64,
    /// Holding cost per type-2 customer per unit time.
    pub h2: f64,
    /// Cost per upgraded customer.
    pub c_transfer: f64,
    /// Truncation bound per queue (states are `0 <= q_i <= n`).
    pub n: u32,
}

impl UpgradeQueueParams {
    pub fn validate(&self) -> Result<()> {
        let rates = [self.lambda1, self.lambda2, self.mu1, self.mu2, self.lambda_t];
        if rates.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::InvalidParams(
                "all rates must be strictly positive".into(),
            ));
        }
        if !(self.h1 >= 0.0 && self.h2 >= 0.0 && self.c_transfer >= 0.0) {
            return Err(Error::InvalidParams("costs must be nonnegative".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidParams("truncation bound n must be >= 2".into()));
        }
        Ok(())
    }

    /// Stability hypothesis for the geometric Lyapunov construction:
    /// total arrival rate below the slower service rate.
    pub fn stable(&self) -> bool {
        self.lambda1 + self.lambda2 < self.mu1.min(self.mu2)
    }

    /// Cost rate `c(q) = h1 q1 + h2 q2 + c lambda_t q1` (upgrade cost folded
    /// into the rate-weighted running cost).
    pub fn cost_rate(&self, q1: u32, q2: u32) -> f64 {
        self.h1 * q1 as f64 + self.h2 * q2 as f64 + self.c_transfer * self.lambda_t * q1 as f64
    }
}

/// A nonnegative Lyapunov function on the model's states together with the
/// finite exception set where the drift inequality is not required.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LyapunovSpec {
    /// Per-state value of the function `r`.
    pub values: Vec<f64>,
    /// The finite exception set `H*` (state indices).
    pub hstar: Vec<StateIndex>,
    /// `(K, r1, r2)` when generated from the geometric family `K r1^q1 r2^q2`.
    pub params: Option<(f64, f64, f64)>,
}

fn row_major_index(q1: u32, q2: u32, n: u32) -> StateIndex {
    (q1 * (n + 1) + q2) as usize
}

/// Build the truncated upgrade-queue CTMDP on the box `0 <= q1, q2 <= n`.
///
/// Action sets: idle only at (0,0); serve queue 1 when it is the only
/// nonempty queue; serve queue 2 when queue 1 is empty; both otherwise.
/// Transitions leaving the box are blocked (deleted, diagonal recomputed).
/// Arrivals occur in every state, including (0,0) under the idle action;
/// an absorbing empty state would make the chain reducible.
pub fn build_upgrade_queue(params: &UpgradeQueueParams) -> Result<CtmdpModel> {
    params.validate()?;
    let n = params.n;
    let side = n + 1;
    let n_states = (side * side) as usize;
    let mut states = Vec::with_capacity(n_states);
    let mut actions = Vec::with_capacity(n_states);
    let mut rows = Vec::with_capacity(n_states);
    let mut costs = Vec::with_capacity(n_states);

    for q1 in 0..=n {
        for q2 in 0..=n {
            states.push(StateVec(vec![q1, q2]));
            let acts: Vec<ActionId> = match (q1, q2) {
                (0, 0) => vec![ACTION_IDLE],
                (_, 0) => vec![ACTION_SERVE_1],
                (0, _) => vec![ACTION_SERVE_2],
                _ => vec![ACTION_SERVE_1, ACTION_SERVE_2],
            };
            let cost = params.cost_rate(q1, q2);
            let mut state_rows = Vec::with_capacity(acts.len());
            for &a in &acts {
                let mut entries: Vec<(StateIndex, f64)> = Vec::with_capacity(4);
                // Service completion.
                match a {
                    ACTION_SERVE_1 => {
                        entries.push((row_major_index(q1 - 1, q2, n), params.mu1));
                    }
                    ACTION_SERVE_2 => {
                        entries.push((row_major_index(q1, q2 - 1, n), params.mu2));
                    }
                    _ => {}
                }
                // Arrivals, blocked at the truncation edge.
                if q1 < n {
                    entries.push((row_major_index(q1 + 1, q2, n), params.lambda1));
                }
                if q2 < n {
                    entries.push((row_major_index(q1, q2 + 1, n), params.lambda2));
                }
                // Upgrade of a waiting type-1 customer, rate q1 * lambda_t.
                if q1 > 0 && q2 < n {
                    entries.push((row_major_index(q1 - 1, q2 + 1, n), q1 as f64 * params.lambda_t));
                }
                state_rows.push(GeneratorRow::new(entries));
            }
            costs.push(vec![cost; acts.len()]);
            actions.push(acts);
            rows.push(state_rows);
        }
    }

    CtmdpModel::new(
        states,
        actions,
        rows,
        costs,
        TruncationMeta {
            upper: vec![n, n],
            rule: "arrival-blocking".into(),
            kind: "upgrade-queue".into(),
        },
    )
}

/// The priority-service policy: serve queue 2 whenever it is nonempty,
/// else queue 1, else idle.
pub fn ps_policy(model: &CtmdpModel) -> Result<StationaryPolicy> {
    if model.truncation().kind != "upgrade-queue" {
        return Err(Error::ModelShape(
            "ps_policy requires an upgrade-queue model".into(),
        ));
    }
    let choice = model
        .states()
        .iter()
        .map(|s| match (s.coords()[0], s.coords()[1]) {
            (0, 0) => ACTION_IDLE,
            (_, 0) => ACTION_SERVE_1,
            _ => ACTION_SERVE_2,
        })
        .collect();
    Ok(StationaryPolicy::new(choice))
}

/// Geometric Lyapunov function `r(q) = K r1^(q1+q2)` with `H* = {(0,0)}`
/// for the stable upgrade queue.
///
/// `r1` sits at the midpoint of `(1, min(mu1,mu2)/(lambda1+lambda2))`, which
/// makes the per-event drift margin
/// `delta = (min(mu)/r1 - lambda1 - lambda2)(r1 - 1)` strictly positive.
/// `K` is sized so that both `K(r1-1) > max(h1 + c*lambda_t, h2)` and the
/// linear-in-queue-length cost is dominated by `K(r1-1) delta (q1+q2)`,
/// with a 1.05 safety factor against floating-point slack at the boundary.
pub fn geometric_lyapunov(params: &UpgradeQueueParams, model: &CtmdpModel) -> Result<LyapunovSpec> {
    params.validate()?;
    if !params.stable() {
        return Err(Error::InvalidParams(
            "stability condition violated: lambda1 + lambda2 must be < min(mu1, mu2)".into(),
        ));
    }
    let (_, r1, delta, kcoef) = geometric_lyapunov_constants(params);
    let values = model
        .states()
        .iter()
        .map(|s| {
            let total = (s.coords()[0] + s.coords()[1]) as f64;
            kcoef * r1.powf(total)
        })
        .collect();
    debug_assert!(delta > 0.0);
    Ok(LyapunovSpec {
        values,
        hstar: vec![0],
        params: Some((kcoef, r1, r1)),
    })
}

/// `(ratio, r1, delta, K)` for the geometric family.
pub fn geometric_lyapunov_constants(params: &UpgradeQueueParams) -> (f64, f64, f64, f64) {
    let mu = params.mu1.min(params.mu2);
    let ratio = mu / (params.lambda1 + params.lambda2);
    let r1 = (1.0 + ratio) / 2.0;
    let delta = (mu / r1 - params.lambda1 - params.lambda2) * (r1 - 1.0);
    let slope = (params.h1 + params.c_transfer * params.lambda_t).max(params.h2);
    let k = 1.05 * (1.0 + slope / ((r1 - 1.0) * delta));
    (ratio, r1, delta, k)
}

/// Drift of the geometric Lyapunov function on the untruncated state space,
/// under the PS action choice at `(q1, q2)`. Used to report how much the
/// arrival-blocking truncation perturbs the drift at edge states.
pub fn upgrade_queue_untruncated_drift(
    params: &UpgradeQueueParams,
    spec: &LyapunovSpec,
    q1: u32,
    q2: u32,
) -> Result<f64> {
    let (k, r1, r2) = spec
        .params
        .ok_or_else(|| Error::InvalidParams("spec is not from the geometric family".into()))?;
    let r = k * r1.powi(q1 as i32) * r2.powi(q2 as i32);
    let service = if q2 > 0 {
        params.mu2 * (1.0 / r2 - 1.0)
    } else if q1 > 0 {
        params.mu1 * (1.0 / r1 - 1.0)
    } else {
        0.0
    };
    let bracket = service
        + params.lambda1 * (r1 - 1.0)
        + params.lambda2 * (r2 - 1.0)
        + q1 as f64 * params.lambda_t * (r2 / r1 - 1.0);
    Ok(params.cost_rate(q1, q2) + r * bracket)
}

/// Truncated M/M/1 birth-death chain on `{0..n}` with a single action per
/// state and cost rate `h * n`. Closed-form oracle model for tests.
pub fn build_mm1(lambda: f64, mu: f64, h: f64, n: u32) -> Result<CtmdpModel> {
    if !(lambda > 0.0 && mu > 0.0) {
        return Err(Error::InvalidParams("lambda and mu must be positive".into()));
    }
    let n_states = (n + 1) as usize;
    let mut states = Vec::with_capacity(n_states);
    let mut rows = Vec::with_capacity(n_states);
    let mut costs = Vec::with_capacity(n_states);
    for q in 0..=n {
        states.push(StateVec(vec![q]));
        let mut entries = Vec::with_capacity(2);
        if q < n {
            entries.push((q as usize + 1, lambda));
        }
        if q > 0 {
            entries.push((q as usize - 1, mu));
        }
        rows.push(vec![GeneratorRow::new(entries)]);
        costs.push(vec![h * q as f64]);
    }
    CtmdpModel::new(
        states,
        vec![vec![0]; n_states],
        rows,
        costs,
        TruncationMeta {
            upper: vec![n],
            rule: "arrival-blocking".into(),
            kind: "mm1".into(),
        },
    )
}

/// The unique policy of a single-action-per-state model.
pub fn only_policy(model: &CtmdpModel) -> Result<StationaryPolicy> {
    let choice = (0..model.n_states())
        .map(|i| {
            let acts = model.actions_at(i);
            if acts.len() == 1 {
                Ok(acts[0])
            } else {
                Err(Error::ModelShape(format!(
                    "state {i} has {} actions, expected exactly one",
                    acts.len()
                )))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StationaryPolicy::new(choice))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> UpgradeQueueParams {
        UpgradeQueueParams {
            lambda1: 0.3,
            lambda2: 0.3,
            mu1: 1.0,
            mu2: 1.0,
            lambda_t: 0.2,
            h1: 1.0,
            h2: 2.0,
            c_transfer: 1.0,
            n: 8,
        }
    }

    #[test]
    fn upgrade_queue_validates_clean() {
        let m = build_upgrade_queue(&params()).unwrap();
        assert!(m.validate().is_empty());
        assert_eq!(m.n_states(), 81);
        // Reference state is index 0.
        assert_eq!(m.state(0).coords(), &[0, 0]);
    }

    #[test]
    fn empty_state_has_arrivals() {
        let m = build_upgrade_queue(&params()).unwrap();
        let row = m.row(0, ACTION_IDLE).unwrap();
        let to_10 = m.index_of(&StateVec(vec![1, 0])).unwrap();
        let to_01 = m.index_of(&StateVec(vec![0, 1])).unwrap();
        let rates: std::collections::HashMap<usize, f64> =
            row.entries().iter().copied().collect();
        assert_eq!(rates[&to_10], 0.3);
        assert_eq!(rates[&to_01], 0.3);
        assert_eq!(row.diagonal(), -0.6);
    }

    #[test]
    fn upgrade_rate_scales_with_queue1() {
        let p = params();
        let m = build_upgrade_queue(&p).unwrap();
        let i = m.index_of(&StateVec(vec![3, 2])).unwrap();
        let row = m.row(i, ACTION_SERVE_1).unwrap();
        let j = m.index_of(&StateVec(vec![2, 3])).unwrap();
        let rate = row
            .entries()
            .iter()
            .find(|&&(t, _)| t == j)
            .map(|&(_, r)| r)
            .unwrap();
        assert!((rate - 3.0 * p.lambda_t).abs() < 1e-15);
    }

    #[test]
    fn cost_rate_formula() {
        // h1=1, h2=2, c=1, lambda_t=0.5 at (2,3): 1*2 + 2*3 + 1*0.5*2 = 9.
        let mut p = params();
        p.lambda_t = 0.5;
        assert_eq!(p.cost_rate(2, 3), 9.0);
        // (2,1) with the defaults: 1*2 + 2*1 + 1*0.2*2 = 4.4.
        let m = build_upgrade_queue(&params()).unwrap();
        let i = m.index_of(&StateVec(vec![2, 1])).unwrap();
        for &a in m.actions_at(i) {
            assert!((m.cost(i, a).unwrap() - 4.4).abs() < 1e-15);
        }
    }

    #[test]
    fn interior_exit_rate_matches_rate_table() {
        let p = params();
        let m = build_upgrade_queue(&p).unwrap();
        for q1 in 1..p.n {
            for q2 in 1..p.n {
                let i = m.index_of(&StateVec(vec![q1, q2])).unwrap();
                let row = m.row(i, ACTION_SERVE_2).unwrap();
                let expect = p.mu2 + p.lambda1 + p.lambda2 + q1 as f64 * p.lambda_t;
                assert!(
                    (row.exit_rate() - expect).abs() < 1e-12,
                    "state ({q1},{q2})"
                );
            }
        }
    }

    #[test]
    fn ps_policy_choices() {
        let m = build_upgrade_queue(&params()).unwrap();
        let ps = ps_policy(&m).unwrap();
        ps.check_feasible(&m).unwrap();
        assert_eq!(ps.choice(m.index_of(&StateVec(vec![0, 0])).unwrap()), 0);
        assert_eq!(ps.choice(m.index_of(&StateVec(vec![5, 0])).unwrap()), 1);
        assert_eq!(ps.choice(m.index_of(&StateVec(vec![3, 1])).unwrap()), 2);
    }

    #[test]
    fn ps_policy_rejects_wrong_model() {
        let m = build_mm1(1.0, 2.0, 1.0, 5).unwrap();
        assert!(ps_policy(&m).is_err());
    }

    #[test]
    fn lyapunov_constants_example() {
        // lambda1 = lambda2 = 0.3, mu = 1: r1 = (1 + 1/0.6)/2, delta = 0.05.
        let p = params();
        let (ratio, r1, delta, _) = geometric_lyapunov_constants(&p);
        assert!((ratio - 1.0 / 0.6).abs() < 1e-12);
        assert!((r1 - (1.0 + 1.0 / 0.6) / 2.0).abs() < 1e-12);
        assert!((delta - (1.0 / r1 - 0.6) * (r1 - 1.0)).abs() < 1e-12);
        assert!((delta - 0.05).abs() < 2e-3);
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        let mut p = params();
        p.lambda1 = 0.6;
        p.lambda2 = 0.6;
        let m = build_upgrade_queue(&p).unwrap();
        assert!(geometric_lyapunov(&p, &m).is_err());
    }

    #[test]
    fn mm1_shape() {
        let m = build_mm1(1.0, 2.0, 1.0, 1).unwrap();
        assert_eq!(m.n_states(), 2);
        assert!(m.validate().is_empty());
        assert_eq!(m.row(0, 0).unwrap().entries(), &[(1, 1.0)]);
        assert_eq!(m.row(1, 0).unwrap().entries(), &[(0, 2.0)]);
        assert_eq!(m.cost(1, 0).unwrap(), 1.0);
    }
}
