//! Core CTMDP representation: enumerated states, per-state action sets,
//! sparse conservative generator rows, nonnegative cost rates.
//!
//! Models are immutable after construction and safe to share across
//! threads. Generator diagonals are always derived as the negated
//! off-diagonal sum, never stored independently, so conservativity is
//! exact by construction.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::linalg::SparseMatrix;
use crate::{Error, Result};

/// Dense index into a model's enumerated state list. Index 0 is always the
/// designated reference state (the all-zeros state for the built-in models).
pub type StateIndex = usize;

/// Globally numbered action. In the built-in queue model: 0 = idle,
/// 1 = serve queue 1, 2 = serve queue 2.
pub type ActionId = usize;

/// A state of the truncated process: a vector of nonnegative integer
/// coordinates (queue lengths or generic coordinates).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateVec(pub Vec<u32>);

impl StateVec {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[u32] {
        &self.0
    }
}

impl std::fmt::Display for StateVec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (k, c) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// One generator row: sparse off-diagonal rates plus the derived diagonal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorRow {
    entries: Vec<(StateIndex, f64)>,
    diagonal: f64,
}

impl GeneratorRow {
    /// Build a row from off-diagonal `(target, rate)` pairs; the diagonal is
    /// derived so the row sums to zero exactly.
    pub fn new(entries: Vec<(StateIndex, f64)>) -> Self {
        let diagonal = -entries.iter().map(|&(_, r)| r).sum::<f64>();
        GeneratorRow { entries, diagonal }
    }

    /// Build a row with an explicitly supplied diagonal. Only useful for
    /// constructing deliberately malformed rows; `validate` flags any row
    /// whose diagonal differs from the negated off-diagonal sum.
    pub fn from_raw(entries: Vec<(StateIndex, f64)>, diagonal: f64) -> Self {
        GeneratorRow { entries, diagonal }
    }

    pub fn entries(&self) -> &[(StateIndex, f64)] {
        &self.entries
    }

    pub fn diagonal(&self) -> f64 {
        self.diagonal
    }

    /// Total exit rate `-q(i|i,a)`.
    pub fn exit_rate(&self) -> f64 {
        -self.diagonal
    }
}

/// Record of the finite box the denumerable state space was truncated to,
/// and which built-in family produced the model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruncationMeta {
    /// Inclusive upper bound per coordinate (lower bound is always 0).
    pub upper: Vec<u32>,
    /// Boundary handling; always "arrival-blocking" for the built-ins:
    /// transitions leaving the box are deleted and the diagonal recomputed.
    pub rule: String,
    /// Model family tag: "upgrade-queue", "mm1", or "explicit".
    pub kind: String,
}

/// A finite truncation of a CTMDP: states, per-state action sets, generator
/// rows and cost rates per (state, action).
#[derive(Debug, Clone)]
pub struct CtmdpModel {
    states: Vec<StateVec>,
    index: HashMap<StateVec, StateIndex>,
    actions: Vec<Vec<ActionId>>,
    rows: Vec<Vec<GeneratorRow>>,
    costs: Vec<Vec<f64>>,
    truncation: TruncationMeta,
}

/// A violated model invariant, reported as data rather than an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    NegativeCost {
        state: StateIndex,
        action: ActionId,
        value: f64,
    },
    NegativeRate {
        state: StateIndex,
        action: ActionId,
        target: StateIndex,
        value: f64,
    },
    NonConservativeRow {
        state: StateIndex,
        action: ActionId,
        row_sum: f64,
    },
    TargetOutOfRange {
        state: StateIndex,
        action: ActionId,
        target: StateIndex,
    },
    EmptyActionSet {
        state: StateIndex,
    },
    DimensionMismatch {
        state: StateIndex,
    },
}

impl CtmdpModel {
    /// Assemble a model. `actions[i]`, `rows[i]` and `costs[i]` are aligned:
    /// position `k` describes action `actions[i][k]` at state `i`.
    pub fn new(
        states: Vec<StateVec>,
        mut actions: Vec<Vec<ActionId>>,
        mut rows: Vec<Vec<GeneratorRow>>,
        mut costs: Vec<Vec<f64>>,
        truncation: TruncationMeta,
    ) -> Result<Self> {
        let n = states.len();
        // Per-state action lists are kept sorted so that greedy tie-breaking
        // to the lowest action id falls out of iteration order.
        for i in 0..actions.len().min(rows.len()).min(costs.len()) {
            if actions[i].len() == rows[i].len()
                && actions[i].len() == costs[i].len()
                && !actions[i].windows(2).all(|w| w[0] <= w[1])
            {
                let mut perm: Vec<usize> = (0..actions[i].len()).collect();
                perm.sort_by_key(|&k| actions[i][k]);
                actions[i] = perm.iter().map(|&k| actions[i][k]).collect();
                rows[i] = perm.iter().map(|&k| rows[i][k].clone()).collect();
                costs[i] = perm.iter().map(|&k| costs[i][k]).collect();
            }
        }
        if actions.len() != n || rows.len() != n || costs.len() != n {
            return Err(Error::DimensionMismatch(
                "states, actions, rows, costs must have equal length".into(),
            ));
        }
        for i in 0..n {
            if actions[i].len() != rows[i].len() || actions[i].len() != costs[i].len() {
                return Err(Error::DimensionMismatch(format!(
                    "state {i}: actions/rows/costs misaligned"
                )));
            }
        }
        let mut index = HashMap::with_capacity(n);
        for (i, s) in states.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::InvalidParams(format!("duplicate state {s}")));
            }
        }
        Ok(CtmdpModel {
            states,
            index,
            actions,
            rows,
            costs,
            truncation,
        })
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[StateVec] {
        &self.states
    }

    pub fn state(&self, i: StateIndex) -> &StateVec {
        &self.states[i]
    }

    /// Dense index of a state vector, if it lies inside the truncation.
    pub fn index_of(&self, s: &StateVec) -> Option<StateIndex> {
        self.index.get(s).copied()
    }

    pub fn actions_at(&self, i: StateIndex) -> &[ActionId] {
        &self.actions[i]
    }

    fn action_pos(&self, i: StateIndex, a: ActionId) -> Result<usize> {
        self.actions[i]
            .iter()
            .position(|&x| x == a)
            .ok_or(Error::InfeasiblePolicy { state: i, action: a })
    }

    pub fn row(&self, i: StateIndex, a: ActionId) -> Result<&GeneratorRow> {
        Ok(&self.rows[i][self.action_pos(i, a)?])
    }

    pub fn cost(&self, i: StateIndex, a: ActionId) -> Result<f64> {
        Ok(self.costs[i][self.action_pos(i, a)?])
    }

    pub fn truncation(&self) -> &TruncationMeta {
        &self.truncation
    }

    /// Maximum exit rate over all (state, action) pairs; the uniformization
    /// constant of the truncated model.
    pub fn max_exit_rate(&self) -> f64 {
        self.rows
            .iter()
            .flatten()
            .map(GeneratorRow::exit_rate)
            .fold(0.0, f64::max)
    }

    /// L-infinity distance of state `i` from the upper truncation edge.
    pub fn edge_distance(&self, i: StateIndex) -> u32 {
        self.states[i]
            .coords()
            .iter()
            .zip(&self.truncation.upper)
            .map(|(&c, &u)| u - c)
            .min()
            .unwrap_or(0)
    }

    /// Check every model invariant. Returns all violations found; an empty
    /// list means the model is valid. Idempotent and side-effect free.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.states.len();
        let dim = self.states.first().map_or(0, StateVec::dim);
        for (i, s) in self.states.iter().enumerate() {
            if s.dim() != dim {
                out.push(Violation::DimensionMismatch { state: i });
            }
            if self.actions[i].is_empty() {
                out.push(Violation::EmptyActionSet { state: i });
            }
            for (k, &a) in self.actions[i].iter().enumerate() {
                let cost = self.costs[i][k];
                if !(cost >= 0.0) {
                    out.push(Violation::NegativeCost {
                        state: i,
                        action: a,
                        value: cost,
                    });
                }
                let row = &self.rows[i][k];
                let mut sum = 0.0;
                for &(j, r) in row.entries() {
                    if j >= n {
                        out.push(Violation::TargetOutOfRange {
                            state: i,
                            action: a,
                            target: j,
                        });
                    }
                    if !(r >= 0.0) {
                        out.push(Violation::NegativeRate {
                            state: i,
                            action: a,
                            target: j,
                            value: r,
                        });
                    }
                    sum += r;
                }
                // Diagonals are derived with this exact summation order, so a
                // well-formed row cancels to zero bitwise.
                if sum + row.diagonal() != 0.0 {
                    out.push(Violation::NonConservativeRow {
                        state: i,
                        action: a,
                        row_sum: sum + row.diagonal(),
                    });
                }
            }
        }
        out
    }

    /// Generator of the CTMC induced by a stationary policy: row `i` is
    /// `q(.|i, f(i))`, diagonal included.
    pub fn induced_generator(&self, policy: &StationaryPolicy) -> Result<SparseMatrix> {
        policy.check_feasible(self)?;
        let rows = (0..self.n_states())
            .map(|i| {
                let row = self.row(i, policy.choice(i))?;
                let mut r: Vec<(usize, f64)> = row.entries().to_vec();
                r.push((i, row.diagonal()));
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SparseMatrix::from_rows(rows))
    }

    /// Cost-rate vector under a stationary policy: `c_f(i) = c(i, f(i))`.
    pub fn cost_vector(&self, policy: &StationaryPolicy) -> Result<Vec<f64>> {
        policy.check_feasible(self)?;
        (0..self.n_states())
            .map(|i| self.cost(i, policy.choice(i)))
            .collect()
    }
}

/// Deterministic stationary policy: one feasible action per state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StationaryPolicy {
    choice: Vec<ActionId>,
}

impl StationaryPolicy {
    pub fn new(choice: Vec<ActionId>) -> Self {
        StationaryPolicy { choice }
    }

    pub fn choice(&self, i: StateIndex) -> ActionId {
        self.choice[i]
    }

    pub fn choices(&self) -> &[ActionId] {
        &self.choice
    }

    pub fn len(&self) -> usize {
        self.choice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choice.is_empty()
    }

    pub fn check_feasible(&self, model: &CtmdpModel) -> Result<()> {
        if self.choice.len() != model.n_states() {
            return Err(Error::PolicyLength {
                got: self.choice.len(),
                expected: model.n_states(),
            });
        }
        for (i, &a) in self.choice.iter().enumerate() {
            if !model.actions_at(i).contains(&a) {
                return Err(Error::InfeasiblePolicy { state: i, action: a });
            }
        }
        Ok(())
    }
}
