//! Experiment configuration: JSON documents validated against
//! `schema/config.schema.json`. Unknown fields are rejected; every default
//! is filled in before the config is echoed into the result document.

use serde::{Deserialize, Serialize};

use ctmdp::average::Schedule;
use ctmdp::model::{CtmdpModel, GeneratorRow, StateVec, StationaryPolicy, TruncationMeta};
use ctmdp::models::{self, UpgradeQueueParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    SolveDiscounted,
    SolveAverage,
    CheckStandard,
    CheckLyapunov,
    CheckAcoe,
    Simulate,
    VerifyAll,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    UpgradeQueue {
        lambda1: f64,
        lambda2: f64,
        mu1: f64,
        mu2: f64,
        lambda_t: f64,
        h1: f64,
        h2: f64,
        c_transfer: f64,
        n: u32,
    },
    Mm1 {
        lambda: f64,
        mu: f64,
        h: f64,
        n: u32,
    },
    Explicit {
        states: Vec<Vec<u32>>,
        actions: Vec<Vec<usize>>,
        /// Per state, per action: off-diagonal `[target, rate]` pairs.
        rates: Vec<Vec<Vec<(usize, f64)>>>,
        costs: Vec<Vec<f64>>,
        upper: Vec<u32>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolicyConfig {
    /// "ps", "only" or "greedy".
    Named(String),
    /// Explicit action table, one action id per state.
    Table(Vec<usize>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LyapunovConfig {
    /// Built-in geometric construction for the upgrade queue.
    Geometric,
    Table { values: Vec<f64>, hstar: Vec<usize> },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub alpha0: f64,
    pub ratio: f64,
    pub max_steps: usize,
}

impl From<ScheduleConfig> for Schedule {
    fn from(s: ScheduleConfig) -> Schedule {
        Schedule {
            alpha0: s.alpha0,
            ratio: s.ratio,
            max_steps: s.max_steps,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub task: Task,
    pub model: ModelConfig,
    /// Discount factor for solve-discounted and discounted simulation.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Discount factors for residual and renewal probes.
    #[serde(default)]
    pub alphas: Option<Vec<f64>>,
    #[serde(default)]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub policy: Option<PolicyConfig>,
    #[serde(default)]
    pub lyapunov: Option<LyapunovConfig>,
    /// Simulation horizon for time-average estimates.
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Simulation replications.
    #[serde(default)]
    pub reps: Option<usize>,
}

impl Config {
    /// Fill every optional field with its default (after CLI overrides), so
    /// the echoed config in the result document records full provenance.
    pub fn resolve_defaults(&mut self) {
        self.alpha.get_or_insert(0.5);
        self.alphas.get_or_insert(vec![1.0, 0.1, 0.01]);
        self.schedule.get_or_insert(ScheduleConfig {
            alpha0: 1.0,
            ratio: 0.5,
            max_steps: 40,
        });
        self.tol.get_or_insert(1e-6);
        self.seed.get_or_insert(0);
        self.threads.get_or_insert(1);
        if self.policy.is_none() {
            let name = match self.model {
                ModelConfig::UpgradeQueue { .. } => "ps",
                _ => "only",
            };
            self.policy = Some(PolicyConfig::Named(name.into()));
        }
        if self.lyapunov.is_none() {
            if let ModelConfig::UpgradeQueue { .. } = self.model {
                self.lyapunov = Some(LyapunovConfig::Geometric);
            }
        }
        self.horizon.get_or_insert(2000.0);
        self.reps.get_or_insert(100);
    }

    pub fn upgrade_params(&self) -> Option<UpgradeQueueParams> {
        match self.model {
            ModelConfig::UpgradeQueue {
                lambda1,
                lambda2,
                mu1,
                mu2,
                lambda_t,
                h1,
                h2,
                c_transfer,
                n,
            } => Some(UpgradeQueueParams {
                lambda1,
                lambda2,
                mu1,
                mu2,
                lambda_t,
                h1,
                h2,
                c_transfer,
                n,
            }),
            _ => None,
        }
    }

    pub fn build_model(&self) -> ctmdp::Result<CtmdpModel> {
        match &self.model {
            ModelConfig::UpgradeQueue { .. } => {
                models::build_upgrade_queue(&self.upgrade_params().unwrap())
            }
            ModelConfig::Mm1 { lambda, mu, h, n } => models::build_mm1(*lambda, *mu, *h, *n),
            ModelConfig::Explicit {
                states,
                actions,
                rates,
                costs,
                upper,
            } => CtmdpModel::new(
                states.iter().cloned().map(StateVec).collect(),
                actions.clone(),
                rates
                    .iter()
                    .map(|per_state| {
                        per_state
                            .iter()
                            .map(|entries| GeneratorRow::new(entries.clone()))
                            .collect()
                    })
                    .collect(),
                costs.clone(),
                TruncationMeta {
                    upper: upper.clone(),
                    rule: "arrival-blocking".into(),
                    kind: "explicit".into(),
                },
            ),
        }
    }

    /// Resolve the configured policy against a built model. "greedy"
    /// derives the greedy policy of the discounted solve at `alpha`.
    pub fn resolve_policy(&self, model: &CtmdpModel) -> ctmdp::Result<StationaryPolicy> {
        match self.policy.as_ref().expect("defaults resolved") {
            PolicyConfig::Named(name) => match name.as_str() {
                "ps" => models::ps_policy(model),
                "only" => models::only_policy(model),
                "greedy" => {
                    let alpha = self.alpha.expect("defaults resolved");
                    Ok(ctmdp::discounted::solve_optimal(model, alpha, 1e-9, 1_000_000)?.greedy)
                }
                other => Err(ctmdp::Error::InvalidParams(format!(
                    "unknown policy name {other:?}; expected \"ps\", \"only\" or \"greedy\""
                ))),
            },
            PolicyConfig::Table(choice) => {
                let p = StationaryPolicy::new(choice.clone());
                p.check_feasible(model)?;
                Ok(p)
            }
        }
    }

    /// Resolve the Lyapunov function specification, if one is configured or
    /// constructible for this model family.
    pub fn resolve_lyapunov(
        &self,
        model: &CtmdpModel,
    ) -> Option<ctmdp::Result<models::LyapunovSpec>> {
        match self.lyapunov.as_ref() {
            Some(LyapunovConfig::Geometric) => {
                let params = self.upgrade_params()?;
                Some(models::geometric_lyapunov(&params, model))
            }
            Some(LyapunovConfig::Table { values, hstar }) => Some(Ok(models::LyapunovSpec {
                values: values.clone(),
                hstar: hstar.clone(),
                params: None,
            })),
            None => None,
        }
    }
}
