//! Task execution: each task produces a list of named stages with a
//! verdict and machine-readable values; verify-all composes the full
//! pipeline. Check failures are verdicts (exit 1), solver errors propagate
//! (exit 3).

use serde::Serialize;
use serde_json::{json, Value};

use ctmdp::average::{self, Schedule};
use ctmdp::model::CtmdpModel;
use ctmdp::{chain, discounted, lyapunov, simulate};

use crate::config::{Config, Task};

#[derive(Debug, Serialize)]
pub struct Stage {
    pub name: String,
    pub pass: bool,
    pub skipped: bool,
    pub values: Value,
}

impl Stage {
    fn new(name: &str, pass: bool, values: Value) -> Self {
        Stage {
            name: name.into(),
            pass,
            skipped: false,
            values,
        }
    }

    fn skipped(name: &str, reason: &str) -> Self {
        Stage {
            name: name.into(),
            pass: true,
            skipped: true,
            values: json!({ "reason": reason }),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ResultDoc {
    /// Echo of the configuration with every default filled in.
    pub config: Config,
    pub pass: bool,
    pub stages: Vec<Stage>,
}

pub fn run(config: &Config) -> ctmdp::Result<ResultDoc> {
    let model = config.build_model()?;
    let stages = match config.task {
        Task::SolveDiscounted => vec![solve_discounted_stage(config, &model)?],
        Task::SolveAverage => vec![solve_average_stage(config, &model)?],
        Task::CheckStandard => vec![check_standard_stage(config, &model)?],
        Task::CheckLyapunov => vec![check_lyapunov_stage(config, &model)?],
        Task::CheckAcoe => check_acoe_stages(config, &model)?,
        Task::Simulate => vec![simulate_stage(config, &model)?],
        Task::VerifyAll => verify_all(config, &model)?,
    };
    let pass = stages.iter().all(|s| s.pass);
    Ok(ResultDoc {
        config: config.clone(),
        pass,
        stages,
    })
}

fn tol(config: &Config) -> f64 {
    config.tol.expect("defaults resolved")
}

fn schedule(config: &Config) -> Schedule {
    config.schedule.expect("defaults resolved").into()
}

fn solve_discounted_stage(config: &Config, model: &CtmdpModel) -> ctmdp::Result<Stage> {
    let alpha = config.alpha.expect("defaults resolved");
    let sol = discounted::solve_optimal(model, alpha, tol(config).min(1e-9), 1_000_000)?;
    Ok(Stage::new(
        "solve-discounted",
        true,
        json!({
            "alpha": alpha,
            "j0": sol.values[0],
            "alpha_j0": sol.gain,
            "residual": sol.residual,
            "iterations": sol.iterations,
            "greedy": sol.greedy.choices(),
        }),
    ))
}

fn solve_average_stage(config: &Config, model: &CtmdpModel) -> ctmdp::Result<Stage> {
    let sol = average::vanishing_discount(model, schedule(config), tol(config))?;
    let h_sup = sol.h_star.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(Stage::new(
        "solve-average",
        true,
        json!({
            "g_star": sol.g_star,
            "steps": sol.per_alpha.len(),
            "alpha_last": *sol.alpha_seq.last().unwrap(),
            "h_sup": h_sup,
            "f_star": sol.f_star.choices(),
        }),
    ))
}

fn check_standard_stage(config: &Config, model: &CtmdpModel) -> ctmdp::Result<Stage> {
    let policy = config.resolve_policy(model)?;
    let (standard, rep) = chain::check_standard(model, &policy, 0)?;
    let max_m = rep.m.iter().copied().fold(0.0f64, f64::max);
    let max_cost = rep.cost.iter().copied().fold(0.0f64, f64::max);
    Ok(Stage::new(
        "check-standard",
        standard,
        json!({
            "standard": standard,
            "max_passage_time": max_m,
            "max_passage_cost": max_cost,
            "return_time": rep.m[0],
            "return_cost": rep.cost[0],
        }),
    ))
}

fn check_lyapunov_stage(config: &Config, model: &CtmdpModel) -> ctmdp::Result<Stage> {
    let spec = match config.resolve_lyapunov(model) {
        Some(Ok(spec)) => spec,
        Some(Err(e)) => {
            return Ok(Stage::new(
                "check-lyapunov",
                false,
                json!({ "error": e.to_string() }),
            ))
        }
        None => {
            return Ok(Stage::skipped(
                "check-lyapunov",
                "no Lyapunov function configured for this model",
            ))
        }
    };
    let policy = config.resolve_policy(model)?;
    let q = model.induced_generator(&policy)?;
    let c = model.cost_vector(&policy)?;
    let cert = lyapunov::check_drift(&q, &c, &spec, &[])?;
    let bound = lyapunov::certify_cost_bound(model, &policy, &spec, 0)?;
    Ok(Stage::new(
        "check-lyapunov",
        cert.pass && bound.pass,
        json!({
            "drift_pass": cert.pass,
            "drift_violations": cert.violations.len(),
            "f_const": cert.f_const,
            "cost_bound_pass": bound.pass,
            "cost_bound_max_excess": bound.max_excess,
            "params": spec.params,
        }),
    ))
}

fn check_acoe_stages(config: &Config, model: &CtmdpModel) -> ctmdp::Result<Vec<Stage>> {
    let sol = average::vanishing_discount(model, schedule(config), tol(config))?;
    let policy = config.resolve_policy(model)?;
    let mut stages = vec![Stage::new(
        "solve-average",
        true,
        json!({ "g_star": sol.g_star, "steps": sol.per_alpha.len() }),
    )];
    let ev = average::check_assumptions(model, &sol, &policy, 0, tol(config))?;
    stages.push(Stage::new(
        "assumptions",
        ev.a1_holds && ev.a2_holds && ev.a3_holds,
        serde_json::to_value(&ev).unwrap(),
    ));
    let rep = average::acoi_residuals(model, &sol);
    let (_, fp) = chain::check_standard(model, &policy, 0)?;
    let conds = average::check_acoe_conditions(model, &sol.f_star, 0, &fp.cost, None)?;
    let scale = 1.0 + sol.g_star;
    let interior_ok = rep.interior_max_abs_phi <= 1e-4 * scale;
    stages.push(Stage::new(
        "acoi-acoe",
        rep.acoi_holds && rep.f_star_attains_min && interior_ok && conds.all_certified,
        json!({
            "g_star": sol.g_star,
            "max_abs_phi": rep.max_abs_phi,
            "min_phi": rep.min_phi,
            "interior_max_abs_phi": rep.interior_max_abs_phi,
            "n_interior": rep.n_interior,
            "acoi_holds": rep.acoi_holds,
            "f_star_attains_min": rep.f_star_attains_min,
            "all_certified": conds.all_certified,
            "all_by_finite_support": conds.all_by_iv,
        }),
    ));
    Ok(stages)
}

fn simulate_stage(config: &Config, model: &CtmdpModel) -> ctmdp::Result<Stage> {
    let policy = config.resolve_policy(model)?;
    let seed = config.seed.expect("defaults resolved");
    let threads = config.threads.expect("defaults resolved");
    let horizon = config.horizon.expect("defaults resolved");
    let reps = config.reps.expect("defaults resolved");
    let est = simulate::simulate_average_cost(model, &policy, 0, horizon, reps, seed, threads)?;
    let q = model.induced_generator(&policy)?;
    let c = model.cost_vector(&policy)?;
    let j_r = chain::stationary_distribution(&q)?.average_cost(&c);
    let pass = (est.mean - j_r).abs() <= 3.0 * est.half_width_95;
    Ok(Stage::new(
        "simulate",
        pass,
        json!({
            "mean": est.mean,
            "half_width_95": est.half_width_95,
            "n_reps": est.n_reps,
            "seed": est.seed,
            "analytic": j_r,
        }),
    ))
}

fn verify_all(config: &Config, model: &CtmdpModel) -> ctmdp::Result<Vec<Stage>> {
    let mut stages = Vec::new();

    let violations = model.validate();
    stages.push(Stage::new(
        "validate",
        violations.is_empty(),
        json!({ "violations": violations.len(), "states": model.n_states() }),
    ));

    let alphas = config.alphas.clone().expect("defaults resolved");
    let mut residuals = Vec::new();
    let mut monotone_ok = true;
    let mut sols = Vec::new();
    for &alpha in &alphas {
        let sol = discounted::solve_optimal(model, alpha, 1e-9, 1_000_000)?;
        residuals.push(sol.residual);
        monotone_ok &= discounted::check_monotone(model, &sol.relative).is_empty();
        sols.push((alpha, sol.values[0]));
    }
    stages.push(Stage::new(
        "solve-discounted",
        true,
        json!({ "alphas": alphas, "j0": sols.iter().map(|s| s.1).collect::<Vec<_>>(), "residuals": residuals }),
    ));
    stages.push(Stage::new(
        "monotonicity",
        monotone_ok,
        json!({ "monotone": monotone_ok }),
    ));

    stages.push(check_standard_stage(config, model)?);
    stages.push(check_lyapunov_stage(config, model)?);
    stages.extend(check_acoe_stages(config, model)?);
    stages.push(simulate_stage(config, model)?);
    Ok(stages)
}

pub fn print_table(doc: &ResultDoc) {
    println!("{:<24} {:>8}", "stage", "verdict");
    println!("{}", "-".repeat(33));
    for stage in &doc.stages {
        let verdict = if stage.skipped {
            "skipped"
        } else if stage.pass {
            "pass"
        } else {
            "FAIL"
        };
        println!("{:<24} {:>8}", stage.name, verdict);
        if let Value::Object(map) = &stage.values {
            for (k, v) in map {
                let shown = match v {
                    Value::Array(a) if a.len() > 8 => format!("[{} values]", a.len()),
                    other => other.to_string(),
                };
                println!("  {:<24} {}", k, shown);
            }
        }
    }
    println!("{}", "-".repeat(33));
    println!(
        "{:<24} {:>8}",
        "overall",
        if doc.pass { "pass" } else { "FAIL" }
    );
}
