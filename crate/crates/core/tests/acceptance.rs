//! End-to-end acceptance checks on the two built-in model families, with
//! closed-form oracles where they exist. Each check prints one pass/fail
//! line (visible with `--nocapture`).

use std::sync::OnceLock;

use ctmdp::average::{self, Schedule};
use ctmdp::chain;
use ctmdp::discounted;
use ctmdp::lyapunov;
use ctmdp::model::{CtmdpModel, StateVec, StationaryPolicy};
use ctmdp::models::{self, UpgradeQueueParams, ACTION_IDLE, ACTION_SERVE_1, ACTION_SERVE_2};
use ctmdp::simulate;

fn report(name: &str, pass: bool) {
    println!("{name}: {}", if pass { "pass" } else { "FAIL" });
    assert!(pass, "{name} failed");
}

fn queue_params(n: u32) -> UpgradeQueueParams {
    UpgradeQueueParams {
        lambda1: 0.3,
        lambda2: 0.3,
        mu1: 1.0,
        mu2: 1.0,
        lambda_t: 0.2,
        h1: 1.0,
        h2: 2.0,
        c_transfer: 1.0,
        n,
    }
}

struct QueueFixture {
    model: CtmdpModel,
    ps: StationaryPolicy,
    avg: average::AverageSolution,
    /// First-passage report of the priority policy to the empty state.
    fp_ps: chain::FirstPassageReport,
}

fn queue30() -> &'static QueueFixture {
    static FIX: OnceLock<QueueFixture> = OnceLock::new();
    FIX.get_or_init(|| {
        let model = models::build_upgrade_queue(&queue_params(30)).unwrap();
        let ps = models::ps_policy(&model).unwrap();
        let avg = average::vanishing_discount(&model, Schedule::default(), 1e-6).unwrap();
        let (standard, fp_ps) = chain::check_standard(&model, &ps, 0).unwrap();
        assert!(standard);
        QueueFixture {
            model,
            ps,
            avg,
            fp_ps,
        }
    })
}

fn mm1() -> &'static (CtmdpModel, StationaryPolicy, average::AverageSolution) {
    static FIX: OnceLock<(CtmdpModel, StationaryPolicy, average::AverageSolution)> =
        OnceLock::new();
    FIX.get_or_init(|| {
        let model = models::build_mm1(1.0, 2.0, 1.0, 60).unwrap();
        let p = models::only_policy(&model).unwrap();
        let avg = average::vanishing_discount(&model, Schedule::default(), 1e-6).unwrap();
        (model, p, avg)
    })
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn interior_probes(model: &CtmdpModel) -> Vec<usize> {
    [(1, 0), (0, 1), (3, 2), (8, 8), (15, 5)]
        .iter()
        .map(|&(a, b)| model.index_of(&StateVec(vec![a, b])).unwrap())
        .collect()
}

#[test]
fn policy_evaluation_residual_identity() {
    let fix = queue30();
    let q = fix.model.induced_generator(&fix.ps).unwrap();
    let c = fix.model.cost_vector(&fix.ps).unwrap();
    let cnorm = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut worst = 0.0f64;
    for alpha in [1.0, 0.1, 0.01] {
        let j = discounted::evaluate_policy(&fix.model, &fix.ps, alpha).unwrap();
        let qj = q.mul_vec(&j);
        for i in 0..j.len() {
            worst = worst.max((alpha * j[i] - c[i] - qj[i]).abs());
        }
    }
    report(
        "policy evaluation residual identity",
        worst <= 1e-8 * (1.0 + cnorm),
    );
}

#[test]
fn optimality_equation_fixed_point() {
    let fix = queue30();
    let mut pass = true;
    for alpha in [1.0, 0.1, 0.01] {
        let sol = discounted::solve_optimal(&fix.model, alpha, 1e-10, 1_000_000).unwrap();
        pass &= sol.residual <= 1e-9;
        let j = discounted::evaluate_policy(&fix.model, &sol.greedy, alpha).unwrap();
        pass &= sup_diff(&sol.values, &j) <= 1e-8;
    }
    report("optimality equation fixed point", pass);
}

#[test]
fn birth_death_closed_form_oracle() {
    let (model, p, avg) = mm1();
    let q = model.induced_generator(p).unwrap();
    let summary = chain::stationary_distribution(&q).unwrap();
    let rho: f64 = 0.5;
    let mut tv = 0.0;
    for i in 0..=60usize {
        tv += (summary.pi[i] - (1.0 - rho) * rho.powi(i as i32)).abs();
    }
    tv = 0.5 * (tv + rho.powi(61));
    let c = model.cost_vector(p).unwrap();
    let fp = chain::first_passage(&q, &c, &[0]).unwrap();
    let pass = tv <= 1e-8
        && (fp.m[1] - 1.0).abs() <= 1e-8
        && (fp.m[0] - 2.0).abs() <= 1e-8
        && (avg.g_star - 1.0).abs() <= 0.01;
    report("birth-death closed-form oracle", pass);
}

#[test]
fn priority_policy_is_standard() {
    let fix = queue30();
    let pass = fix.fp_ps.all_finite() && fix.fp_ps.m.len() == 961;
    report("priority policy standard at reference state", pass);
}

#[test]
fn drift_certificate_and_cost_bound() {
    let fix = queue30();
    let spec = models::geometric_lyapunov(&queue_params(30), &fix.model).unwrap();
    let q = fix.model.induced_generator(&fix.ps).unwrap();
    let c = fix.model.cost_vector(&fix.ps).unwrap();
    let cert = lyapunov::check_drift(&q, &c, &spec, &[]).unwrap();
    let bound = lyapunov::certify_cost_bound(&fix.model, &fix.ps, &spec, 0).unwrap();
    report("drift certificate and cost bound", cert.pass && bound.pass);
}

#[test]
fn renewal_identities_hold() {
    let fix = queue30();
    let alphas = [1.0, 0.1, 0.01];
    let rep_q = chain::renewal_identities(&fix.model, &fix.ps, 0, &alphas).unwrap();
    let (model, p, _) = mm1();
    let rep_m = chain::renewal_identities(model, p, 0, &alphas).unwrap();
    report("renewal identities", rep_q.pass && rep_m.pass);
}

#[test]
fn vanishing_discount_boundedness() {
    let fix = queue30();
    let ev = average::check_assumptions(&fix.model, &fix.avg, &fix.ps, 0, 1e-6).unwrap();
    let pass = fix.avg.per_alpha.len() <= 40
        && ev.a1_holds
        && ev.a2_holds
        && ev.a3_monotone_verified
        && ev.a3_min_h >= -1e-9;
    report("vanishing-discount boundedness evidence", pass);
}

#[test]
fn optimality_inequality_and_equality() {
    let fix = queue30();
    let rep = average::acoi_residuals(&fix.model, &fix.avg);
    let conds = average::check_acoe_conditions(
        &fix.model,
        &fix.avg.f_star,
        0,
        &fix.fp_ps.cost,
        None,
    )
    .unwrap();
    let scale = 1.0 + fix.avg.g_star;
    let pass = rep.min_phi >= -1e-6 * scale
        && rep.interior_max_abs_phi <= 1e-4 * scale
        && rep.f_star_attains_min
        && conds.all_by_iv;
    report("optimality inequality and per-state equality", pass);
}

#[test]
fn passage_bound_on_relative_values() {
    let fix = queue30();
    let probes = interior_probes(&fix.model);
    let mut pass = true;
    for theta in [&fix.ps, &fix.avg.f_star] {
        for &i in &probes {
            let ev =
                average::passage_value_bound(&fix.model, &fix.avg, theta, i, &[0], &fix.fp_ps.cost)
                    .unwrap();
            pass &= ev.holds;
        }
    }
    for &i in &probes {
        let ev = average::passage_value_bound(
            &fix.model,
            &fix.avg,
            &fix.avg.f_star,
            i,
            &[0],
            &fix.fp_ps.cost,
        )
        .unwrap();
        pass &= ev.slack.abs() <= 1e-5 * (1.0 + ev.h_value.abs());
    }
    report("first-passage bound on relative values", pass);
}

#[test]
fn truncation_robustness() {
    let fix = queue30();
    let model60 = models::build_upgrade_queue(&queue_params(60)).unwrap();
    let avg60 = average::vanishing_discount(&model60, Schedule::default(), 1e-6).unwrap();
    let gap = (fix.avg.g_star - avg60.g_star).abs();
    report(
        "truncation robustness of the gain",
        gap <= 1e-3 * (1.0 + fix.avg.g_star),
    );
}

#[test]
fn simulation_cross_validation() {
    let fix = queue30();
    let q = fix.model.induced_generator(&fix.ps).unwrap();
    let c = fix.model.cost_vector(&fix.ps).unwrap();
    let summary = chain::stationary_distribution(&q).unwrap();
    let j_r = summary.average_cost(&c);
    let mut pass = true;

    let est = simulate::simulate_average_cost(&fix.model, &fix.ps, 0, 4000.0, 200, 2024, 1).unwrap();
    pass &= (est.mean - j_r).abs() <= 3.0 * est.half_width_95;
    let est2 =
        simulate::simulate_average_cost(&fix.model, &fix.ps, 0, 4000.0, 200, 2024, 1).unwrap();
    pass &= est.mean.to_bits() == est2.mean.to_bits();

    let j05 = discounted::evaluate_policy(&fix.model, &fix.ps, 0.5).unwrap();
    let estd =
        simulate::simulate_discounted_cost(&fix.model, &fix.ps, 0.5, 0, 400, 2024, 1).unwrap();
    pass &= (estd.mean - j05[0]).abs() <= 3.0 * estd.half_width_95;

    let fp = chain::first_passage(&q, &c, &[0]).unwrap();
    for &i in &interior_probes(&fix.model) {
        let (t, _) =
            simulate::simulate_first_passage(&fix.model, &fix.ps, i, &[0], 400, 2024, 1).unwrap();
        pass &= (t.mean - fp.m[i]).abs() <= 3.0 * t.half_width_95 && t.discarded == 0;
    }
    report("simulation cross-validation", pass);
}

#[test]
fn gain_lower_bounds_fixed_policies() {
    let fix = queue30();
    let mut pass = true;
    let j_r_of = |policy: &StationaryPolicy| -> f64 {
        let q = fix.model.induced_generator(policy).unwrap();
        let c = fix.model.cost_vector(policy).unwrap();
        chain::stationary_distribution(&q).unwrap().average_cost(&c)
    };
    pass &= fix.avg.g_star <= j_r_of(&fix.ps) + 1e-4;

    // Three hand-written comparison policies.
    let by_rule = |rule: &dyn Fn(u32, u32) -> usize| -> StationaryPolicy {
        let choice = fix
            .model
            .states()
            .iter()
            .map(|s| {
                let (q1, q2) = (s.coords()[0], s.coords()[1]);
                if (q1, q2) == (0, 0) {
                    ACTION_IDLE
                } else if q1 == 0 {
                    ACTION_SERVE_2
                } else if q2 == 0 {
                    ACTION_SERVE_1
                } else {
                    rule(q1, q2)
                }
            })
            .collect();
        StationaryPolicy::new(choice)
    };
    let queue1_first = by_rule(&|_, _| ACTION_SERVE_1);
    let threshold5 = by_rule(&|_, q2| if q2 >= 5 { ACTION_SERVE_2 } else { ACTION_SERVE_1 });
    let longer_queue = by_rule(&|q1, q2| if q1 > q2 { ACTION_SERVE_1 } else { ACTION_SERVE_2 });
    for policy in [&queue1_first, &threshold5, &longer_queue] {
        pass &= fix.avg.g_star <= j_r_of(policy) + 1e-4;
    }
    report("gain lower-bounds fixed policies", pass);
}
