//! Acceptance suite. Runs without the libtest harness so every run prints
//! one PASS/FAIL line per criterion; exits nonzero if any criterion fails.

mod common;

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use anticip_mpc::cli::bench_scenarios;
use anticip_mpc::costs::{
    goal_pose_cost, goal_probabilities, knot_cost_value, legibility_cost, total_knot_cost, GoalSpec, LegibilityContext,
};
use anticip_mpc::human_prediction::HumanMotion;
use anticip_mpc::kinematics::{forward_kinematics, EefPose, RobotModel};
use anticip_mpc::metrics::{
    evaluate, legibility_metric, min_separation, separation_metric, visibility_metric, MetricsConfig,
};
use anticip_mpc::mpc::{plan_one_shot, run_mpc, ExecutionTrace, MpcConfig};
use anticip_mpc::scenario::{generate_resolved, GenParams, Scenario};
use anticip_mpc::solver::{max_bound_violation, QuadraticCost, SolveResult, Solver, SolverConfig, TrajectoryProblem};
use common::*;
use nalgebra::{DVector, UnitQuaternion, Vector3};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn scenario(seed: u64) -> Scenario {
    generate_resolved(&GenParams {
        seed,
        ..GenParams::default()
    })
    .unwrap()
}

fn latency() -> Outcome {
    let count = 20;
    let started = Instant::now();
    let scenarios: Vec<Scenario> = (0..count).map(scenario).collect();
    let report = bench_scenarios(&scenarios, 1, true).unwrap();
    let wall = started.elapsed().as_secs_f64();
    let cfg = &scenarios[0].mpc;
    let reference_config = cfg.dt == 0.25
        && cfg.horizon == 1.25
        && cfg.replan_period == 0.5
        && cfg.task_duration == 5.0
        && scenarios[0].model.n_joints() == 7
        && scenarios[0].prediction.n_joints() == 5;
    outcome(
        reference_config && report.count == count as usize && report.per_trajectory_mean <= 0.5 && wall < 120.0,
        format!(
            "{} trajectories, mean {:.4} s (std {:.4}) per trajectory, bound 0.5 s; benchmark wall {:.1} s",
            report.count, report.per_trajectory_mean, report.per_trajectory_std, wall
        ),
    )
}

fn solve_tracking(lqr: &TrackingLqr, bound: f64) -> SolveResult {
    let n = lqr.x0.len();
    let cost = QuadraticCost {
        state_weights: lqr.q.clone(),
        control_weights: lqr.r.clone(),
        state_refs: lqr.x_ref.clone(),
        control_refs: lqr.u_ref.clone(),
    };
    let problem = TrajectoryProblem::new(
        lqr.x0.clone(),
        lqr.dt,
        DVector::from_element(n, -bound),
        DVector::from_element(n, bound),
        cost,
    )
    .unwrap();
    Solver::new(SolverConfig::default()).solve(&problem, None).unwrap()
}

fn solver_oracle() -> Outcome {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    let problems = 50;
    for seed in 0..problems {
        let lqr = TrackingLqr::random(&mut rng(1000 + seed));
        let expected = lqr.riccati_states();
        let got = solve_tracking(&lqr, 1e6);
        for (a, b) in expected.iter().zip(&got.states) {
            worst = worst.max((a - b).amax());
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    outcome(
        worst < 1e-6 && elapsed < 10.0,
        format!("{problems} problems, max state error {worst:.2e} (< 1e-6), {elapsed:.2} s (< 10 s)"),
    )
}

fn gradient_suite() -> Outcome {
    let samples = 200;
    let mut worst: f64 = 0.0;
    for seed in 0..samples {
        let mut r = rng(2000 + seed);
        let model = random_model(&mut r);
        let n = model.n_joints();
        let q = random_q(&mut r, n);
        let u = dvec(&mut r, n, -1.0, 1.0);
        let ctx = random_context(&mut r, &model, &q);
        let kc = total_knot_cost(&model, &q, Some(&u), &ctx).unwrap();
        let fd_x = central_difference(|x| knot_cost_value(&model, x, Some(&u), &ctx).unwrap(), &q, 1e-6);
        let fd_u = central_difference(|v| knot_cost_value(&model, &q, Some(v), &ctx).unwrap(), &u, 1e-6);
        worst = worst
            .max(relative_error(&kc.grad_x, &fd_x))
            .max(relative_error(&kc.grad_u, &fd_u));
    }
    outcome(
        worst < 1e-4,
        format!("{samples} random (model, q, u, ctx) samples, max relative error {worst:.2e} (< 1e-4)"),
    )
}

fn legibility_cancellation() -> Outcome {
    let sets = 100;
    let mut worst: f64 = 0.0;
    for seed in 0..sets {
        let mut r = rng(3000 + seed);
        let k = r.random_range(2..=6);
        let goals: Vec<Vector3<f64>> = (0..k).map(|_| vec3(&mut r, -1.0, 1.0)).collect();
        let goal_index = r.random_range(0..k);
        let start = vec3(&mut r, -1.0, 1.0);
        let ctx = LegibilityContext::new(start, goals.clone(), goal_index).unwrap();
        let q = vec3(&mut r, -1.0, 1.0);
        // shared path cost, e.g. a squared path length from S to Q
        let shared = uniform(&mut r, 0.0, 20.0);
        let score = |g: &Vector3<f64>| (-shared - (g - q).norm_squared() + (g - start).norm_squared()).exp();
        let z: f64 = goals.iter().map(score).sum();
        let direct = 1.0 - score(&goals[goal_index]) / z;
        let decoupled = legibility_cost(&q, &ctx);
        worst = worst.max((decoupled - direct).abs() / direct.abs());
    }
    outcome(
        worst < 1e-10,
        format!("{sets} random goal sets, max relative error {worst:.2e} (< 1e-10)"),
    )
}

fn dynamics_residual(states: &[DVector<f64>], controls: &[DVector<f64>], dt: f64) -> f64 {
    states
        .windows(2)
        .zip(controls)
        .map(|(w, u)| (&w[1] - &w[0] - u * dt).amax())
        .fold(0.0, f64::max)
}

fn feasibility() -> Outcome {
    let mut worst_dyn: f64 = 0.0;
    let mut worst_bound: f64 = 0.0;
    let mut results = 0;
    let mut converged = 0;
    let mut check = |res: &SolveResult, dt: f64, lower: &DVector<f64>, upper: &DVector<f64>| {
        results += 1;
        worst_dyn = worst_dyn.max(dynamics_residual(&res.states, &res.controls, dt));
        if res.converged {
            converged += 1;
            worst_bound = worst_bound.max(max_bound_violation(&res.controls, lower, upper));
        }
    };
    for seed in 0..5 {
        let mut s = scenario(seed);
        if seed % 2 == 1 {
            // slow joints so the bounds saturate
            let m = s.model.as_ref().clone();
            let (lo, hi) = (m.velocity_lower() * 0.25, m.velocity_upper() * 0.25);
            s.model = Arc::new(m.with_velocity_bounds(lo, hi).unwrap());
        }
        let (lo, hi) = (s.model.velocity_lower().clone(), s.model.velocity_upper().clone());
        let res = plan_one_shot(&s, &mut Solver::new(s.solver)).unwrap();
        check(&res, s.mpc.dt, &lo, &hi);
        let trace = run_mpc(&s).unwrap();
        for rec in &trace.replans {
            let as_result = SolveResult {
                states: rec.plan_states.clone(),
                controls: rec.plan_controls.clone(),
                total_cost: rec.cost,
                iterations: rec.iterations,
                outer_iterations: 0,
                converged: rec.converged,
                max_bound_violation: rec.max_bound_violation,
                wall_time: 0.0,
                cost_history: Vec::new(),
            };
            check(&as_result, s.mpc.dt, &lo, &hi);
        }
    }
    for seed in 0..20 {
        let lqr = TrackingLqr::random(&mut rng(4000 + seed));
        let bound = 0.3;
        let n = lqr.x0.len();
        let res = solve_tracking(&lqr, bound);
        check(
            &res,
            lqr.dt,
            &DVector::from_element(n, -bound),
            &DVector::from_element(n, bound),
        );
    }
    outcome(
        worst_dyn <= 1e-12 && worst_bound < 1e-4,
        format!("{results} trajectories ({converged} converged), max dynamics residual {worst_dyn:.2e} (<= 1e-12), max bound violation when converged {worst_bound:.2e} (< 1e-4)"),
    )
}

fn degenerate_mpc() -> Outcome {
    let base = scenario(0);
    let task = base.mpc.task_duration;
    let s = base.clone().with_mpc(MpcConfig {
        horizon: task,
        replan_period: task,
        ..base.mpc
    });
    let one_shot = plan_one_shot(&s, &mut Solver::new(s.solver)).unwrap();
    let trace = run_mpc(&s).unwrap();
    let identical = trace.states == one_shot.states && trace.replans.len() == 1;
    outcome(
        identical,
        format!(
            "horizon = replan = {task} s: {} replan(s), states bit-identical to the one-shot solve: {identical}",
            trace.replans.len()
        ),
    )
}

fn closest_approach(s: &Scenario, trace: &ExecutionTrace, human: &HumanMotion) -> f64 {
    trace
        .times
        .iter()
        .zip(&trace.states)
        .map(|(t, q)| {
            let fk = forward_kinematics(&s.model, q).unwrap();
            min_separation(&s.model, &fk, human.at(*t).unwrap())
        })
        .fold(f64::INFINITY, f64::min)
}

fn anticipation() -> Outcome {
    let aware = scenario(0);
    let human = aware.actual_human();
    // the reaching wrist passes close to the nominal end-effector path
    let crossing = aware
        .nominal
        .iter()
        .flat_map(|p| human.positions.iter().map(move |frame| (frame[4] - p).norm()))
        .fold(f64::INFINITY, f64::min);
    let blind = aware.clone().with_weights(anticip_mpc::costs::CostWeights {
        w_dist: 0.0,
        ..aware.weights
    });
    let cfg = MetricsConfig::default();
    let trace_aware = run_mpc(&aware).unwrap();
    let trace_blind = run_mpc(&blind).unwrap();
    let sep_aware = closest_approach(&aware, &trace_aware, &human);
    let sep_blind = closest_approach(&blind, &trace_blind, &human);
    let dst_aware = evaluate(&aware, &trace_aware, &human, &cfg).unwrap().dst;
    let dst_blind = evaluate(&blind, &trace_blind, &human, &cfg).unwrap().dst;
    outcome(
        crossing < 0.1 && sep_aware > sep_blind && dst_aware >= dst_blind,
        format!(
            "wrist-to-nominal {crossing:.3} m; min separation {sep_aware:.4} m (w_dist {}) vs {sep_blind:.4} m (w_dist 0); Dst {dst_aware:.3} vs {dst_blind:.3}",
            aware.weights.w_dist
        ),
    )
}

fn quaternion_invariance() -> Outcome {
    let checks = 100;
    let mut exact = 0;
    let mut r = rng(5000);
    let negate = |q: &UnitQuaternion<f64>| UnitQuaternion::new_unchecked(-q.into_inner());
    for _ in 0..checks {
        let eef = EefPose {
            position: vec3(&mut r, -1.0, 1.0),
            orientation: unit_quaternion(&mut r),
        };
        let goal = GoalSpec {
            position: vec3(&mut r, -1.0, 1.0),
            orientation: unit_quaternion(&mut r),
        };
        let base = goal_pose_cost(&eef, &goal);
        let neg_eef = EefPose {
            orientation: negate(&eef.orientation),
            ..eef.clone()
        };
        let neg_goal = GoalSpec {
            orientation: negate(&goal.orientation),
            ..goal.clone()
        };
        if goal_pose_cost(&neg_eef, &goal) == base && goal_pose_cost(&eef, &neg_goal) == base {
            exact += 1;
        }
    }
    outcome(
        exact == checks,
        format!("{exact}/{checks} random quaternions invariant under negation of either argument"),
    )
}

fn random_trace(r: &mut rand_chacha::ChaCha8Rng, model: &RobotModel, len: usize) -> ExecutionTrace {
    let mut q = random_q(r, model.n_joints());
    let states = (0..len)
        .map(|_| {
            q += dvec(r, model.n_joints(), -0.3, 0.3);
            q.clone()
        })
        .collect();
    ExecutionTrace::from_plan(0.25, states)
}

fn metric_probabilities() -> Outcome {
    let mut worst_sum: f64 = 0.0;
    let mut fractions_ok = true;
    let instances = 100;
    for seed in 0..instances {
        let mut r = rng(6000 + seed);
        let k = r.random_range(1..=8);
        let goals = (0..k).map(|_| vec3(&mut r, -3.0, 3.0)).collect();
        let ctx = LegibilityContext::new(vec3(&mut r, -3.0, 3.0), goals, r.random_range(0..k)).unwrap();
        let p: f64 = goal_probabilities(&vec3(&mut r, -3.0, 3.0), &ctx).iter().sum();
        worst_sum = worst_sum.max((p - 1.0).abs());

        let model = RobotModel::default_arm();
        let len = r.random_range(2..=20);
        let trace = random_trace(&mut r, &model, len);
        let human = HumanMotion {
            dt: 0.25,
            t0: 0.0,
            head_index: 0,
            positions: (0..len)
                .map(|_| (0..5).map(|_| vec3(&mut r, -1.0, 1.0)).collect())
                .collect(),
        };
        let object = vec3(&mut r, 2.0, 3.0);
        let eef = trace.eef_positions(&model).unwrap();
        let values = [
            separation_metric(&model, &trace, &human, uniform(&mut r, 0.0, 0.5)).unwrap(),
            visibility_metric(&model, &trace, &human, &object, uniform(&mut r, 0.1, PI)).unwrap(),
            legibility_metric(&eef, &ctx).unwrap(),
        ];
        fractions_ok &= values.iter().all(|v| (0.0..=1.0).contains(v));
    }
    outcome(
        worst_sum <= 1e-12 && fractions_ok,
        format!("{instances} instances: max |sum P - 1| = {worst_sum:.2e} (<= 1e-12); fraction metrics in [0, 1]: {fractions_ok}"),
    )
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("latency", latency),
        ("solver oracle", solver_oracle),
        ("gradient suite", gradient_suite),
        ("legibility cancellation", legibility_cancellation),
        ("feasibility", feasibility),
        ("degenerate MPC equivalence", degenerate_mpc),
        ("behavioral anticipation", anticipation),
        ("quaternion invariance", quaternion_invariance),
        ("metric probabilities", metric_probabilities),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let o = run();
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "{} of {} acceptance criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
