mod common;

use std::f64::consts::PI;

use anticip_mpc::costs::{
    distance_cost_points, goal_pose_cost, goal_probabilities, knot_cost_value, legibility_cost, total_knot_cost,
    GoalSpec, LegibilityContext,
};
use anticip_mpc::human_prediction::HumanJointGaussian;
use anticip_mpc::kinematics::EefPose;
use common::*;
use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradients_match_central_differences(seed in any::<u64>()) {
        let mut r = rng(seed);
        let model = random_model(&mut r);
        let n = model.n_joints();
        let q = random_q(&mut r, n);
        let u = dvec(&mut r, n, -1.0, 1.0);
        let ctx = random_context(&mut r, &model, &q);
        let kc = total_knot_cost(&model, &q, Some(&u), &ctx).unwrap();
        let fd_x = central_difference(|x| knot_cost_value(&model, x, Some(&u), &ctx).unwrap(), &q, 1e-6);
        let fd_u = central_difference(|v| knot_cost_value(&model, &q, Some(v), &ctx).unwrap(), &u, 1e-6);
        prop_assert!(relative_error(&kc.grad_x, &fd_x) < 1e-4);
        prop_assert!(relative_error(&kc.grad_u, &fd_u) < 1e-4);
    }

    #[test]
    fn hessian_blocks_are_psd_with_floor(seed in any::<u64>()) {
        let mut r = rng(seed);
        let model = random_model(&mut r);
        let q = random_q(&mut r, model.n_joints());
        let ctx = random_context(&mut r, &model, &q);
        let kc = total_knot_cost(&model, &q, None, &ctx).unwrap();
        for h in [&kc.hess_xx, &kc.hess_uu] {
            prop_assert!((h - h.transpose()).amax() < 1e-9 * h.amax().max(1.0));
            prop_assert!(h.diagonal().iter().all(|d| *d >= 1e-8));
            let min_eig = h.clone().symmetric_eigen().eigenvalues.min();
            prop_assert!(min_eig > -1e-9 * h.amax().max(1.0));
        }
    }

    #[test]
    fn cost_is_linear_in_the_weights(seed in any::<u64>(), a in 0.0f64..5.0) {
        let mut r = rng(seed);
        let model = random_model(&mut r);
        let q = random_q(&mut r, model.n_joints());
        let u = dvec(&mut r, model.n_joints(), -1.0, 1.0);
        let mut ctx = random_context(&mut r, &model, &q);
        let base = knot_cost_value(&model, &q, Some(&u), &ctx).unwrap();
        ctx.weights = ctx.weights.scaled(a);
        let scaled = knot_cost_value(&model, &q, Some(&u), &ctx).unwrap();
        prop_assert!((scaled - a * base).abs() <= 1e-12 * (a * base).abs().max(1.0));
    }

    #[test]
    fn legibility_probabilities_normalize(seed in any::<u64>()) {
        let mut r = rng(seed);
        let k = 1 + (seed % 6) as usize;
        let goals = (0..k).map(|_| vec3(&mut r, -5.0, 5.0)).collect();
        let ctx = LegibilityContext::new(vec3(&mut r, -5.0, 5.0), goals, (seed % k as u64) as usize).unwrap();
        let q = vec3(&mut r, -5.0, 5.0);
        let p = goal_probabilities(&q, &ctx);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn legibility_cost_lies_strictly_inside_unit_interval(seed in any::<u64>()) {
        // exponents stay within about ±12 here, so neither probability saturates
        let mut r = rng(seed);
        let k = 2 + (seed % 5) as usize;
        let goals = (0..k).map(|_| vec3(&mut r, -1.0, 1.0)).collect();
        let ctx = LegibilityContext::new(vec3(&mut r, -1.0, 1.0), goals, (seed % k as u64) as usize).unwrap();
        let c = legibility_cost(&vec3(&mut r, -1.0, 1.0), &ctx);
        prop_assert!(c > 0.0 && c < 1.0);
    }

    #[test]
    fn legibility_ignores_a_shared_path_cost(seed in any::<u64>(), shared in 0.0f64..30.0) {
        let mut r = rng(seed);
        let goals: Vec<Vector3<f64>> = (0..3).map(|_| vec3(&mut r, -1.0, 1.0)).collect();
        let s = vec3(&mut r, -1.0, 1.0);
        let q = vec3(&mut r, -1.0, 1.0);
        let ctx = LegibilityContext::new(s, goals.clone(), 1).unwrap();
        let score = |g: &Vector3<f64>| (-shared - (g - q).norm_squared() + (g - s).norm_squared()).exp();
        let direct = 1.0 - score(&goals[1]) / goals.iter().map(score).sum::<f64>();
        prop_assert!((legibility_cost(&q, &ctx) - direct).abs() <= 1e-10 * direct);
    }

    #[test]
    fn orientation_term_ignores_quaternion_sign(seed in any::<u64>()) {
        let mut r = rng(seed);
        let eef = EefPose { position: vec3(&mut r, -1.0, 1.0), orientation: unit_quaternion(&mut r) };
        let goal = GoalSpec { position: vec3(&mut r, -1.0, 1.0), orientation: unit_quaternion(&mut r) };
        let flipped = EefPose { orientation: UnitQuaternion::new_unchecked(-eef.orientation.into_inner()), ..eef.clone() };
        prop_assert_eq!(goal_pose_cost(&eef, &goal), goal_pose_cost(&flipped, &goal));
        let orient = goal_pose_cost(&eef, &goal) - (goal.position - eef.position).norm();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&orient));
    }

    #[test]
    fn distance_cost_decreases_along_a_ray(seed in any::<u64>()) {
        let mut r = rng(seed);
        let human = vec![HumanJointGaussian::new(vec3(&mut r, -1.0, 1.0), Matrix3::identity()).unwrap()];
        let dir = unit_vector(&mut r).into_inner();
        let mut last = f64::INFINITY;
        for i in 0..50 {
            let p = human[0].mean() + dir * (0.01 + 0.1 * i as f64);
            let c = distance_cost_points(&[p], &human);
            prop_assert!(c < last);
            last = c;
        }
    }
}

#[test]
fn larger_covariance_raises_distance_cost() {
    let p = [Vector3::new(1.0, 0.0, 0.0)];
    let tight = [HumanJointGaussian::isotropic(Vector3::zeros(), 1.0).unwrap()];
    let loose = [HumanJointGaussian::isotropic(Vector3::zeros(), 4.0).unwrap()];
    assert!(distance_cost_points(&p, &loose) > distance_cost_points(&p, &tight));
}

#[test]
fn quarter_turn_about_z_costs_one_half() {
    let eef = EefPose {
        position: Vector3::zeros(),
        orientation: UnitQuaternion::from_axis_angle(&Vector3::z_axis(), PI / 2.0),
    };
    let goal = GoalSpec {
        position: Vector3::zeros(),
        orientation: UnitQuaternion::identity(),
    };
    assert!((goal_pose_cost(&eef, &goal) - 0.5).abs() < 1e-15);
}
