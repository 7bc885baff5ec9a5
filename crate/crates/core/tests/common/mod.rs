//! Random instance generators and independent oracles shared by the
//! integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use anticip_mpc::costs::{gaze_angle, CostWeights, GoalSpec, KnotContext, LegibilityContext};
use anticip_mpc::human_prediction::HumanJointGaussian;
use anticip_mpc::kinematics::{forward_kinematics, Joint, RobotModel};
use nalgebra::{DMatrix, DVector, Isometry3, Matrix3, Translation3, Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn vec3(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vector3<f64> {
    Vector3::new(uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi))
}

pub fn unit_vector(rng: &mut ChaCha8Rng) -> Unit<Vector3<f64>> {
    loop {
        let v = vec3(rng, -1.0, 1.0);
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return Unit::new_normalize(v);
        }
    }
}

pub fn unit_quaternion(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&unit_vector(rng), uniform(rng, -PI, PI))
}

pub fn dvec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| uniform(rng, lo, hi))
}

/// Serial chain with random axes, link offsets, base pose, and tracked frames.
pub fn random_model(rng: &mut ChaCha8Rng) -> RobotModel {
    let n = rng.random_range(2..=7);
    let joints = (0..n)
        .map(|_| Joint {
            axis: unit_vector(rng),
            offset: unit_vector(rng).into_inner() * uniform(rng, 0.05, 0.4),
        })
        .collect();
    let base = Isometry3::from_parts(Translation3::from(vec3(rng, -0.5, 0.5)), unit_quaternion(rng));
    let mut tracked: Vec<usize> = (1..n).filter(|_| rng.random_bool(0.5)).collect();
    tracked.push(n);
    let upper = dvec(rng, n, 0.5, 3.0);
    RobotModel::new(joints, base, tracked, -upper.clone(), upper).unwrap()
}

pub fn random_q(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    dvec(rng, n, -PI, PI)
}

pub fn random_spd(rng: &mut ChaCha8Rng, scale: f64) -> Matrix3<f64> {
    let a = Matrix3::from_fn(|_, _| uniform(rng, -1.0, 1.0));
    (a * a.transpose() + Matrix3::identity() * 0.2) * scale
}

/// Knot context with every weight active and geometry kept away from the
/// visibility angle's singular points (0 and π).
pub fn random_context(rng: &mut ChaCha8Rng, model: &RobotModel, q: &DVector<f64>) -> KnotContext {
    let eef = forward_kinematics(model, q).unwrap().eef_position();
    let n_human = rng.random_range(1..=5);
    let head_index = rng.random_range(0..n_human);
    let mut human_frame: Vec<HumanJointGaussian> = (0..n_human)
        .map(|_| HumanJointGaussian::new(eef + vec3(rng, -1.0, 1.0), random_spd(rng, 0.02)).unwrap())
        .collect();
    let gaze_object = loop {
        let head = eef + vec3(rng, -1.0, 1.0);
        let object = eef + vec3(rng, -1.0, 1.0);
        let ok = gaze_angle(&object, &head, &eef).is_ok_and(|a| a > 0.2 && a < PI - 0.2)
            && (object - head).norm() > 0.2
            && (eef - head).norm() > 0.2;
        if ok {
            human_frame[head_index] = HumanJointGaussian::new(head, random_spd(rng, 0.02)).unwrap();
            break object;
        }
    };
    let n_goals = rng.random_range(2..=4);
    let goals = (0..n_goals).map(|_| vec3(rng, -1.0, 1.0)).collect();
    let legibility = LegibilityContext::new(vec3(rng, -1.0, 1.0), goals, rng.random_range(0..n_goals)).unwrap();
    let weights = CostWeights {
        w_dist: uniform(rng, 0.1, 2.0),
        w_vis: uniform(rng, 0.1, 2.0),
        w_leg: uniform(rng, 0.1, 2.0),
        w_nom: uniform(rng, 0.1, 2.0),
        w_smooth: uniform(rng, 0.1, 2.0),
        w_goal: uniform(rng, 0.1, 2.0),
    };
    KnotContext {
        human_frame,
        head_index,
        gaze_object,
        nominal: eef + vec3(rng, -0.5, 0.5),
        legibility: Arc::new(legibility),
        goal: GoalSpec {
            position: eef + vec3(rng, -0.5, 0.5),
            orientation: unit_quaternion(rng),
        },
        weights,
        time: 0.0,
    }
}

/// Central differences of a scalar function.
pub fn central_difference(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        (f(&xp) - f(&xm)) / (2.0 * h)
    })
}

pub fn relative_error(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

/// Time-varying tracking LQR with single-integrator dynamics, solved by a
/// plain affine Riccati recursion. Cost per knot:
/// (x-r)ᵀQ(x-r) + (u-s)ᵀR(u-s), terminal knot without the control term.
pub struct TrackingLqr {
    pub x0: DVector<f64>,
    pub dt: f64,
    pub q: Vec<DMatrix<f64>>,
    pub r: Vec<DMatrix<f64>>,
    pub x_ref: Vec<DVector<f64>>,
    pub u_ref: Vec<DVector<f64>>,
}

impl TrackingLqr {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let n = rng.random_range(1..=7);
        let knots = rng.random_range(3..=25);
        let spd = |rng: &mut ChaCha8Rng, floor: f64| {
            let a = DMatrix::from_fn(n, n, |_, _| uniform(rng, -1.0, 1.0));
            &a * a.transpose() + DMatrix::identity(n, n) * floor
        };
        Self {
            x0: dvec(rng, n, -1.0, 1.0),
            dt: uniform(rng, 0.05, 0.5),
            q: (0..knots).map(|_| spd(rng, 0.1)).collect(),
            r: (0..knots - 1).map(|_| spd(rng, 0.1)).collect(),
            x_ref: (0..knots).map(|_| dvec(rng, n, -1.0, 1.0)).collect(),
            u_ref: (0..knots - 1).map(|_| dvec(rng, n, -0.5, 0.5)).collect(),
        }
    }

    /// Optimal state trajectory. The value function is xᵀPx + 2pᵀx + c.
    pub fn riccati_states(&self) -> Vec<DVector<f64>> {
        let n = self.x0.len();
        let big_n = self.q.len() - 1;
        let dt = self.dt;
        let mut p_mat = self.q[big_n].clone();
        let mut p_vec = -(&self.q[big_n] * &self.x_ref[big_n]);
        let mut gains = Vec::with_capacity(big_n);
        for k in (0..big_n).rev() {
            let h_xx = &self.q[k] + &p_mat;
            let h_ux = &p_mat * dt;
            let h_uu = &self.r[k] + &p_mat * (dt * dt);
            let h_x = -(&self.q[k] * &self.x_ref[k]) + &p_vec;
            let h_u = -(&self.r[k] * &self.u_ref[k]) + &p_vec * dt;
            let inv = h_uu.try_inverse().expect("H_uu invertible");
            let k_fb = -(&inv * &h_ux);
            let k_ff = -(&inv * &h_u);
            p_mat = &h_xx + h_ux.transpose() * &k_fb;
            p_mat = (&p_mat + p_mat.transpose()) * 0.5;
            p_vec = &h_x + h_ux.transpose() * &k_ff;
            gains.push((k_fb, k_ff));
        }
        gains.reverse();
        let mut xs = vec![self.x0.clone()];
        for (k_fb, k_ff) in &gains {
            let x = xs.last().unwrap();
            let u = k_fb * x + k_ff;
            xs.push(x + u * dt);
        }
        debug_assert_eq!(xs[0].len(), n);
        xs
    }
}
