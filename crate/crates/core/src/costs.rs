//! Per-knot cost terms and their weighted combination.
//!
//! Each term is a function of the joint state `q` (through forward
//! kinematics) and, for smoothness, the joint velocity `u`. The combined
//! cost returns value, gradient, and a positive semidefinite curvature
//! model for the iLQR backward pass:
//!
//! * distance: the PSD rank-one part of the exact Hessian,
//! * legibility and goal orientation: Gauss-Newton on `sqrt(cost)`,
//! * nominal and goal position (Euclidean norms): the IRLS majorizer
//!   `I / ‖d‖`,
//! * visibility: the same majorizer idea applied to the gaze angle,
//! * smoothness: exact.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::human_prediction::{HumanFrame, HumanJointGaussian};
use crate::kinematics::{
    forward_kinematics, quat_from_array, quat_to_array, EefPose, FkResult, JointVector, RobotModel,
};

/// Regularizer added to the Mahalanobis denominator of the distance cost.
pub const DISTANCE_EPS: f64 = 1e-6;
/// Step used for finite-difference derivatives of the orientation term.
pub const ORIENTATION_FD_STEP: f64 = 1e-6;
/// Minimum diagonal entry of every returned Hessian block.
pub const HESSIAN_DIAG_FLOOR: f64 = 1e-8;

const NORM_FLOOR: f64 = 1e-3;
const ANGLE_FLOOR: f64 = 1e-2;
const DEGENERATE_RAY: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub w_dist: f64,
    pub w_vis: f64,
    pub w_leg: f64,
    pub w_nom: f64,
    pub w_smooth: f64,
    pub w_goal: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            w_dist: 0.5,
            w_vis: 0.05,
            w_leg: 0.5,
            w_nom: 2.0,
            w_smooth: 0.1,
            w_goal: 1.0,
        }
    }
}

impl CostWeights {
    pub fn zero() -> Self {
        Self {
            w_dist: 0.0,
            w_vis: 0.0,
            w_leg: 0.0,
            w_nom: 0.0,
            w_smooth: 0.0,
            w_goal: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.as_array().iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "cost weights must be finite and >= 0: {self:?}"
            )))
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            w_dist: a * self.w_dist,
            w_vis: a * self.w_vis,
            w_leg: a * self.w_leg,
            w_nom: a * self.w_nom,
            w_smooth: a * self.w_smooth,
            w_goal: a * self.w_goal,
        }
    }

    fn as_array(&self) -> [f64; 6] {
        [
            self.w_dist,
            self.w_vis,
            self.w_leg,
            self.w_nom,
            self.w_smooth,
            self.w_goal,
        ]
    }
}

/// Observer-side goal inference setup: where the motion started and which
/// candidate goal is the real one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LegibilityFile", into = "LegibilityFile")]
pub struct LegibilityContext {
    start: Vector3<f64>,
    goals: Vec<Vector3<f64>>,
    goal_index: usize,
}

impl LegibilityContext {
    pub fn new(start: Vector3<f64>, goals: Vec<Vector3<f64>>, goal_index: usize) -> Result<Self> {
        if goals.is_empty() {
            return Err(Error::InvalidInput(
                "legibility needs at least one candidate goal".into(),
            ));
        }
        if goal_index >= goals.len() {
            return Err(Error::InvalidInput(format!(
                "goal_index {goal_index} out of range for {} goals",
                goals.len()
            )));
        }
        if !start
            .iter()
            .chain(goals.iter().flat_map(|g| g.iter()))
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidInput("legibility positions must be finite".into()));
        }
        Ok(Self {
            start,
            goals,
            goal_index,
        })
    }

    pub fn start(&self) -> &Vector3<f64> {
        &self.start
    }

    pub fn goals(&self) -> &[Vector3<f64>] {
        &self.goals
    }

    pub fn goal_index(&self) -> usize {
        self.goal_index
    }

    pub fn with_start(&self, start: Vector3<f64>) -> Self {
        Self { start, ..self.clone() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LegibilityFile {
    start: [f64; 3],
    goals: Vec<[f64; 3]>,
    goal_index: usize,
}

impl TryFrom<LegibilityFile> for LegibilityContext {
    type Error = Error;

    fn try_from(f: LegibilityFile) -> Result<Self> {
        Self::new(
            f.start.into(),
            f.goals.into_iter().map(Vector3::from).collect(),
            f.goal_index,
        )
    }
}

impl From<LegibilityContext> for LegibilityFile {
    fn from(c: LegibilityContext) -> Self {
        LegibilityFile {
            start: c.start.into(),
            goals: c.goals.iter().map(|g| (*g).into()).collect(),
            goal_index: c.goal_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GoalFile", into = "GoalFile")]
pub struct GoalSpec {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl GoalSpec {
    pub fn from_pose(pose: &EefPose) -> Self {
        Self {
            position: pose.position,
            orientation: pose.orientation,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GoalFile {
    position: [f64; 3],
    /// [w, x, y, z]
    orientation: [f64; 4],
}

impl TryFrom<GoalFile> for GoalSpec {
    type Error = Error;

    fn try_from(f: GoalFile) -> Result<Self> {
        Ok(Self {
            position: f.position.into(),
            orientation: quat_from_array(f.orientation)?,
        })
    }
}

impl From<GoalSpec> for GoalFile {
    fn from(g: GoalSpec) -> Self {
        GoalFile {
            position: g.position.into(),
            orientation: quat_to_array(&g.orientation),
        }
    }
}

/// Everything the cost needs at one knot besides `q` and `u`.
#[derive(Debug, Clone)]
pub struct KnotContext {
    pub human_frame: HumanFrame,
    pub head_index: usize,
    pub gaze_object: Vector3<f64>,
    pub nominal: Vector3<f64>,
    pub legibility: Arc<LegibilityContext>,
    pub goal: GoalSpec,
    pub weights: CostWeights,
    pub time: f64,
}

impl KnotContext {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.head_index >= self.human_frame.len() {
            return Err(Error::InvalidInput(format!(
                "head_index {} out of range for {} human joints",
                self.head_index,
                self.human_frame.len()
            )));
        }
        Ok(())
    }

    fn head(&self) -> &HumanJointGaussian {
        &self.human_frame[self.head_index]
    }
}

// ---------------------------------------------------------------------------
// Individual terms (values)

fn mahalanobis_sq(point: &Vector3<f64>, g: &HumanJointGaussian) -> f64 {
    let d = point - g.mean();
    d.dot(&(g.precision() * d))
}

/// Σ_h Σ_r 1 / (dᵀ Σ_h⁻¹ d + ε) over the given robot points.
pub fn distance_cost_points(points: &[Vector3<f64>], human_frame: &[HumanJointGaussian]) -> f64 {
    human_frame
        .iter()
        .flat_map(|h| points.iter().map(move |p| 1.0 / (mahalanobis_sq(p, h) + DISTANCE_EPS)))
        .sum()
}

fn tracked_points(model: &RobotModel, fk: &FkResult) -> Vec<Vector3<f64>> {
    model.tracked_frames().iter().map(|&f| fk.frame_positions[f]).collect()
}

pub fn distance_cost(model: &RobotModel, q: &JointVector, human_frame: &[HumanJointGaussian]) -> Result<f64> {
    let fk = forward_kinematics(model, q)?;
    Ok(distance_cost_points(&tracked_points(model, &fk), human_frame))
}

/// Angle at `head` between the rays towards `object` and `eef`, radians.
pub fn gaze_angle(object: &Vector3<f64>, head: &Vector3<f64>, eef: &Vector3<f64>) -> Result<f64> {
    let a = object - head;
    let b = eef - head;
    let (na, nb) = (a.norm(), b.norm());
    if na < DEGENERATE_RAY || nb < DEGENERATE_RAY {
        return Err(Error::Degenerate("gaze ray has zero length".into()));
    }
    Ok((a.dot(&b) / (na * nb)).clamp(-1.0, 1.0).acos())
}

/// Gaze angle divided by the head's scalar standard deviation.
pub fn visibility_cost_at(eef: &Vector3<f64>, head: &HumanJointGaussian, object: &Vector3<f64>) -> Result<f64> {
    Ok(gaze_angle(object, head.mean(), eef)? / head.scalar_std())
}

pub fn visibility_cost(
    model: &RobotModel,
    q: &JointVector,
    head: &HumanJointGaussian,
    object: &Vector3<f64>,
) -> Result<f64> {
    let fk = forward_kinematics(model, q)?;
    visibility_cost_at(&fk.eef_position(), head, object)
}

/// Posterior over candidate goals for an observer who has seen the motion
/// go from `ctx.start` to `q`: softmax of ‖G − S‖² − ‖G − Q‖².
pub fn goal_probabilities(q: &Vector3<f64>, ctx: &LegibilityContext) -> Vec<f64> {
    let scores: Vec<f64> = ctx
        .goals
        .iter()
        .map(|g| (g - ctx.start).norm_squared() - (g - q).norm_squared())
        .collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / z).collect()
}

/// 1 − P(G_R | S → Q), with the path-cost term already cancelled.
pub fn legibility_cost(eef: &Vector3<f64>, ctx: &LegibilityContext) -> f64 {
    1.0 - goal_probabilities(eef, ctx)[ctx.goal_index]
}

pub fn nominal_cost(eef: &Vector3<f64>, nominal: &Vector3<f64>) -> f64 {
    (eef - nominal).norm()
}

pub fn smoothness_cost(u: &DVector<f64>) -> f64 {
    u.norm_squared()
}

fn orientation_error(q: &UnitQuaternion<f64>, goal: &UnitQuaternion<f64>) -> f64 {
    let dot = q.coords.dot(&goal.coords);
    1.0 - dot * dot
}

pub fn goal_pose_cost(eef: &EefPose, goal: &GoalSpec) -> f64 {
    (goal.position - eef.position).norm() + orientation_error(&eef.orientation, &goal.orientation)
}

// ---------------------------------------------------------------------------
// Combined cost

/// Unweighted term values at one knot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostTerms {
    pub dist: f64,
    pub vis: f64,
    pub leg: f64,
    pub nom: f64,
    pub smooth: f64,
    pub goal: f64,
}

impl CostTerms {
    pub fn weighted(&self, w: &CostWeights) -> f64 {
        w.w_dist * self.dist
            + w.w_vis * self.vis
            + w.w_leg * self.leg
            + w.w_nom * self.nom
            + w.w_smooth * self.smooth
            + w.w_goal * self.goal
    }
}

/// Value plus first and second order model at one knot.
#[derive(Debug, Clone)]
pub struct KnotCost {
    pub value: f64,
    pub grad_x: DVector<f64>,
    pub grad_u: DVector<f64>,
    pub hess_xx: DMatrix<f64>,
    pub hess_uu: DMatrix<f64>,
}

fn check_inputs(model: &RobotModel, u: Option<&DVector<f64>>, ctx: &KnotContext) -> Result<()> {
    ctx.validate()?;
    if let Some(u) = u {
        ensure_dim("control vector", model.n_joints(), u.len())?;
    }
    Ok(())
}

/// Unweighted terms. Terms whose weight is zero are skipped and reported as 0.
pub fn knot_cost_terms(
    model: &RobotModel,
    q: &JointVector,
    u: Option<&DVector<f64>>,
    ctx: &KnotContext,
) -> Result<CostTerms> {
    check_inputs(model, u, ctx)?;
    let w = &ctx.weights;
    let fk = forward_kinematics(model, q)?;
    let eef = fk.eef_position();
    let mut terms = CostTerms::default();
    if w.w_dist != 0.0 {
        terms.dist = distance_cost_points(&tracked_points(model, &fk), &ctx.human_frame);
    }
    if w.w_vis != 0.0 {
        terms.vis = visibility_cost_at(&eef, ctx.head(), &ctx.gaze_object)?;
    }
    if w.w_leg != 0.0 {
        terms.leg = legibility_cost(&eef, &ctx.legibility);
    }
    if w.w_nom != 0.0 {
        terms.nom = nominal_cost(&eef, &ctx.nominal);
    }
    if w.w_smooth != 0.0 {
        terms.smooth = u.map_or(0.0, smoothness_cost);
    }
    if w.w_goal != 0.0 {
        terms.goal = goal_pose_cost(&fk.eef_pose, &ctx.goal);
    }
    Ok(terms)
}

/// Weighted cost value only.
pub fn knot_cost_value(
    model: &RobotModel,
    q: &JointVector,
    u: Option<&DVector<f64>>,
    ctx: &KnotContext,
) -> Result<f64> {
    Ok(knot_cost_terms(model, q, u, ctx)?.weighted(&ctx.weights))
}

/// Gradient and curvature of a point-wise term, accumulated in Cartesian space.
#[derive(Default)]
struct PointModel {
    grad: Vector3<f64>,
    hess: Matrix3<f64>,
}

impl PointModel {
    fn add(&mut self, weight: f64, grad: Vector3<f64>, hess: Matrix3<f64>) {
        self.grad += grad * weight;
        self.hess += hess * weight;
    }

    fn chain_into(&self, jac: &DMatrix<f64>, grad_x: &mut DVector<f64>, hess_xx: &mut DMatrix<f64>) {
        let jt = jac.transpose();
        let g = DVector::from_column_slice(self.grad.as_slice());
        let h = DMatrix::from_column_slice(3, 3, self.hess.as_slice());
        *grad_x += &jt * g;
        *hess_xx += &jt * h * jac;
    }
}

fn norm_model(d: Vector3<f64>) -> (f64, Vector3<f64>, Matrix3<f64>) {
    let n = d.norm();
    let grad = if n > 0.0 { d / n } else { Vector3::zeros() };
    (n, grad, Matrix3::identity() / n.max(NORM_FLOOR))
}

/// Weighted knot cost with gradient and PSD Hessian blocks. `u` is `None`
/// at the terminal knot.
pub fn total_knot_cost(
    model: &RobotModel,
    q: &JointVector,
    u: Option<&DVector<f64>>,
    ctx: &KnotContext,
) -> Result<KnotCost> {
    check_inputs(model, u, ctx)?;
    let n = model.n_joints();
    let w = ctx.weights;
    let fk = forward_kinematics(model, q)?;
    let eef = fk.eef_position();

    let mut value = 0.0;
    let mut grad_x = DVector::zeros(n);
    let mut grad_u = DVector::zeros(n);
    let mut hess_xx = DMatrix::zeros(n, n);
    let mut hess_uu = DMatrix::<f64>::zeros(n, n);

    if w.w_dist != 0.0 {
        for &frame in model.tracked_frames() {
            let p = fk.frame_positions[frame];
            let mut pm = PointModel::default();
            for h in &ctx.human_frame {
                let pd = h.precision() * (p - h.mean());
                let m = (p - h.mean()).dot(&pd) + DISTANCE_EPS;
                let dm = pd * 2.0;
                value += w.w_dist / m;
                pm.add(w.w_dist, -dm / (m * m), dm * dm.transpose() * (2.0 / (m * m * m)));
            }
            pm.chain_into(&fk.position_jacobian(frame)?, &mut grad_x, &mut hess_xx);
        }
    }

    let mut eef_model = PointModel::default();

    if w.w_vis != 0.0 {
        let head = ctx.head();
        let sigma = head.scalar_std();
        let a = ctx.gaze_object - head.mean();
        let b = eef - head.mean();
        let theta = gaze_angle(&ctx.gaze_object, head.mean(), &eef)?;
        value += w.w_vis * theta / sigma;
        let (ah, nb) = (a.normalize(), b.norm());
        let bh = b / nb;
        let perp = ah - bh * theta.cos();
        let sin = theta.sin();
        if sin > 1e-9 {
            let g = -perp / (nb * sin) / sigma;
            eef_model.add(w.w_vis, g, g * g.transpose() * (sigma / theta.max(ANGLE_FLOOR)));
        }
    }

    if w.w_leg != 0.0 {
        let ctx_l = &ctx.legibility;
        let probs = goal_probabilities(&eef, ctx_l);
        let p_r = probs[ctx_l.goal_index];
        let mean_goal: Vector3<f64> = ctx_l.goals.iter().zip(&probs).map(|(g, p)| g * *p).sum();
        let c = 1.0 - p_r;
        value += w.w_leg * c;
        let g = -(ctx_l.goals[ctx_l.goal_index] - mean_goal) * (2.0 * p_r);
        eef_model.add(w.w_leg, g, g * g.transpose() / (2.0 * c.max(1e-9)));
    }

    if w.w_nom != 0.0 {
        let (c, g, h) = norm_model(eef - ctx.nominal);
        value += w.w_nom * c;
        eef_model.add(w.w_nom, g, h);
    }

    if w.w_goal != 0.0 {
        let (c, g, h) = norm_model(eef - ctx.goal.position);
        value += w.w_goal * c;
        eef_model.add(w.w_goal, g, h);

        let o = orientation_error(&fk.eef_pose.orientation, &ctx.goal.orientation);
        value += w.w_goal * o;
        let grad_o = orientation_gradient(model, q, &ctx.goal.orientation)?;
        grad_x.axpy(w.w_goal, &grad_o, 1.0);
        hess_xx += &grad_o * grad_o.transpose() * (w.w_goal / (2.0 * o.max(1e-6)));
    }

    if w.w_vis != 0.0 || w.w_leg != 0.0 || w.w_nom != 0.0 || w.w_goal != 0.0 {
        eef_model.chain_into(&fk.position_jacobian(model.eef_frame())?, &mut grad_x, &mut hess_xx);
    }

    if let Some(u) = u {
        if w.w_smooth != 0.0 {
            value += w.w_smooth * u.norm_squared();
            grad_u.axpy(2.0 * w.w_smooth, u, 1.0);
            for i in 0..n {
                hess_uu[(i, i)] += 2.0 * w.w_smooth;
            }
        }
    }

    for i in 0..n {
        hess_xx[(i, i)] = hess_xx[(i, i)].max(HESSIAN_DIAG_FLOOR);
        hess_uu[(i, i)] = hess_uu[(i, i)].max(HESSIAN_DIAG_FLOOR);
    }

    Ok(KnotCost {
        value,
        grad_x,
        grad_u,
        hess_xx,
        hess_uu,
    })
}

/// Central differences of the orientation term with respect to `q`.
fn orientation_gradient(model: &RobotModel, q: &JointVector, goal: &UnitQuaternion<f64>) -> Result<DVector<f64>> {
    let h = ORIENTATION_FD_STEP;
    let mut grad = DVector::zeros(q.len());
    let mut probe = q.clone();
    for j in 0..q.len() {
        probe[j] = q[j] + h;
        let plus = orientation_error(&forward_kinematics(model, &probe)?.eef_pose.orientation, goal);
        probe[j] = q[j] - h;
        let minus = orientation_error(&forward_kinematics(model, &probe)?.eef_pose.orientation, goal);
        probe[j] = q[j];
        grad[j] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}
