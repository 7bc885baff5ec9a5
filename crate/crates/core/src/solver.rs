//! Augmented-Lagrangian iLQR for single-integrator joint trajectories.
//!
//! Dynamics are `x[k+1] = x[k] + dt * u[k]` with `x[0]` fixed, controls are
//! boxed by the joint velocity limits, and the objective is a sum of
//! per-knot costs. The inner loop is iLQR on the augmented cost; the outer
//! loop updates the bound multipliers and the penalty.

use std::sync::Arc;
use std::time::Instant;

use log::{debug, trace};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::costs::{knot_cost_value, total_knot_cost, KnotContext, KnotCost};
use crate::error::{ensure_dim, Error, Result};
use crate::kinematics::{JointVector, RobotModel};

pub type Control = DVector<f64>;

/// A sum of per-knot costs `l_k(x_k, u_k)`; the last knot has no control.
pub trait StageCost {
    fn n_knots(&self) -> usize;

    fn value(&self, knot: usize, x: &DVector<f64>, u: Option<&Control>) -> Result<f64>;

    /// Value, gradient, and PSD Hessian blocks at one knot.
    fn expand(&self, knot: usize, x: &DVector<f64>, u: Option<&Control>) -> Result<KnotCost>;
}

/// The human-aware manipulator cost: one [`KnotContext`] per knot.
#[derive(Debug, Clone)]
pub struct ManipulatorCost {
    pub model: Arc<RobotModel>,
    pub contexts: Vec<KnotContext>,
}

impl StageCost for ManipulatorCost {
    fn n_knots(&self) -> usize {
        self.contexts.len()
    }

    fn value(&self, knot: usize, x: &DVector<f64>, u: Option<&Control>) -> Result<f64> {
        knot_cost_value(&self.model, x, u, &self.contexts[knot])
    }

    fn expand(&self, knot: usize, x: &DVector<f64>, u: Option<&Control>) -> Result<KnotCost> {
        total_knot_cost(&self.model, x, u, &self.contexts[knot])
    }
}

/// Tracking cost `(x - x_ref)ᵀ Q (x - x_ref) + (u - u_ref)ᵀ R (u - u_ref)`
/// with time-varying weights. Used for oracle checks and examples.
#[derive(Debug, Clone)]
pub struct QuadraticCost {
    pub state_weights: Vec<DMatrix<f64>>,
    pub control_weights: Vec<DMatrix<f64>>,
    pub state_refs: Vec<DVector<f64>>,
    pub control_refs: Vec<DVector<f64>>,
}

impl QuadraticCost {
    /// Same weights and references at every knot.
    pub fn uniform(n_knots: usize, q: DMatrix<f64>, r: DMatrix<f64>, x_ref: DVector<f64>, u_ref: DVector<f64>) -> Self {
        Self {
            state_weights: vec![q; n_knots],
            control_weights: vec![r; n_knots - 1],
            state_refs: vec![x_ref; n_knots],
            control_refs: vec![u_ref; n_knots - 1],
        }
    }
}

impl StageCost for QuadraticCost {
    fn n_knots(&self) -> usize {
        self.state_weights.len()
    }

    fn value(&self, knot: usize, x: &DVector<f64>, u: Option<&Control>) -> Result<f64> {
        let dx = x - &self.state_refs[knot];
        let mut v = dx.dot(&(&self.state_weights[knot] * &dx));
        if let Some(u) = u {
            let du = u - &self.control_refs[knot];
            v += du.dot(&(&self.control_weights[knot] * &du));
        }
        Ok(v)
    }

    fn expand(&self, knot: usize, x: &DVector<f64>, u: Option<&Control>) -> Result<KnotCost> {
        let n = x.len();
        let q = &self.state_weights[knot];
        let qs = q + q.transpose();
        let dx = x - &self.state_refs[knot];
        let (grad_u, hess_uu) = match u {
            Some(u) => {
                let r = &self.control_weights[knot];
                let rs = r + r.transpose();
                (&rs * (u - &self.control_refs[knot]), rs)
            }
            None => (DVector::zeros(n), DMatrix::zeros(n, n)),
        };
        Ok(KnotCost {
            value: self.value(knot, x, u)?,
            grad_x: &qs * dx,
            grad_u,
            hess_xx: qs,
            hess_uu,
        })
    }
}

/// Constant-velocity warm start towards a joint-space target.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearWarmStart {
    pub target: JointVector,
    /// Time at which the straight line reaches `target`.
    pub arrival_time: f64,
}

#[derive(Debug, Clone)]
pub struct TrajectoryProblem<C> {
    pub x0: JointVector,
    pub dt: f64,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub cost: C,
    pub warm_start: Option<LinearWarmStart>,
}

impl<C: StageCost> TrajectoryProblem<C> {
    pub fn new(x0: JointVector, dt: f64, lower: DVector<f64>, upper: DVector<f64>, cost: C) -> Result<Self> {
        let n = x0.len();
        ensure_dim("lower bounds", n, lower.len())?;
        ensure_dim("upper bounds", n, upper.len())?;
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        if cost.n_knots() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 knots, got {}",
                cost.n_knots()
            )));
        }
        if !x0.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("initial state is not finite".into()));
        }
        if (0..n).any(|i| !(lower[i] < upper[i])) {
            return Err(Error::InvalidInput("control bounds must satisfy lower < upper".into()));
        }
        Ok(Self {
            x0,
            dt,
            lower,
            upper,
            cost,
            warm_start: None,
        })
    }

    pub fn with_linear_warm_start(mut self, target: JointVector, arrival_time: f64) -> Result<Self> {
        ensure_dim("warm start target", self.x0.len(), target.len())?;
        if !(arrival_time > 0.0) {
            return Err(Error::InvalidInput("arrival time must be positive".into()));
        }
        self.warm_start = Some(LinearWarmStart { target, arrival_time });
        Ok(self)
    }

    pub fn n_knots(&self) -> usize {
        self.cost.n_knots()
    }

    pub fn n_controls(&self) -> usize {
        self.n_knots() - 1
    }

    pub fn clamp(&self, u: &Control) -> Control {
        u.zip_zip_map(&self.lower, &self.upper, |v, lo, hi| v.clamp(lo, hi))
    }

    /// Straight joint-space line towards the warm-start target (zero
    /// controls without one), each step clamped into the bounds.
    pub fn initial_controls(&self) -> Vec<Control> {
        let n = self.x0.len();
        let velocity = match &self.warm_start {
            Some(ws) => self.clamp(&((&ws.target - &self.x0) / ws.arrival_time)),
            None => DVector::zeros(n),
        };
        vec![velocity; self.n_controls()]
    }
}

/// Manipulator problem straight from a model and per-knot contexts.
pub fn manipulator_problem(
    model: Arc<RobotModel>,
    x0: JointVector,
    dt: f64,
    contexts: Vec<KnotContext>,
) -> Result<TrajectoryProblem<ManipulatorCost>> {
    ensure_dim("initial state", model.n_joints(), x0.len())?;
    let lower = model.velocity_lower().clone();
    let upper = model.velocity_upper().clone();
    TrajectoryProblem::new(x0, dt, lower, upper, ManipulatorCost { model, contexts })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_inner_iters: usize,
    pub max_outer_iters: usize,
    pub cost_tol: f64,
    pub grad_tol: f64,
    pub constraint_tol: f64,
    pub init_penalty: f64,
    pub penalty_scale: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_inner_iters: 50,
            max_outer_iters: 6,
            cost_tol: 1e-4,
            grad_tol: 1e-5,
            constraint_tol: 1e-4,
            init_penalty: 1.0,
            penalty_scale: 10.0,
        }
    }
}

/// Levenberg-Marquardt shift applied to Q_uu: 0 until a factorization or
/// line search fails, then 1e-6, growing ×10 up to 1e6.
pub const REG_MIN: f64 = 1e-6;
pub const REG_MAX: f64 = 1e6;
const REG_FACTOR: f64 = 10.0;
const ARMIJO: f64 = 1e-4;
const LINE_SEARCH_STEPS: i32 = 11;
/// Required shrink of the max violation between outer iterations before
/// the penalty is left alone.
const VIOLATION_SHRINK: f64 = 4.0;

fn increase_reg(reg: f64) -> f64 {
    if reg < REG_MIN {
        REG_MIN
    } else {
        reg * REG_FACTOR
    }
}

fn decrease_reg(reg: f64) -> f64 {
    let r = reg / REG_FACTOR;
    if r < REG_MIN {
        0.0
    } else {
        r
    }
}

/// Multipliers for `u - upper ≤ 0` and `lower - u ≤ 0` at each control knot.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundDuals {
    pub upper: Vec<DVector<f64>>,
    pub lower: Vec<DVector<f64>>,
}

impl BoundDuals {
    pub fn zeros(n_controls: usize, n: usize) -> Self {
        Self {
            upper: vec![DVector::zeros(n); n_controls],
            lower: vec![DVector::zeros(n); n_controls],
        }
    }
}

/// Signed bound constraint values `c ≤ 0` at each control knot.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundViolations {
    pub upper: Vec<DVector<f64>>,
    pub lower: Vec<DVector<f64>>,
}

impl BoundViolations {
    pub fn evaluate(controls: &[Control], lower: &DVector<f64>, upper: &DVector<f64>) -> Self {
        Self {
            upper: controls.iter().map(|u| u - upper).collect(),
            lower: controls.iter().map(|u| lower - u).collect(),
        }
    }

    /// Largest positive constraint value, 0 when all bounds hold.
    pub fn max(&self) -> f64 {
        self.upper
            .iter()
            .chain(&self.lower)
            .flat_map(|c| c.iter())
            .fold(0.0, |m, &c| m.max(c))
    }
}

pub fn max_bound_violation(controls: &[Control], lower: &DVector<f64>, upper: &DVector<f64>) -> f64 {
    BoundViolations::evaluate(controls, lower, upper).max()
}

/// `duals' = max(0, duals + penalty · c)`; the penalty is scaled up unless
/// the max violation shrank by at least 4× relative to `prev_max`.
pub fn al_update(
    duals: &BoundDuals,
    penalty: f64,
    violations: &BoundViolations,
    prev_max: f64,
    penalty_scale: f64,
) -> (BoundDuals, f64) {
    let step = |l: &DVector<f64>, c: &DVector<f64>| l.zip_map(c, |l, c| (l + penalty * c).max(0.0));
    let new_duals = BoundDuals {
        upper: duals
            .upper
            .iter()
            .zip(&violations.upper)
            .map(|(l, c)| step(l, c))
            .collect(),
        lower: duals
            .lower
            .iter()
            .zip(&violations.lower)
            .map(|(l, c)| step(l, c))
            .collect(),
    };
    let now = violations.max();
    let new_penalty = if now <= prev_max / VIOLATION_SHRINK {
        penalty
    } else {
        penalty * penalty_scale
    };
    (new_duals, new_penalty)
}

/// Powell-Hestenes-Rockafellar term for one inequality `c ≤ 0`:
/// value, derivative with respect to c, and curvature.
fn phr(lambda: f64, c: f64, rho: f64) -> (f64, f64, f64) {
    let s = lambda + rho * c;
    if s > 0.0 {
        ((s * s - lambda * lambda) / (2.0 * rho), s, rho)
    } else {
        (-lambda * lambda / (2.0 * rho), 0.0, 0.0)
    }
}

struct Augmentation<'a> {
    duals: &'a BoundDuals,
    penalty: f64,
}

impl Augmentation<'_> {
    fn value(&self, k: usize, u: &Control, lower: &DVector<f64>, upper: &DVector<f64>) -> f64 {
        (0..u.len())
            .map(|j| {
                phr(self.duals.upper[k][j], u[j] - upper[j], self.penalty).0
                    + phr(self.duals.lower[k][j], lower[j] - u[j], self.penalty).0
            })
            .sum()
    }

    fn add_to(&self, k: usize, u: &Control, lower: &DVector<f64>, upper: &DVector<f64>, kc: &mut KnotCost) {
        for j in 0..u.len() {
            let (vu, du, hu) = phr(self.duals.upper[k][j], u[j] - upper[j], self.penalty);
            let (vl, dl, hl) = phr(self.duals.lower[k][j], lower[j] - u[j], self.penalty);
            kc.value += vu + vl;
            kc.grad_u[j] += du - dl;
            kc.hess_uu[(j, j)] += hu + hl;
        }
    }
}

/// Exact Euler integration of the single integrator from `x0`.
pub fn rollout<C: StageCost>(problem: &TrajectoryProblem<C>, controls: &[Control]) -> Result<Vec<JointVector>> {
    ensure_dim("control sequence", problem.n_controls(), controls.len())?;
    let mut states = Vec::with_capacity(problem.n_knots());
    states.push(problem.x0.clone());
    for u in controls {
        ensure_dim("control vector", problem.x0.len(), u.len())?;
        let next = states.last().unwrap() + u * problem.dt;
        states.push(next);
    }
    Ok(states)
}

/// Original (non-augmented) objective of a trajectory.
pub fn trajectory_cost<C: StageCost>(
    problem: &TrajectoryProblem<C>,
    states: &[JointVector],
    controls: &[Control],
) -> Result<f64> {
    let mut total = 0.0;
    for (k, x) in states.iter().enumerate() {
        total += problem.cost.value(k, x, controls.get(k))?;
    }
    Ok(total)
}

fn augmented_cost<C: StageCost>(
    problem: &TrajectoryProblem<C>,
    states: &[JointVector],
    controls: &[Control],
    aug: &Augmentation<'_>,
) -> Result<f64> {
    let mut total = trajectory_cost(problem, states, controls)?;
    for (k, u) in controls.iter().enumerate() {
        total += aug.value(k, u, &problem.lower, &problem.upper);
    }
    Ok(total)
}

/// Time-varying affine feedback `u = ū + α d + K (x − x̄)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gain {
    pub feedback: DMatrix<f64>,
    pub feedforward: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct BackwardPass {
    pub gains: Vec<Gain>,
    /// −Σ Q_uᵀ d, the first-order decrease predicted for a full step.
    pub expected_decrease: f64,
    /// ∞-norm of the control gradient Q_u over all knots.
    pub grad_norm: f64,
    /// Regularization that made every Q_uu block factorizable.
    pub regularization: f64,
}

fn expansions<C: StageCost>(
    problem: &TrajectoryProblem<C>,
    states: &[JointVector],
    controls: &[Control],
    aug: &Augmentation<'_>,
) -> Result<Vec<KnotCost>> {
    states
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let u = controls.get(k);
            let mut kc = problem.cost.expand(k, x, u)?;
            if let Some(u) = u {
                aug.add_to(k, u, &problem.lower, &problem.upper, &mut kc);
            }
            Ok(kc)
        })
        .collect()
}

/// Riccati-style recursion for `A = I`, `B = dt·I`. Returns `None` if some
/// regularized Q_uu is not positive definite.
fn recursion(exps: &[KnotCost], dt: f64, reg: f64) -> Option<BackwardPass> {
    let last = exps.last().unwrap();
    let n = last.grad_x.len();
    let mut v_x = last.grad_x.clone();
    let mut v_xx = last.hess_xx.clone();
    let mut gains = Vec::with_capacity(exps.len() - 1);
    let mut expected = 0.0;
    let mut grad_norm: f64 = 0.0;

    for e in exps[..exps.len() - 1].iter().rev() {
        let q_x = &e.grad_x + &v_x;
        let q_u = &e.grad_u + &v_x * dt;
        let q_xx = &e.hess_xx + &v_xx;
        let q_uu = &e.hess_uu + &v_xx * (dt * dt);
        let q_ux = &v_xx * dt;

        let mut q_uu_reg = q_uu.clone();
        for i in 0..n {
            q_uu_reg[(i, i)] += reg;
        }
        let chol = q_uu_reg.cholesky()?;
        let feedback = -chol.solve(&q_ux);
        let feedforward = -chol.solve(&q_u);

        expected -= q_u.dot(&feedforward);
        grad_norm = grad_norm.max(q_u.amax());

        let kt = feedback.transpose();
        v_x = &q_x + &kt * (&q_uu * &feedforward) + &kt * &q_u + q_ux.transpose() * &feedforward;
        let vxx = &q_xx + &kt * &q_uu * &feedback + &kt * &q_ux + q_ux.transpose() * &feedback;
        v_xx = (&vxx + vxx.transpose()) * 0.5;

        gains.push(Gain { feedback, feedforward });
    }
    gains.reverse();
    Some(BackwardPass {
        gains,
        expected_decrease: expected.max(0.0),
        grad_norm,
        regularization: reg,
    })
}

fn regularized_recursion(exps: &[KnotCost], dt: f64, mut reg: f64) -> Result<BackwardPass> {
    loop {
        if let Some(bp) = recursion(exps, dt, reg) {
            return Ok(bp);
        }
        reg = increase_reg(reg);
        if reg > REG_MAX {
            return Err(Error::Solver(format!(
                "backward pass failed: Q_uu not positive definite with regularization up to {REG_MAX:e}"
            )));
        }
    }
}

/// One backward pass on the augmented cost, starting without regularization.
pub fn backward_pass<C: StageCost>(
    problem: &TrajectoryProblem<C>,
    states: &[JointVector],
    controls: &[Control],
    duals: &BoundDuals,
    penalty: f64,
) -> Result<BackwardPass> {
    let aug = Augmentation { duals, penalty };
    let exps = expansions(problem, states, controls, &aug)?;
    regularized_recursion(&exps, problem.dt, 0.0)
}

#[derive(Debug, Clone)]
pub enum ForwardPass {
    Accepted {
        states: Vec<JointVector>,
        controls: Vec<Control>,
        /// Augmented cost of the accepted trajectory.
        cost: f64,
        step: f64,
    },
    /// No step length passed the Armijo test; keep the incumbent.
    Rejected,
}

fn forward_with(
    problem: &TrajectoryProblem<impl StageCost>,
    states: &[JointVector],
    controls: &[Control],
    bp: &BackwardPass,
    aug: &Augmentation<'_>,
    incumbent: f64,
) -> ForwardPass {
    for i in 0..LINE_SEARCH_STEPS {
        let alpha = 0.5f64.powi(i);
        let mut new_states = Vec::with_capacity(states.len());
        let mut new_controls = Vec::with_capacity(controls.len());
        new_states.push(problem.x0.clone());
        for (k, gain) in bp.gains.iter().enumerate() {
            let x = &new_states[k];
            let u = &controls[k] + &gain.feedforward * alpha + &gain.feedback * (x - &states[k]);
            let next = x + &u * problem.dt;
            new_controls.push(u);
            new_states.push(next);
        }
        let cost = match augmented_cost(problem, &new_states, &new_controls, aug) {
            Ok(c) if c.is_finite() => c,
            _ => continue,
        };
        if incumbent - cost >= ARMIJO * alpha * bp.expected_decrease {
            return ForwardPass::Accepted {
                states: new_states,
                controls: new_controls,
                cost,
                step: alpha,
            };
        }
    }
    ForwardPass::Rejected
}

/// Backtracking line search over α ∈ {1, 1/2, …, 2⁻¹⁰} along the gains.
pub fn forward_pass<C: StageCost>(
    problem: &TrajectoryProblem<C>,
    states: &[JointVector],
    controls: &[Control],
    bp: &BackwardPass,
    duals: &BoundDuals,
    penalty: f64,
) -> Result<ForwardPass> {
    let aug = Augmentation { duals, penalty };
    let incumbent = augmented_cost(problem, states, controls, &aug)?;
    Ok(forward_with(problem, states, controls, bp, &aug, incumbent))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    #[serde(with = "vec_dvector")]
    pub states: Vec<JointVector>,
    #[serde(with = "vec_dvector")]
    pub controls: Vec<Control>,
    pub total_cost: f64,
    pub iterations: usize,
    pub outer_iterations: usize,
    pub converged: bool,
    pub max_bound_violation: f64,
    pub wall_time: f64,
    /// Augmented cost of every accepted iterate, tagged with its outer
    /// iteration. Non-increasing within one outer iteration.
    pub cost_history: Vec<(usize, f64)>,
}

pub(crate) mod vec_dvector {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[DVector<f64>], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<&[f64]> = v.iter().map(|x| x.as_slice()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DVector<f64>>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Ok(rows.into_iter().map(DVector::from_vec).collect())
    }
}

/// AL-iLQR solver. Reusable across problems; not shared during a solve.
#[derive(Debug, Clone, Default)]
pub struct Solver {
    pub config: SolverConfig,
    exps: Vec<KnotCost>,
}

impl Solver {
    pub fn new(config: SolverConfig) -> Self {
        Self {
            config,
            exps: Vec::new(),
        }
    }

    pub fn solve<C: StageCost>(
        &mut self,
        problem: &TrajectoryProblem<C>,
        initial_controls: Option<Vec<Control>>,
    ) -> Result<SolveResult> {
        let started = Instant::now();
        let cfg = self.config;
        let n = problem.x0.len();
        let mut controls = match initial_controls {
            Some(u) => {
                ensure_dim("initial controls", problem.n_controls(), u.len())?;
                u
            }
            None => problem.initial_controls(),
        };
        let mut states = rollout(problem, &controls)?;

        let warm_cost = trajectory_cost(problem, &states, &controls)?;
        if !warm_cost.is_finite() {
            return Err(Error::Solver(format!("non-finite cost {warm_cost} at the warm start")));
        }

        let mut duals = BoundDuals::zeros(problem.n_controls(), n);
        let mut penalty = cfg.init_penalty;
        let mut prev_violation = max_bound_violation(&controls, &problem.lower, &problem.upper);
        let mut iterations = 0;
        let mut outer_iterations = 0;
        let mut converged = false;
        let mut history = Vec::new();

        for outer in 0..cfg.max_outer_iters {
            outer_iterations += 1;
            let aug = Augmentation { duals: &duals, penalty };
            let mut cost = augmented_cost(problem, &states, &controls, &aug)?;
            let mut reg = 0.0;
            let mut inner_converged = false;

            for _ in 0..cfg.max_inner_iters {
                iterations += 1;
                self.exps = expansions(problem, &states, &controls, &aug)?;
                let bp = regularized_recursion(&self.exps, problem.dt, reg)?;
                reg = bp.regularization;
                if bp.grad_norm < cfg.grad_tol {
                    inner_converged = true;
                    break;
                }
                match forward_with(problem, &states, &controls, &bp, &aug, cost) {
                    ForwardPass::Accepted {
                        states: xs,
                        controls: us,
                        cost: new_cost,
                        step,
                    } => {
                        let delta = cost - new_cost;
                        trace!("outer {outer} iter {iterations}: cost {new_cost:.6e} step {step} reg {reg:e}");
                        states = xs;
                        controls = us;
                        cost = new_cost;
                        history.push((outer, cost));
                        reg = decrease_reg(reg);
                        if delta.abs() / cost.abs().max(1.0) < cfg.cost_tol {
                            inner_converged = true;
                            break;
                        }
                    }
                    ForwardPass::Rejected => {
                        reg = increase_reg(reg);
                        if reg > REG_MAX {
                            debug!("line search stalled at regularization cap");
                            break;
                        }
                    }
                }
            }

            let violations = BoundViolations::evaluate(&controls, &problem.lower, &problem.upper);
            let violation = violations.max();
            if violation < cfg.constraint_tol && inner_converged {
                converged = true;
                break;
            }
            let (d, p) = al_update(&duals, penalty, &violations, prev_violation, cfg.penalty_scale);
            duals = d;
            penalty = p;
            prev_violation = violation;
        }

        let max_violation = max_bound_violation(&controls, &problem.lower, &problem.upper);
        let total_cost = trajectory_cost(problem, &states, &controls)?;
        debug!(
            "solve: cost {total_cost:.6e}, {iterations} iterations, {outer_iterations} outer, violation {max_violation:.2e}, converged {converged}"
        );
        Ok(SolveResult {
            states,
            controls,
            total_cost,
            iterations,
            outer_iterations,
            converged,
            max_bound_violation: max_violation,
            wall_time: started.elapsed().as_secs_f64(),
            cost_history: history,
        })
    }
}

pub fn solve<C: StageCost>(
    problem: &TrajectoryProblem<C>,
    initial_controls: Option<Vec<Control>>,
) -> Result<SolveResult> {
    Solver::default().solve(problem, initial_controls)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_problem(target: f64, r: f64, bound: f64, n_knots: usize) -> TrajectoryProblem<QuadraticCost> {
        let cost = QuadraticCost::uniform(
            n_knots,
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, r),
            DVector::from_element(1, target),
            DVector::zeros(1),
        );
        TrajectoryProblem::new(
            DVector::zeros(1),
            0.25,
            DVector::from_element(1, -bound),
            DVector::from_element(1, bound),
            cost,
        )
        .unwrap()
    }

    #[test]
    fn rollout_examples() {
        let p = scalar_problem(1.0, 0.1, 10.0, 3);
        let zero = rollout(&p, &[DVector::zeros(1), DVector::zeros(1)]).unwrap();
        assert!(zero.iter().all(|x| x[0] == 0.0));
        let ones = rollout(&p, &[DVector::from_element(1, 1.0), DVector::from_element(1, 1.0)]).unwrap();
        assert_eq!(ones.iter().map(|x| x[0]).collect::<Vec<_>>(), vec![0.0, 0.25, 0.5]);
        assert!(rollout(&p, &[DVector::zeros(1)]).is_err());
    }

    #[test]
    fn al_update_examples() {
        let duals = BoundDuals::zeros(1, 1);
        let none = BoundViolations {
            upper: vec![DVector::zeros(1)],
            lower: vec![DVector::zeros(1)],
        };
        let (d, p) = al_update(&duals, 1.0, &none, 0.0, 10.0);
        assert_eq!(d, duals);
        assert_eq!(p, 1.0);

        let some = BoundViolations {
            upper: vec![DVector::from_element(1, 0.1)],
            lower: vec![DVector::from_element(1, -2.1)],
        };
        let (d, p) = al_update(&duals, 1.0, &some, 0.12, 10.0);
        assert!((d.upper[0][0] - 0.1).abs() < 1e-15);
        assert_eq!(d.lower[0][0], 0.0);
        assert_eq!(p, 10.0);

        let (_, p) = al_update(&duals, 1.0, &some, 0.5, 10.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn zero_cost_gives_zero_gains() {
        let cost = QuadraticCost::uniform(
            4,
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 2),
            DVector::zeros(2),
            DVector::zeros(2),
        );
        let p = TrajectoryProblem::new(
            DVector::zeros(2),
            0.25,
            DVector::from_element(2, -1.0),
            DVector::from_element(2, 1.0),
            cost,
        )
        .unwrap();
        let u = p.initial_controls();
        let x = rollout(&p, &u).unwrap();
        // Q_uu is singular here, so the recursion must regularize.
        let bp = backward_pass(&p, &x, &u, &BoundDuals::zeros(3, 2), 1.0).unwrap();
        assert!(bp.regularization > 0.0);
        for g in &bp.gains {
            assert_eq!(g.feedforward, DVector::zeros(2));
            assert_eq!(g.feedback, DMatrix::zeros(2, 2));
        }
        assert_eq!(bp.expected_decrease, 0.0);
    }

    #[test]
    fn saturated_solution_respects_bounds() {
        // tracking x = 10 in 1 s needs ~10 rad/s; the bound is 1 rad/s.
        let p = scalar_problem(10.0, 1e-3, 1.0, 5);
        let res = solve(&p, None).unwrap();
        assert!(res.converged, "{res:?}");
        assert!(res.controls.iter().all(|u| u[0] <= 1.0 + 1e-4));
        assert!(res.max_bound_violation < 1e-4);
        assert!(res.controls.iter().any(|u| u[0] > 0.99));
    }

    #[test]
    fn accepted_costs_never_increase_within_outer_loop() {
        let p = scalar_problem(10.0, 1e-3, 1.0, 6);
        let res = solve(&p, None).unwrap();
        for w in res.cost_history.windows(2) {
            if w[0].0 == w[1].0 {
                assert!(w[1].1 <= w[0].1);
            }
        }
    }

    #[test]
    fn forward_pass_keeps_optimal_incumbent() {
        let p = scalar_problem(1.0, 0.1, 10.0, 4);
        let res = solve(&p, None).unwrap();
        let duals = BoundDuals::zeros(3, 1);
        let bp = backward_pass(&p, &res.states, &res.controls, &duals, 1.0).unwrap();
        match forward_pass(&p, &res.states, &res.controls, &bp, &duals, 1.0).unwrap() {
            ForwardPass::Accepted { cost, .. } => assert!(cost <= res.total_cost + 1e-12),
            ForwardPass::Rejected => {}
        }
    }
}
