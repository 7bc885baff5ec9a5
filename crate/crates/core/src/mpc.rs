//! Receding-horizon planning loop.
//!
//! At every replan time the loop slices the human prediction over the
//! horizon, builds a trajectory problem from the current joint state,
//! solves it (warm-started from the previous plan), and executes the first
//! `replan_period / dt` steps under ideal position control.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use log::info;
use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::costs::{goal_pose_cost, KnotContext};
use crate::error::{ensure_dim, Error, Result};
use crate::kinematics::{forward_kinematics, JointVector, RobotModel};
use crate::scenario::Scenario;
use crate::solver::{
    manipulator_problem, vec_dvector, Control, ManipulatorCost, SolveResult, Solver, TrajectoryProblem,
};

const STEP_TOL: f64 = 1e-9;
/// Orientation part of the goal cost below which the goal counts as reached.
pub const GOAL_ORIENTATION_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub dt: f64,
    pub horizon: f64,
    pub replan_period: f64,
    pub task_duration: f64,
    pub goal_position_tol: f64,
    /// Covariance growth per step when the horizon runs past the prediction.
    pub hold_growth: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            dt: 0.25,
            horizon: 1.25,
            replan_period: 0.5,
            task_duration: 5.0,
            goal_position_tol: 0.01,
            hold_growth: crate::human_prediction::DEFAULT_HOLD_GROWTH,
        }
    }
}

fn steps_of(span: f64, dt: f64) -> Option<usize> {
    let s = span / dt;
    let r = s.round();
    ((s - r).abs() < STEP_TOL * r.max(1.0) && r >= 1.0).then_some(r as usize)
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.task_duration > 0.0) {
            return Err(Error::InvalidInput("dt and task_duration must be positive".into()));
        }
        if steps_of(self.horizon, self.dt).is_none() {
            return Err(Error::InvalidInput(format!(
                "horizon {} is not a positive multiple of dt {}",
                self.horizon, self.dt
            )));
        }
        if steps_of(self.replan_period, self.dt).is_none() {
            return Err(Error::InvalidInput(format!(
                "replan_period {} is not a positive multiple of dt {}",
                self.replan_period, self.dt
            )));
        }
        if self.horizon < self.replan_period - STEP_TOL {
            return Err(Error::InvalidInput("horizon must be at least the replan period".into()));
        }
        if !(self.hold_growth >= 1.0) || !(self.goal_position_tol >= 0.0) {
            return Err(Error::InvalidInput(
                "hold_growth must be >= 1 and goal_position_tol >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn horizon_steps(&self) -> usize {
        steps_of(self.horizon, self.dt).unwrap_or(1)
    }

    pub fn replan_steps(&self) -> usize {
        steps_of(self.replan_period, self.dt).unwrap_or(1)
    }

    /// Number of dt steps in the task, rounded up.
    pub fn task_steps(&self) -> usize {
        let s = self.task_duration / self.dt;
        let r = s.round();
        if (s - r).abs() < STEP_TOL * r.max(1.0) {
            r as usize
        } else {
            s.ceil() as usize
        }
    }
}

/// End-effector positions along the straight joint-space line from
/// `start` to `goal`, `n_steps + 1` points.
pub fn derive_nominal(
    model: &RobotModel,
    start: &JointVector,
    goal: &JointVector,
    n_steps: usize,
) -> Result<Vec<Vector3<f64>>> {
    ensure_dim("goal configuration", start.len(), goal.len())?;
    (0..=n_steps)
        .map(|i| {
            let q = if i == n_steps {
                goal.clone()
            } else if n_steps == 0 {
                start.clone()
            } else {
                start + (goal - start) * (i as f64 / n_steps as f64)
            };
            Ok(forward_kinematics(model, &q)?.eef_position())
        })
        .collect()
}

/// Drop the executed controls, pad with copies of the last one, and clamp.
pub fn warm_start_shift(
    previous: &[Control],
    steps_executed: usize,
    horizon_controls: usize,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> Vec<Control> {
    let clamp = |u: &Control| u.zip_zip_map(lower, upper, |v, lo, hi| v.clamp(lo, hi));
    let kept = &previous[steps_executed.min(previous.len())..];
    let fill = kept
        .last()
        .or(previous.last())
        .cloned()
        .unwrap_or_else(|| DVector::zeros(lower.len()));
    kept.iter()
        .chain(std::iter::repeat(&fill))
        .take(horizon_controls)
        .map(clamp)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplanRecord {
    pub time: f64,
    /// Index into the executed state sequence where this plan starts.
    pub start_step: usize,
    pub steps_executed: usize,
    #[serde(with = "vec_dvector")]
    pub plan_states: Vec<JointVector>,
    #[serde(with = "vec_dvector")]
    pub plan_controls: Vec<Control>,
    pub converged: bool,
    pub iterations: usize,
    pub cost: f64,
    pub max_bound_violation: f64,
    /// Mean position of every human joint at every knot the planner saw.
    pub human_means: Vec<Vec<[f64; 3]>>,
}

/// Wall-clock data, kept apart from the (deterministic) motion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// Solve time of each replan, seconds.
    pub per_replan: Vec<f64>,
    /// Wall time of the whole loop, seconds.
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub dt: f64,
    pub times: Vec<f64>,
    #[serde(with = "vec_dvector")]
    pub states: Vec<JointVector>,
    pub replans: Vec<ReplanRecord>,
    pub goal_reached: bool,
    #[serde(skip)]
    pub timing: Timing,
}

impl ExecutionTrace {
    fn new(dt: f64, start: JointVector) -> Self {
        Self {
            dt,
            times: vec![0.0],
            states: vec![start],
            replans: Vec::new(),
            goal_reached: false,
            timing: Timing::default(),
        }
    }

    /// Open-loop execution of a whole plan, one state per `dt` from t = 0.
    pub fn from_plan(dt: f64, states: Vec<JointVector>) -> Self {
        Self {
            dt,
            times: (0..states.len()).map(|k| k as f64 * dt).collect(),
            states,
            replans: Vec::new(),
            goal_reached: false,
            timing: Timing::default(),
        }
    }

    pub fn eef_positions(&self, model: &RobotModel) -> Result<Vec<Vector3<f64>>> {
        self.states
            .iter()
            .map(|q| Ok(forward_kinematics(model, q)?.eef_position()))
            .collect()
    }

    /// One row per dt: `time,q0..qn,eef_x,eef_y,eef_z,min_human_dist`.
    /// The distance column is empty where no human frame lines up.
    pub fn to_csv(&self, model: &RobotModel, human: Option<&crate::human_prediction::HumanMotion>) -> Result<String> {
        let n = model.n_joints();
        let mut out = String::from("time");
        for j in 0..n {
            let _ = write!(out, ",q{j}");
        }
        out.push_str(",eef_x,eef_y,eef_z,min_human_dist\n");
        for (t, q) in self.times.iter().zip(&self.states) {
            let fk = forward_kinematics(model, q)?;
            let _ = write!(out, "{t}");
            for v in q.iter() {
                let _ = write!(out, ",{v}");
            }
            let p = fk.eef_position();
            let _ = write!(out, ",{},{},{},", p.x, p.y, p.z);
            if let Some(pos) = human.and_then(|h| h.at(*t).ok()) {
                let d = crate::metrics::min_separation(model, &fk, pos);
                let _ = write!(out, "{d}");
            }
            out.push('\n');
        }
        Ok(out)
    }
}

/// Knot contexts for a plan starting at `step` (time `step * dt`).
fn knot_contexts(scenario: &Scenario, step: usize, n_knots: usize) -> Result<Vec<KnotContext>> {
    let cfg = &scenario.mpc;
    let t = step as f64 * cfg.dt;
    let frames = scenario
        .prediction
        .slice_horizon_with_growth(t, n_knots, cfg.dt, cfg.hold_growth)?;
    let last_nominal = scenario.nominal.len() - 1;
    Ok(frames
        .into_iter()
        .enumerate()
        .map(|(k, human_frame)| KnotContext {
            human_frame,
            head_index: scenario.prediction.head_index(),
            gaze_object: scenario.gaze_object,
            nominal: scenario.nominal[(step + k).min(last_nominal)],
            legibility: Arc::clone(&scenario.legibility),
            goal: scenario.goal.clone(),
            weights: scenario.weights,
            time: t + k as f64 * cfg.dt,
        })
        .collect())
}

/// Trajectory problem for a plan starting from `x0` at `step` with
/// `horizon_steps` controls.
pub fn build_problem(
    scenario: &Scenario,
    step: usize,
    x0: JointVector,
    horizon_steps: usize,
) -> Result<TrajectoryProblem<ManipulatorCost>> {
    let cfg = &scenario.mpc;
    let contexts = knot_contexts(scenario, step, horizon_steps + 1)?;
    let remaining = cfg.task_duration - step as f64 * cfg.dt;
    let arrival = remaining.max(cfg.dt);
    manipulator_problem(Arc::clone(&scenario.model), x0, cfg.dt, contexts)?
        .with_linear_warm_start(scenario.goal_q.clone(), arrival)
}

/// A single solve spanning the whole task from the start configuration.
pub fn plan_one_shot(scenario: &Scenario, solver: &mut Solver) -> Result<SolveResult> {
    scenario.mpc.validate()?;
    solver.config = scenario.solver;
    let problem = build_problem(scenario, 0, scenario.start.clone(), scenario.mpc.task_steps())?;
    solver.solve(&problem, None)
}

fn goal_reached(scenario: &Scenario, q: &JointVector) -> Result<bool> {
    let pose = forward_kinematics(&scenario.model, q)?.eef_pose;
    let pos_err = (pose.position - scenario.goal.position).norm();
    let orient = goal_pose_cost(&pose, &scenario.goal) - pos_err;
    Ok(pos_err <= scenario.mpc.goal_position_tol && orient < GOAL_ORIENTATION_TOL)
}

pub fn run_mpc(scenario: &Scenario) -> Result<ExecutionTrace> {
    let mut solver = Solver::new(scenario.solver);
    run_mpc_with(scenario, &mut solver)
}

pub fn run_mpc_with(scenario: &Scenario, solver: &mut Solver) -> Result<ExecutionTrace> {
    let cfg = scenario.mpc;
    cfg.validate()?;
    solver.config = scenario.solver;
    let loop_start = Instant::now();
    let total_steps = cfg.task_steps();
    let horizon = cfg.horizon_steps();
    let replan = cfg.replan_steps();

    let mut trace = ExecutionTrace::new(cfg.dt, scenario.start.clone());
    let mut previous: Option<(Vec<Control>, usize)> = None;
    let mut step = 0;

    while step < total_steps {
        let x = trace.states.last().unwrap().clone();
        let t = step as f64 * cfg.dt;
        let problem = build_problem(scenario, step, x, horizon)?;
        let warm = previous
            .as_ref()
            .map(|(u, shift)| warm_start_shift(u, *shift, horizon, &problem.lower, &problem.upper));

        let solve_start = Instant::now();
        let result = solver.solve(&problem, warm);
        let wall = solve_start.elapsed().as_secs_f64();
        let result = match result {
            Ok(r) => r,
            Err(e) => {
                trace.timing.total = loop_start.elapsed().as_secs_f64();
                return Err(Error::MpcAborted {
                    time: t,
                    message: e.to_string(),
                    partial: Box::new(trace),
                });
            }
        };

        let execute = replan.min(total_steps - step).min(horizon);
        for k in 1..=execute {
            trace.states.push(result.states[k].clone());
            trace.times.push((step + k) as f64 * cfg.dt);
        }
        trace.replans.push(ReplanRecord {
            time: t,
            start_step: step,
            steps_executed: execute,
            human_means: problem
                .cost
                .contexts
                .iter()
                .map(|c| c.human_frame.iter().map(|g| (*g.mean()).into()).collect())
                .collect(),
            plan_states: result.states,
            plan_controls: result.controls.clone(),
            converged: result.converged,
            iterations: result.iterations,
            cost: result.total_cost,
            max_bound_violation: result.max_bound_violation,
        });
        trace.timing.per_replan.push(wall);
        info!(
            "replan at t={t:.2}s: cost {:.4}, {} iters, {:.1} ms",
            result.total_cost,
            result.iterations,
            wall * 1e3
        );

        step += execute;
        previous = Some((result.controls, execute));

        if goal_reached(scenario, trace.states.last().unwrap())? {
            trace.goal_reached = true;
            break;
        }
    }

    trace.timing.total = loop_start.elapsed().as_secs_f64();
    Ok(trace)
}
