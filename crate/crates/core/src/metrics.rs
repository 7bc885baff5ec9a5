//! Evaluation metrics for executed trajectories.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::costs::{gaze_angle, LegibilityContext};
use crate::error::{Error, Result};
use crate::human_prediction::HumanMotion;
use crate::kinematics::{forward_kinematics, FkResult, RobotModel};
use crate::mpc::ExecutionTrace;
use crate::scenario::Scenario;

pub const DEFAULT_SEPARATION_THRESHOLD: f64 = 0.2;
pub const DEFAULT_FOV_HALF_ANGLE: f64 = std::f64::consts::FRAC_PI_3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    /// Meters.
    pub threshold: f64,
    /// Radians.
    pub fov_half_angle: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_SEPARATION_THRESHOLD,
            fov_half_angle: DEFAULT_FOV_HALF_ANGLE,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold.is_finite() && self.threshold >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "separation threshold must be >= 0, got {}",
                self.threshold
            )));
        }
        if !(self.fov_half_angle > 0.0 && self.fov_half_angle <= std::f64::consts::PI) {
            return Err(Error::InvalidInput(format!(
                "fov half-angle must lie in (0, pi], got {}",
                self.fov_half_angle
            )));
        }
        Ok(())
    }
}

/// Smallest distance between any tracked robot frame and any human joint.
pub fn min_separation(model: &RobotModel, fk: &FkResult, human: &[Vector3<f64>]) -> f64 {
    model
        .tracked_frames()
        .iter()
        .flat_map(|&f| human.iter().map(move |h| (fk.frame_positions[f] - h).norm()))
        .fold(f64::INFINITY, f64::min)
}

fn check_grid(trace: &ExecutionTrace, human: &HumanMotion) -> Result<()> {
    if (trace.dt - human.dt).abs() > 1e-9 * trace.dt.max(human.dt) {
        return Err(Error::Misaligned(format!(
            "trace dt {} differs from human dt {}",
            trace.dt, human.dt
        )));
    }
    Ok(())
}

fn fraction(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Fraction of timesteps where every tracked robot frame is farther than
/// `threshold` from every human joint.
pub fn separation_metric(
    model: &RobotModel,
    trace: &ExecutionTrace,
    human: &HumanMotion,
    threshold: f64,
) -> Result<f64> {
    check_grid(trace, human)?;
    let mut clear = 0;
    for (t, q) in trace.times.iter().zip(&trace.states) {
        let fk = forward_kinematics(model, q)?;
        if min_separation(model, &fk, human.at(*t)?) > threshold {
            clear += 1;
        }
    }
    Ok(fraction(clear, trace.states.len()))
}

/// Fraction of timesteps where the end effector lies within
/// `fov_half_angle` of the head-to-object gaze ray.
pub fn visibility_metric(
    model: &RobotModel,
    trace: &ExecutionTrace,
    human: &HumanMotion,
    gaze_object: &Vector3<f64>,
    fov_half_angle: f64,
) -> Result<f64> {
    check_grid(trace, human)?;
    let mut seen = 0;
    for (t, q) in trace.times.iter().zip(&trace.states) {
        let eef = forward_kinematics(model, q)?.eef_position();
        let head = human.at(*t)?[human.head_index];
        if gaze_angle(gaze_object, &head, &eef)? <= fov_half_angle {
            seen += 1;
        }
    }
    Ok(fraction(seen, trace.states.len()))
}

/// Mean over timesteps of P(G_R | ξ_{S→Q}), with the path cost taken as
/// the squared accumulated path length and V_G(X) = ‖G − X‖².
pub fn legibility_metric(eef_path: &[Vector3<f64>], ctx: &LegibilityContext) -> Result<f64> {
    if eef_path.len() < 2 {
        return Err(Error::InvalidInput("legibility metric needs at least 2 points".into()));
    }
    let s = ctx.start();
    let mut length = 0.0;
    let mut total = 0.0;
    for (i, q) in eef_path.iter().enumerate() {
        if i > 0 {
            length += (q - eef_path[i - 1]).norm();
        }
        let path_cost = length * length;
        let logits: Vec<f64> = ctx
            .goals()
            .iter()
            .map(|g| -path_cost - (g - q).norm_squared() + (g - s).norm_squared())
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        total += (logits[ctx.goal_index()] - max).exp() / z;
    }
    Ok(total / eef_path.len() as f64)
}

/// Σ_t ‖p(t) − p*(t)‖². Longer inputs are truncated to the shorter length.
pub fn nominal_metric(eef_path: &[Vector3<f64>], nominal: &[Vector3<f64>]) -> f64 {
    if eef_path.len() != nominal.len() {
        log::warn!(
            "nominal metric: lengths differ ({} vs {}), truncating",
            eef_path.len(),
            nominal.len()
        );
    }
    eef_path.iter().zip(nominal).map(|(a, b)| (a - b).norm_squared()).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    /// Mean planning time per trajectory (sum of its replan solve times).
    pub mean: f64,
    pub std: f64,
    pub per_trajectory: Vec<f64>,
    pub per_replan: Vec<f64>,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub fn latency_metric<'a>(traces: impl IntoIterator<Item = &'a ExecutionTrace>) -> Result<LatencyReport> {
    let mut per_trajectory = Vec::new();
    let mut per_replan = Vec::new();
    for trace in traces {
        if trace.timing.per_replan.is_empty() {
            return Err(Error::InvalidInput("trace has no timing records".into()));
        }
        per_trajectory.push(trace.timing.per_replan.iter().sum());
        per_replan.extend_from_slice(&trace.timing.per_replan);
    }
    if per_trajectory.is_empty() {
        return Err(Error::InvalidInput("no traces given".into()));
    }
    let (mean, std) = mean_std(&per_trajectory);
    Ok(LatencyReport {
        mean,
        std,
        per_trajectory,
        per_replan,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dst: f64,
    pub vis: f64,
    pub leg: f64,
    pub nom: f64,
    /// Seconds; `None` when the trace carries no timing data.
    pub lat: Option<f64>,
    pub per_replan_latency: Vec<f64>,
    pub threshold: f64,
    pub fov_half_angle: f64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "dst,vis,leg,nom,lat";

    pub fn csv_row(&self) -> String {
        let lat = self.lat.map(|l| l.to_string()).unwrap_or_default();
        format!("{},{},{},{},{}", self.dst, self.vis, self.leg, self.nom, lat)
    }
}

/// All five metrics for one trace against `human`.
pub fn evaluate(
    scenario: &Scenario,
    trace: &ExecutionTrace,
    human: &HumanMotion,
    cfg: &MetricsConfig,
) -> Result<MetricsReport> {
    let model = &scenario.model;
    let eef = trace.eef_positions(model)?;
    let lat = if trace.timing.per_replan.is_empty() {
        None
    } else {
        Some(latency_metric([trace])?.mean)
    };
    Ok(MetricsReport {
        dst: separation_metric(model, trace, human, cfg.threshold)?,
        vis: visibility_metric(model, trace, human, &scenario.gaze_object, cfg.fov_half_angle)?,
        leg: legibility_metric(&eef, &scenario.legibility)?,
        nom: nominal_metric(&eef, &scenario.nominal),
        lat,
        per_replan_latency: trace.timing.per_replan.clone(),
        threshold: cfg.threshold,
        fov_half_angle: cfg.fov_half_angle,
    })
}
