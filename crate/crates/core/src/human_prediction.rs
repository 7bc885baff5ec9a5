//! Stochastic human motion predictions: per-joint Gaussians over a time grid.
//!
//! Predictions are either loaded from JSON or synthesized as a seeded
//! minimum-jerk reach. The planner only ever sees horizon-aligned slices.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Covariance multiplier per prediction step held past the last frame.
pub const DEFAULT_HOLD_GROWTH: f64 = 1.5;

const SYMMETRY_TOL: f64 = 1e-9;
const EIGEN_FLOOR: f64 = 1e-9;
const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct HumanJointGaussian {
    mean: Vector3<f64>,
    covariance: Matrix3<f64>,
    precision: Matrix3<f64>,
}

impl HumanJointGaussian {
    pub fn new(mean: Vector3<f64>, covariance: Matrix3<f64>) -> Result<Self> {
        if !mean.iter().chain(covariance.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite mean or covariance".into()));
        }
        if (covariance - covariance.transpose()).abs().max() > SYMMETRY_TOL {
            return Err(Error::InvalidInput("covariance is not symmetric".into()));
        }
        let chol = covariance
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { frame: 0, joint: 0 })?;
        Ok(Self {
            mean,
            covariance,
            precision: chol.inverse(),
        })
    }

    pub fn isotropic(mean: Vector3<f64>, variance: f64) -> Result<Self> {
        Self::new(mean, Matrix3::identity() * variance)
    }

    pub fn mean(&self) -> &Vector3<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix3<f64> {
        &self.covariance
    }

    /// Inverse covariance.
    pub fn precision(&self) -> &Matrix3<f64> {
        &self.precision
    }

    /// Scalar spread used for the head: sqrt(trace(Σ) / 3).
    pub fn scalar_std(&self) -> f64 {
        (self.covariance.trace() / 3.0).sqrt()
    }

    fn scaled(&self, factor: f64) -> Self {
        Self {
            mean: self.mean,
            covariance: self.covariance * factor,
            precision: self.precision / factor,
        }
    }
}

/// Blend two Gaussians elementwise, re-symmetrize, and floor eigenvalues so
/// the result stays positive definite.
fn lerp_gaussian(a: &HumanJointGaussian, b: &HumanJointGaussian, w: f64) -> Result<HumanJointGaussian> {
    let mean = a.mean * (1.0 - w) + b.mean * w;
    let cov = a.covariance * (1.0 - w) + b.covariance * w;
    let mut cov = (cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(cov);
    if eig.eigenvalues.min() < EIGEN_FLOOR {
        let floored = eig.eigenvalues.map(|v| v.max(EIGEN_FLOOR));
        cov = eig.eigenvectors * Matrix3::from_diagonal(&floored) * eig.eigenvectors.transpose();
        cov = (cov + cov.transpose()) * 0.5;
    }
    HumanJointGaussian::new(mean, cov)
}

/// One timestep of a prediction: a Gaussian per human joint.
pub type HumanFrame = Vec<HumanJointGaussian>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PredictionFile", into = "PredictionFile")]
pub struct HumanPrediction {
    joint_names: Vec<String>,
    head_index: usize,
    frames: Vec<HumanFrame>,
    dt: f64,
    t0: f64,
}

impl HumanPrediction {
    pub fn new(joint_names: Vec<String>, head_index: usize, frames: Vec<HumanFrame>, dt: f64, t0: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Schema(format!("dt must be positive, got {dt}")));
        }
        if !t0.is_finite() {
            return Err(Error::Schema("t0 must be finite".into()));
        }
        if frames.is_empty() {
            return Err(Error::Schema("prediction has no frames".into()));
        }
        let n = joint_names.len();
        if n == 0 {
            return Err(Error::Schema("prediction has no joints".into()));
        }
        if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.len() != n) {
            return Err(Error::Schema(format!(
                "frame {i} has {} joints, expected {n} (ragged prediction)",
                f.len()
            )));
        }
        if head_index >= n {
            return Err(Error::Schema(format!(
                "head_index {head_index} out of range for {n} joints"
            )));
        }
        Ok(Self {
            joint_names,
            head_index,
            frames,
            dt,
            t0,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: PredictionFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        raw.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn n_joints(&self) -> usize {
        self.joint_names.len()
    }

    pub fn head_index(&self) -> usize {
        self.head_index
    }

    pub fn frames(&self) -> &[HumanFrame] {
        &self.frames
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Timestamp of the last frame.
    pub fn t_end(&self) -> f64 {
        self.t0 + self.dt * (self.frames.len() - 1) as f64
    }

    /// Gaussians for `n_knots` times `t_start + k * dt`.
    ///
    /// Times between grid points are linearly interpolated. Times past the
    /// last frame hold its mean and inflate its covariance by
    /// [`DEFAULT_HOLD_GROWTH`] per prediction step.
    pub fn slice_horizon(&self, t_start: f64, n_knots: usize, dt: f64) -> Result<Vec<HumanFrame>> {
        self.slice_horizon_with_growth(t_start, n_knots, dt, DEFAULT_HOLD_GROWTH)
    }

    pub fn slice_horizon_with_growth(
        &self,
        t_start: f64,
        n_knots: usize,
        dt: f64,
        growth: f64,
    ) -> Result<Vec<HumanFrame>> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("slice dt must be positive, got {dt}")));
        }
        if !(growth >= 1.0) {
            return Err(Error::InvalidInput(format!("hold growth must be >= 1, got {growth}")));
        }
        if t_start < self.t0 - GRID_TOL * self.dt {
            return Err(Error::InvalidInput(format!(
                "slice start {t_start} precedes prediction start {}",
                self.t0
            )));
        }
        (0..n_knots)
            .map(|k| self.frame_at(t_start + k as f64 * dt, growth))
            .collect()
    }

    fn frame_at(&self, t: f64, growth: f64) -> Result<HumanFrame> {
        let last = self.frames.len() - 1;
        let mut s = ((t - self.t0) / self.dt).max(0.0);
        let nearest = s.round();
        if (s - nearest).abs() < GRID_TOL {
            s = nearest;
        }
        if s >= last as f64 {
            let overrun = s - last as f64;
            if overrun == 0.0 {
                return Ok(self.frames[last].clone());
            }
            let factor = growth.powf(overrun);
            return Ok(self.frames[last].iter().map(|g| g.scaled(factor)).collect());
        }
        let lo = s.floor() as usize;
        let w = s - lo as f64;
        if w == 0.0 {
            return Ok(self.frames[lo].clone());
        }
        self.frames[lo]
            .iter()
            .zip(&self.frames[lo + 1])
            .map(|(a, b)| lerp_gaussian(a, b, w))
            .collect()
    }

    /// Mean positions per frame, dropping the covariances.
    pub fn mean_motion(&self) -> HumanMotion {
        HumanMotion {
            dt: self.dt,
            t0: self.t0,
            head_index: self.head_index,
            positions: self.frames.iter().map(|f| f.iter().map(|g| g.mean).collect()).collect(),
        }
    }

    /// CSV of mean positions: `t,<joint>_x,<joint>_y,<joint>_z,...`.
    pub fn means_csv(&self) -> String {
        let mut out = String::from("t");
        for name in &self.joint_names {
            let _ = write!(out, ",{name}_x,{name}_y,{name}_z");
        }
        out.push('\n');
        for (i, frame) in self.frames.iter().enumerate() {
            let _ = write!(out, "{}", self.t0 + i as f64 * self.dt);
            for g in frame {
                let _ = write!(out, ",{},{},{}", g.mean.x, g.mean.y, g.mean.z);
            }
            out.push('\n');
        }
        out
    }
}

/// Deterministic human joint positions on a time grid (ground truth or
/// prediction means).
#[derive(Debug, Clone, PartialEq)]
pub struct HumanMotion {
    pub dt: f64,
    pub t0: f64,
    pub head_index: usize,
    pub positions: Vec<Vec<Vector3<f64>>>,
}

impl HumanMotion {
    /// Joint positions at time `t`, which must land on this motion's grid.
    pub fn at(&self, t: f64) -> Result<&[Vector3<f64>]> {
        let s = (t - self.t0) / self.dt;
        let idx = s.round();
        if (s - idx).abs() > 1e-6 || idx < 0.0 || idx as usize >= self.positions.len() {
            return Err(Error::Misaligned(format!(
                "t = {t} is not on the human grid (t0 = {}, dt = {}, {} frames)",
                self.t0,
                self.dt,
                self.positions.len()
            )));
        }
        Ok(&self.positions[idx as usize])
    }
}

/// Parameters of a synthetic reaching motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReachSynthesis {
    pub joint_names: Vec<String>,
    pub rest_positions: Vec<[f64; 3]>,
    pub head_index: usize,
    /// Joint that performs the reach (usually the wrist).
    pub reaching_joint: usize,
    pub reach_target: [f64; 3],
    pub reach_start: f64,
    pub reach_duration: f64,
    /// Total span covered by the prediction.
    pub duration: f64,
    pub dt: f64,
    pub t0: f64,
    /// Standard deviation of the isotropic covariance at zero lookahead.
    pub base_std: f64,
    /// Relative covariance growth per second of lookahead.
    pub growth_rate: f64,
    /// Peak amplitude of the slow sway applied to non-reaching joints.
    pub sway: f64,
    pub seed: u64,
}

impl Default for ReachSynthesis {
    fn default() -> Self {
        Self {
            joint_names: ["head", "neck", "right_shoulder", "right_elbow", "right_wrist"]
                .map(String::from)
                .to_vec(),
            rest_positions: vec![
                [1.00, 0.00, 0.75],
                [1.00, 0.00, 0.58],
                [0.98, -0.20, 0.52],
                [0.85, -0.26, 0.32],
                [0.70, -0.22, 0.25],
            ],
            head_index: 0,
            reaching_joint: 4,
            reach_target: [0.50, 0.10, 0.30],
            reach_start: 1.0,
            reach_duration: 2.0,
            duration: 5.0,
            dt: 0.25,
            t0: 0.0,
            base_std: 0.03,
            growth_rate: 0.5,
            sway: 0.005,
            seed: 0,
        }
    }
}

/// Minimum-jerk blend 10τ³ − 15τ⁴ + 6τ⁵ for τ ∈ [0, 1].
pub fn minimum_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

pub fn synthesize_reach(cfg: &ReachSynthesis) -> Result<HumanPrediction> {
    if !(cfg.duration > 0.0) {
        return Err(Error::InvalidInput(format!(
            "duration must be positive, got {}",
            cfg.duration
        )));
    }
    if !(cfg.reach_duration > 0.0) {
        return Err(Error::InvalidInput(format!(
            "reach_duration must be positive, got {}",
            cfg.reach_duration
        )));
    }
    if !(cfg.dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {}", cfg.dt)));
    }
    if !(cfg.base_std > 0.0) || cfg.growth_rate < 0.0 || cfg.sway < 0.0 {
        return Err(Error::InvalidInput(
            "base_std must be positive; growth_rate and sway non-negative".into(),
        ));
    }
    let n = cfg.joint_names.len();
    if cfg.rest_positions.len() != n {
        return Err(Error::InvalidInput(format!(
            "{} rest positions for {n} joints",
            cfg.rest_positions.len()
        )));
    }
    if cfg.reaching_joint >= n {
        return Err(Error::InvalidInput(format!(
            "reaching_joint {} out of range",
            cfg.reaching_joint
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // amplitude, angular frequency, phase per joint and axis
    let sway: Vec<[(f64, f64, f64); 3]> = (0..n)
        .map(|_| {
            [(); 3].map(|_| {
                let amp = cfg.sway * rng.random::<f64>();
                let omega = std::f64::consts::TAU * rng.random_range(0.2..0.5);
                let phase = std::f64::consts::TAU * rng.random::<f64>();
                (amp, omega, phase)
            })
        })
        .collect();

    let n_frames = (cfg.duration / cfg.dt).round() as usize + 1;
    let start = Vector3::from(cfg.rest_positions[cfg.reaching_joint]);
    let target = Vector3::from(cfg.reach_target);
    let base_var = cfg.base_std * cfg.base_std;

    let frames = (0..n_frames)
        .map(|i| {
            let lookahead = i as f64 * cfg.dt;
            let variance = base_var * (1.0 + cfg.growth_rate * lookahead);
            (0..n)
                .map(|j| {
                    let mean = if j == cfg.reaching_joint {
                        let s = minimum_jerk((lookahead - cfg.reach_start) / cfg.reach_duration);
                        start + (target - start) * s
                    } else {
                        let rest = Vector3::from(cfg.rest_positions[j]);
                        let wobble = Vector3::from_fn(|axis, _| {
                            let (amp, omega, phase) = sway[j][axis];
                            amp * (omega * lookahead + phase).sin()
                        });
                        rest + wobble
                    };
                    HumanJointGaussian::isotropic(mean, variance)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    HumanPrediction::new(cfg.joint_names.clone(), cfg.head_index, frames, cfg.dt, cfg.t0)
}

// File schema.

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GaussianFile {
    mean: [f64; 3],
    cov: [[f64; 3]; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PredictionFile {
    joint_names: Vec<String>,
    head_index: usize,
    dt: f64,
    t0: f64,
    frames: Vec<Vec<GaussianFile>>,
}

impl TryFrom<PredictionFile> for HumanPrediction {
    type Error = Error;

    fn try_from(raw: PredictionFile) -> Result<Self> {
        let frames = raw
            .frames
            .iter()
            .enumerate()
            .map(|(fi, frame)| {
                frame
                    .iter()
                    .enumerate()
                    .map(|(ji, g)| {
                        let cov = Matrix3::from_fn(|r, c| g.cov[r][c]);
                        HumanJointGaussian::new(Vector3::from(g.mean), cov).map_err(|e| match e {
                            Error::NotPositiveDefinite { .. } => Error::NotPositiveDefinite { frame: fi, joint: ji },
                            Error::InvalidInput(msg) => Error::InvalidInput(format!("frame {fi}, joint {ji}: {msg}")),
                            other => other,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        HumanPrediction::new(raw.joint_names, raw.head_index, frames, raw.dt, raw.t0)
    }
}

impl From<HumanPrediction> for PredictionFile {
    fn from(p: HumanPrediction) -> Self {
        PredictionFile {
            frames: p
                .frames
                .iter()
                .map(|f| {
                    f.iter()
                        .map(|g| GaussianFile {
                            mean: g.mean.into(),
                            cov: [0, 1, 2].map(|r| [0, 1, 2].map(|c| g.covariance[(r, c)])),
                        })
                        .collect()
                })
                .collect(),
            joint_names: p.joint_names,
            head_index: p.head_index,
            dt: p.dt,
            t0: p.t0,
        }
    }
}
