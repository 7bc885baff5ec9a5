//! Scenario files: robot, task, human prediction source, weights, timing.
//!
//! Paths inside a scenario file are resolved relative to the file's
//! directory. [`generate`] builds seeded reaching scenarios in which the
//! synthetic human reaches across the robot's nominal path.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::costs::{CostWeights, GoalSpec, LegibilityContext};
use crate::error::{ensure_dim, Error, Result};
use crate::human_prediction::{synthesize_reach, HumanMotion, HumanPrediction, ReachSynthesis};
use crate::kinematics::{forward_kinematics, JointVector, RobotModel};
use crate::mpc::{derive_nominal, MpcConfig};
use crate::solver::SolverConfig;

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanSource {
    PredictionFile(PathBuf),
    Synthesize(ReachSynthesis),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NominalSpec {
    /// Only `"derive"` is accepted.
    Keyword(String),
    Points(Vec<[f64; 3]>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegibilitySpec {
    pub goals: Vec<[f64; 3]>,
    pub goal_index: usize,
    /// Defaults to the end-effector position at the start configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<[f64; 3]>,
}

fn default_schema() -> u32 {
    SCENARIO_SCHEMA_VERSION
}

fn default_robot() -> String {
    "default".into()
}

fn default_nominal() -> NominalSpec {
    NominalSpec::Keyword("derive".into())
}

/// On-disk scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    /// `"default"` for the built-in arm, otherwise a robot model path.
    #[serde(default = "default_robot")]
    pub robot: String,
    pub start: Vec<f64>,
    pub goal_q: Vec<f64>,
    /// Defaults to the forward kinematics of `goal_q`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<GoalSpec>,
    pub gaze_object: [f64; 3],
    pub legibility: LegibilitySpec,
    #[serde(default = "default_nominal")]
    pub nominal: NominalSpec,
    #[serde(default)]
    pub weights: CostWeights,
    #[serde(default)]
    pub mpc: MpcConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub human: HumanSource,
    /// Prediction-format file whose means are the actual human motion.
    /// Defaults to the prediction means.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ScenarioFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn resolve(&self, base_dir: &Path) -> Result<Scenario> {
        if self.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported scenario schema_version {} (expected {SCENARIO_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let model = if self.robot == "default" {
            RobotModel::default_arm()
        } else {
            RobotModel::load(base_dir.join(&self.robot))?
        };
        let prediction = match &self.human {
            HumanSource::PredictionFile(p) => HumanPrediction::load(base_dir.join(p))?,
            HumanSource::Synthesize(cfg) => synthesize_reach(cfg)?,
        };
        let ground_truth = match &self.ground_truth {
            Some(p) => Some(HumanPrediction::load(base_dir.join(p))?.mean_motion()),
            None => None,
        };
        Scenario::build(self, Arc::new(model), prediction, ground_truth)
    }
}

/// A fully resolved, validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: Arc<RobotModel>,
    pub start: JointVector,
    pub goal_q: JointVector,
    pub goal: GoalSpec,
    pub gaze_object: Vector3<f64>,
    pub legibility: Arc<LegibilityContext>,
    /// End-effector reference at every `mpc.dt` from t = 0.
    pub nominal: Vec<Vector3<f64>>,
    pub weights: CostWeights,
    pub mpc: MpcConfig,
    pub solver: SolverConfig,
    pub prediction: HumanPrediction,
    pub ground_truth: Option<HumanMotion>,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = ScenarioFile::load(path)?;
        file.resolve(path.parent().unwrap_or(Path::new(".")))
    }

    fn build(
        file: &ScenarioFile,
        model: Arc<RobotModel>,
        prediction: HumanPrediction,
        ground_truth: Option<HumanMotion>,
    ) -> Result<Self> {
        let n = model.n_joints();
        ensure_dim("start configuration", n, file.start.len())?;
        ensure_dim("goal configuration", n, file.goal_q.len())?;
        file.weights.validate()?;
        file.mpc.validate()?;
        let start = DVector::from_vec(file.start.clone());
        let goal_q = DVector::from_vec(file.goal_q.clone());
        let goal = match &file.goal {
            Some(g) => g.clone(),
            None => GoalSpec::from_pose(&forward_kinematics(&model, &goal_q)?.eef_pose),
        };
        let s = match file.legibility.start {
            Some(s) => Vector3::from(s),
            None => forward_kinematics(&model, &start)?.eef_position(),
        };
        let legibility = LegibilityContext::new(
            s,
            file.legibility.goals.iter().map(|g| Vector3::from(*g)).collect(),
            file.legibility.goal_index,
        )?;
        let steps = file.mpc.task_steps();
        let nominal = match &file.nominal {
            NominalSpec::Keyword(k) if k == "derive" => derive_nominal(&model, &start, &goal_q, steps)?,
            NominalSpec::Keyword(k) => {
                return Err(Error::Schema(format!(
                    "nominal must be \"derive\" or a point list, got {k:?}"
                )))
            }
            NominalSpec::Points(pts) => {
                if pts.len() < steps + 1 {
                    return Err(Error::Schema(format!(
                        "nominal trajectory has {} points, need at least {}",
                        pts.len(),
                        steps + 1
                    )));
                }
                pts.iter().map(|p| Vector3::from(*p)).collect()
            }
        };
        Ok(Self {
            model,
            start,
            goal_q,
            goal,
            gaze_object: Vector3::from(file.gaze_object),
            legibility: Arc::new(legibility),
            nominal,
            weights: file.weights,
            mpc: file.mpc,
            solver: file.solver,
            prediction,
            ground_truth,
        })
    }

    /// The human motion metrics are scored against.
    pub fn actual_human(&self) -> HumanMotion {
        self.ground_truth
            .clone()
            .unwrap_or_else(|| self.prediction.mean_motion())
    }

    pub fn with_weights(mut self, weights: CostWeights) -> Self {
        self.weights = weights;
        self
    }

    pub fn with_mpc(mut self, mpc: MpcConfig) -> Self {
        self.mpc = mpc;
        self
    }
}

/// Knobs for [`generate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub seed: u64,
    /// Task duration, also the span of the synthesized prediction.
    pub duration: f64,
    pub weights: CostWeights,
    pub mpc: MpcConfig,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            seed: 0,
            duration: 5.0,
            weights: CostWeights::default(),
            mpc: MpcConfig::default(),
        }
    }
}

/// Arm posture reaching forward and down to table height; the base joint
/// picks the azimuth.
fn reach_posture(azimuth: f64, lean: f64) -> Vec<f64> {
    vec![azimuth, 0.75 + lean, 0.0, -1.55, 0.0, 0.9 - lean, 0.0]
}

/// Seeded reaching task for the built-in arm: the robot sweeps its end
/// effector across the table while the human's wrist reaches for an
/// object that sits on the robot's nominal path.
pub fn generate(params: &GenParams) -> Result<(ScenarioFile, HumanPrediction)> {
    if !(params.duration > 0.0) {
        return Err(Error::InvalidInput(format!(
            "duration must be positive, got {}",
            params.duration
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut jitter = |scale: f64| scale * (2.0 * rng.random::<f64>() - 1.0);

    let model = RobotModel::default_arm();
    let start = reach_posture(-0.65 + jitter(0.08), jitter(0.05));
    let goal_q = reach_posture(0.65 + jitter(0.08), jitter(0.05));
    let fk_goal = forward_kinematics(&model, &DVector::from_vec(goal_q.clone()))?;
    let g = fk_goal.eef_position();

    // the wrist heads for a spot on the arc the end effector sweeps through
    let mid = forward_kinematics(&model, &DVector::from_vec(reach_posture(jitter(0.1), 0.0)))?.eef_position();
    let target = mid + Vector3::new(jitter(0.03), jitter(0.03), 0.02 + jitter(0.02));
    let shift = Vector3::new(jitter(0.04), jitter(0.04), 0.0);
    let rest = |p: [f64; 3]| {
        let v = Vector3::from(p) + shift;
        [v.x, v.y, v.z]
    };
    let reach_duration = 1.2 + jitter(0.2).abs();
    let synth = ReachSynthesis {
        rest_positions: vec![
            rest([1.05, 0.00, 0.70]),
            rest([1.05, 0.00, 0.55]),
            rest([1.00, -0.20, 0.50]),
            rest([0.90, -0.28, 0.32]),
            rest([0.80, -0.25, 0.24]),
        ],
        reach_target: [target.x, target.y, target.z],
        reach_start: 0.8 + jitter(0.3),
        reach_duration,
        duration: params.duration,
        dt: params.mpc.dt,
        t0: 0.0,
        seed: params.seed,
        ..ReachSynthesis::default()
    };
    let prediction = synthesize_reach(&synth)?;

    let file = ScenarioFile {
        schema_version: SCENARIO_SCHEMA_VERSION,
        robot: "robot.json".into(),
        start,
        goal_q,
        goal: None,
        gaze_object: [target.x, target.y, target.z],
        legibility: LegibilitySpec {
            goals: vec![
                [g.x, g.y, g.z],
                [g.x + 0.15, g.y - 0.25, g.z],
                [g.x - 0.2, g.y - 0.05, g.z + 0.2],
            ],
            goal_index: 0,
            start: None,
        },
        nominal: default_nominal(),
        weights: params.weights,
        mpc: MpcConfig {
            task_duration: params.duration,
            ..params.mpc
        },
        solver: SolverConfig::default(),
        human: HumanSource::PredictionFile("prediction.json".into()),
        ground_truth: None,
        seed: Some(params.seed),
    };
    Ok((file, prediction))
}

/// [`generate`] resolved in memory, without touching the filesystem.
pub fn generate_resolved(params: &GenParams) -> Result<Scenario> {
    let (file, prediction) = generate(params)?;
    Scenario::build(&file, Arc::new(RobotModel::default_arm()), prediction, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_scenario_round_trips_through_json() {
        let (file, _) = generate(&GenParams::default()).unwrap();
        let text = serde_json::to_string_pretty(&file).unwrap();
        let back: ScenarioFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, file);
    }

    #[test]
    fn generation_is_seeded() {
        let a = generate(&GenParams {
            seed: 7,
            ..GenParams::default()
        })
        .unwrap();
        let b = generate(&GenParams {
            seed: 7,
            ..GenParams::default()
        })
        .unwrap();
        let c = generate(&GenParams {
            seed: 8,
            ..GenParams::default()
        })
        .unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn zero_duration_is_rejected() {
        assert!(generate(&GenParams {
            duration: 0.0,
            ..GenParams::default()
        })
        .is_err());
    }

    #[test]
    fn nominal_keyword_is_checked() {
        let (mut file, prediction) = generate(&GenParams::default()).unwrap();
        file.nominal = NominalSpec::Keyword("straight".into());
        let err = Scenario::build(&file, Arc::new(RobotModel::default_arm()), prediction, None).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn short_explicit_nominal_is_rejected() {
        let (mut file, prediction) = generate(&GenParams::default()).unwrap();
        file.nominal = NominalSpec::Points(vec![[0.0; 3]; 5]);
        assert!(Scenario::build(&file, Arc::new(RobotModel::default_arm()), prediction, None).is_err());
    }
}
