//! Serial-chain forward kinematics and positional Jacobians.
//!
//! A chain of `n` revolute joints has `n + 1` frames. Frame 0 sits at the
//! base pose and is where joint 0 rotates; frame `k` is reached by rotating
//! about joint `k - 1`'s axis and then translating by that joint's offset.
//! The end effector is always the last frame.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Isometry3, Quaternion, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

/// Joint-space state, radians.
pub type JointVector = DVector<f64>;

const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    /// Rotation axis in the parent frame.
    pub axis: Unit<Vector3<f64>>,
    /// Translation to the next frame, applied after the rotation.
    pub offset: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EefPose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RobotModelFile", into = "RobotModelFile")]
pub struct RobotModel {
    joints: Vec<Joint>,
    base_pose: Isometry3<f64>,
    tracked_frames: Vec<usize>,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl RobotModel {
    pub fn new(
        joints: Vec<Joint>,
        base_pose: Isometry3<f64>,
        tracked_frames: Vec<usize>,
        lower: DVector<f64>,
        upper: DVector<f64>,
    ) -> Result<Self> {
        let n = joints.len();
        if n == 0 {
            return Err(Error::InvalidInput("robot must have at least one joint".into()));
        }
        for (i, joint) in joints.iter().enumerate() {
            if (joint.axis.norm() - 1.0).abs() > UNIT_TOL {
                return Err(Error::InvalidInput(format!("axis of joint {i} is not unit length")));
            }
            if !joint.offset.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidInput(format!("offset of joint {i} is not finite")));
            }
        }
        ensure_dim("velocity lower bounds", n, lower.len())?;
        ensure_dim("velocity upper bounds", n, upper.len())?;
        if let Some(i) = (0..n).find(|&i| !(lower[i] < upper[i])) {
            return Err(Error::InvalidInput(format!(
                "velocity bounds of joint {i} are not ordered (lower {} >= upper {})",
                lower[i], upper[i]
            )));
        }
        if let Some(&f) = tracked_frames.iter().find(|&&f| f > n) {
            return Err(Error::InvalidInput(format!("tracked frame {f} out of range 0..={n}")));
        }
        Ok(Self {
            joints,
            base_pose,
            tracked_frames,
            lower,
            upper,
        })
    }

    /// Planar chain rotating about +z with links along +x. Handy for tests
    /// and small demos.
    pub fn planar(link_lengths: &[f64], max_speed: f64) -> Result<Self> {
        let n = link_lengths.len();
        let joints = link_lengths
            .iter()
            .map(|&l| Joint {
                axis: Vector3::z_axis(),
                offset: Vector3::new(l, 0.0, 0.0),
            })
            .collect();
        Self::new(
            joints,
            Isometry3::identity(),
            (1..=n).collect(),
            DVector::from_element(n, -max_speed),
            DVector::from_element(n, max_speed),
        )
    }

    /// Seven-joint arm with the proportions of a typical collaborative
    /// research manipulator (about 1.3 m fully stretched).
    #[allow(clippy::approx_constant)]
    pub fn default_arm() -> Self {
        let z = Vector3::z_axis();
        let y = Vector3::y_axis();
        let neg_y = -Vector3::y_axis();
        let layout = [
            (z, 0.34),
            (y, 0.20),
            (z, 0.20),
            (neg_y, 0.20),
            (z, 0.19),
            (y, 0.08),
            (z, 0.126),
        ];
        let joints = layout
            .iter()
            .map(|&(axis, l)| Joint {
                axis,
                offset: Vector3::new(0.0, 0.0, l),
            })
            .collect();
        let upper = DVector::from_row_slice(&[1.71, 1.71, 1.75, 2.27, 2.44, 3.14, 3.14]);
        Self::new(joints, Isometry3::identity(), vec![2, 4, 6, 7], -upper.clone(), upper)
            .expect("built-in arm is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn n_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn base_pose(&self) -> &Isometry3<f64> {
        &self.base_pose
    }

    pub fn tracked_frames(&self) -> &[usize] {
        &self.tracked_frames
    }

    pub fn eef_frame(&self) -> usize {
        self.joints.len()
    }

    pub fn velocity_lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn velocity_upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn with_base_pose(mut self, base_pose: Isometry3<f64>) -> Self {
        self.base_pose = base_pose;
        self
    }

    pub fn with_tracked_frames(mut self, frames: Vec<usize>) -> Result<Self> {
        self.tracked_frames = frames;
        Self::new(self.joints, self.base_pose, self.tracked_frames, self.lower, self.upper)
    }

    pub fn with_velocity_bounds(self, lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        Self::new(self.joints, self.base_pose, self.tracked_frames, lower, upper)
    }

    /// Clamp a velocity vector into the bounds.
    pub fn clamp_velocity(&self, u: &DVector<f64>) -> DVector<f64> {
        u.zip_zip_map(&self.lower, &self.upper, |v, lo, hi| v.clamp(lo, hi))
    }

    fn check_q(&self, q: &JointVector) -> Result<()> {
        ensure_dim("joint vector", self.n_joints(), q.len())?;
        if q.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidInput("joint vector has non-finite entries".into()))
        }
    }
}

/// Frame origins, world-frame joint axes, and the end-effector pose for one
/// joint configuration.
#[derive(Debug, Clone)]
pub struct FkResult {
    pub frame_positions: Vec<Vector3<f64>>,
    /// Axis of joint `k` expressed in the base coordinates; joint `k`
    /// rotates about this axis through `frame_positions[k]`.
    pub joint_axes: Vec<Vector3<f64>>,
    pub eef_pose: EefPose,
}

impl FkResult {
    pub fn eef_position(&self) -> Vector3<f64> {
        self.eef_pose.position
    }

    /// 3×n positional Jacobian of `frame`'s origin.
    pub fn position_jacobian(&self, frame: usize) -> Result<DMatrix<f64>> {
        let n = self.joint_axes.len();
        if frame > n {
            return Err(Error::InvalidInput(format!("frame {frame} out of range 0..={n}")));
        }
        let mut jac = DMatrix::zeros(3, n);
        let p = self.frame_positions[frame];
        for j in 0..frame {
            let col = self.joint_axes[j].cross(&(p - self.frame_positions[j]));
            jac.fixed_view_mut::<3, 1>(0, j).copy_from(&col);
        }
        Ok(jac)
    }
}

pub fn forward_kinematics(model: &RobotModel, q: &JointVector) -> Result<FkResult> {
    model.check_q(q)?;
    let n = model.n_joints();
    let mut frame_positions = Vec::with_capacity(n + 1);
    let mut joint_axes = Vec::with_capacity(n);
    let mut pose = model.base_pose;
    frame_positions.push(pose.translation.vector);
    for (joint, &angle) in model.joints.iter().zip(q.iter()) {
        joint_axes.push(pose.rotation * joint.axis.into_inner());
        let local = Isometry3::from_parts(
            Translation3::identity(),
            UnitQuaternion::from_axis_angle(&joint.axis, angle),
        ) * Translation3::from(joint.offset);
        pose *= local;
        frame_positions.push(pose.translation.vector);
    }
    Ok(FkResult {
        frame_positions,
        joint_axes,
        eef_pose: EefPose {
            position: pose.translation.vector,
            orientation: pose.rotation,
        },
    })
}

pub fn position_jacobian(model: &RobotModel, q: &JointVector, frame: usize) -> Result<DMatrix<f64>> {
    forward_kinematics(model, q)?.position_jacobian(frame)
}

// File schema. Quaternions are stored as [w, x, y, z].

#[derive(Debug, Clone, Serialize, Deserialize)]
struct JointFile {
    axis: [f64; 3],
    offset: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct PoseFile {
    pub position: [f64; 3],
    pub orientation: [f64; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BoundsFile {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RobotModelFile {
    n_joints: usize,
    joints: Vec<JointFile>,
    base_pose: PoseFile,
    tracked_frames: Vec<usize>,
    eef_frame: usize,
    velocity_bounds: BoundsFile,
}

pub(crate) fn quat_from_array(q: [f64; 4]) -> Result<UnitQuaternion<f64>> {
    let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
    if (quat.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::InvalidInput(format!(
            "quaternion {q:?} is not unit length (norm {})",
            quat.norm()
        )));
    }
    Ok(UnitQuaternion::new_unchecked(quat))
}

pub(crate) fn quat_to_array(q: &UnitQuaternion<f64>) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

impl TryFrom<PoseFile> for Isometry3<f64> {
    type Error = Error;

    fn try_from(p: PoseFile) -> Result<Self> {
        Ok(Isometry3::from_parts(
            Translation3::new(p.position[0], p.position[1], p.position[2]),
            quat_from_array(p.orientation)?,
        ))
    }
}

impl From<&Isometry3<f64>> for PoseFile {
    fn from(iso: &Isometry3<f64>) -> Self {
        let t = iso.translation.vector;
        PoseFile {
            position: [t.x, t.y, t.z],
            orientation: quat_to_array(&iso.rotation),
        }
    }
}

impl TryFrom<RobotModelFile> for RobotModel {
    type Error = Error;

    fn try_from(f: RobotModelFile) -> Result<Self> {
        ensure_dim("joints[]", f.n_joints, f.joints.len())?;
        if f.eef_frame != f.n_joints {
            return Err(Error::InvalidInput(format!(
                "eef_frame must be the last frame ({}), got {}",
                f.n_joints, f.eef_frame
            )));
        }
        let joints = f
            .joints
            .iter()
            .enumerate()
            .map(|(i, j)| {
                let axis = Vector3::from(j.axis);
                if (axis.norm() - 1.0).abs() > UNIT_TOL {
                    return Err(Error::InvalidInput(format!("axis of joint {i} is not unit length")));
                }
                Ok(Joint {
                    axis: Unit::new_unchecked(axis),
                    offset: Vector3::from(j.offset),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        RobotModel::new(
            joints,
            f.base_pose.try_into()?,
            f.tracked_frames,
            DVector::from_vec(f.velocity_bounds.lower),
            DVector::from_vec(f.velocity_bounds.upper),
        )
    }
}

impl From<RobotModel> for RobotModelFile {
    fn from(m: RobotModel) -> Self {
        RobotModelFile {
            n_joints: m.n_joints(),
            joints: m
                .joints
                .iter()
                .map(|j| JointFile {
                    axis: [j.axis.x, j.axis.y, j.axis.z],
                    offset: [j.offset.x, j.offset.y, j.offset.z],
                })
                .collect(),
            base_pose: PoseFile::from(&m.base_pose),
            tracked_frames: m.tracked_frames.clone(),
            eef_frame: m.eef_frame(),
            velocity_bounds: BoundsFile {
                lower: m.lower.iter().copied().collect(),
                upper: m.upper.iter().copied().collect(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn planar2() -> RobotModel {
        RobotModel::planar(&[1.0, 1.0], 1.0).unwrap()
    }

    #[test]
    fn planar_zero_angles_sum_offsets() {
        let fk = forward_kinematics(&planar2(), &DVector::from_row_slice(&[0.0, 0.0])).unwrap();
        assert!((fk.eef_position() - Vector3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn planar_rotated_base_joint() {
        let fk = forward_kinematics(&planar2(), &DVector::from_row_slice(&[FRAC_PI_2, 0.0])).unwrap();
        assert!((fk.eef_position() - Vector3::new(0.0, 2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn planar_jacobian_columns() {
        let jac = position_jacobian(&planar2(), &DVector::zeros(2), 2).unwrap();
        assert!((jac.column(0) - Vector3::new(0.0, 2.0, 0.0)).norm() < 1e-12);
        assert!((jac.column(1) - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn base_frame_jacobian_is_zero() {
        let q = DVector::from_row_slice(&[0.3, -0.2, 0.5, 1.0, -0.4, 0.2, 0.1]);
        let jac = position_jacobian(&RobotModel::default_arm(), &q, 0).unwrap();
        assert_eq!(jac, DMatrix::zeros(3, 7));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let err = forward_kinematics(&planar2(), &DVector::zeros(3)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn invalid_frame_is_rejected() {
        assert!(position_jacobian(&planar2(), &DVector::zeros(2), 3).is_err());
    }

    #[test]
    fn bounds_must_be_ordered() {
        let m = planar2();
        let err = m
            .with_velocity_bounds(
                DVector::from_row_slice(&[-1.0, 1.0]),
                DVector::from_row_slice(&[1.0, 1.0]),
            )
            .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let m = RobotModel::default_arm();
        let text = serde_json::to_string(&m).unwrap();
        let back: RobotModel = serde_json::from_str(&text).unwrap();
        assert_eq!(m, back);

        let bad = text.replace("\"eef_frame\":7", "\"eef_frame\":3");
        assert!(serde_json::from_str::<RobotModel>(&bad).is_err());
    }

    #[test]
    fn non_unit_axis_is_rejected() {
        let text = r#"{"n_joints":1,"joints":[{"axis":[0,0,2],"offset":[1,0,0]}],
            "base_pose":{"position":[0,0,0],"orientation":[1,0,0,0]},
            "tracked_frames":[1],"eef_frame":1,
            "velocity_bounds":{"lower":[-1],"upper":[1]}}"#;
        assert!(serde_json::from_str::<RobotModel>(text).is_err());
    }
}
