//! Forward kinematics and position Jacobians of the built-in 7-joint arm.
//!
//! Run with: `cargo run --example forward_kinematics`

use anticip_mpc::kinematics::{forward_kinematics, RobotModel};
use nalgebra::{DVector, Vector3};

fn main() -> anticip_mpc::Result<()> {
    let model = RobotModel::default_arm();
    let q = DVector::from_vec(vec![0.3, 0.7, 0.0, -1.5, 0.0, 0.9, 0.0]);
    let fk = forward_kinematics(&model, &q)?;

    println!("frame positions (world):");
    for (i, p) in fk.frame_positions.iter().enumerate() {
        let tag = if model.tracked_frames().contains(&i) {
            " tracked"
        } else {
            ""
        };
        println!("  {i}: [{:+.4}, {:+.4}, {:+.4}]{tag}", p.x, p.y, p.z);
    }
    let o = fk.eef_pose.orientation;
    println!(
        "eef orientation (w, x, y, z): {:.4} {:.4} {:.4} {:.4}",
        o.w, o.i, o.j, o.k
    );

    let jac = fk.position_jacobian(model.eef_frame())?;
    println!("eef position Jacobian:{jac:.4}");

    // a small joint step moves the end effector by roughly J * dq
    let dq = DVector::from_element(7, 1e-4);
    let moved = forward_kinematics(&model, &(&q + &dq))?.eef_position();
    let predicted = fk.eef_position() + Vector3::from_column_slice((&jac * &dq).as_slice());
    println!("first-order prediction error: {:.3e} m", (moved - predicted).norm());
    Ok(())
}
