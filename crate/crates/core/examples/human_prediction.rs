//! Synthesize a Gaussian reaching prediction and slice it for a planning horizon.
//!
//! Run with: `cargo run --example human_prediction`

use anticip_mpc::human_prediction::{synthesize_reach, ReachSynthesis};

fn main() -> anticip_mpc::Result<()> {
    let cfg = ReachSynthesis {
        reach_target: [0.55, 0.05, 0.25],
        seed: 3,
        ..ReachSynthesis::default()
    };
    let prediction = synthesize_reach(&cfg)?;
    println!(
        "{} joints {:?}, {} frames over [{}, {}] s",
        prediction.n_joints(),
        prediction.joint_names(),
        prediction.frames().len(),
        prediction.t0(),
        prediction.t_end()
    );

    let wrist = 4;
    for (i, frame) in prediction.frames().iter().enumerate().step_by(4) {
        let g = &frame[wrist];
        let m = g.mean();
        println!(
            "t={:.2}  wrist [{:+.3} {:+.3} {:+.3}]  std {:.4}",
            prediction.t0() + i as f64 * prediction.dt(),
            m.x,
            m.y,
            m.z,
            g.scalar_std()
        );
    }

    // a horizon running past the last frame holds the final mean and grows
    // the covariance by 1.5x per extra step
    let slice = prediction.slice_horizon(4.5, 6, 0.25)?;
    println!("horizon starting at 4.5 s (head std per knot):");
    for (k, frame) in slice.iter().enumerate() {
        println!("  knot {k}: {:.4}", frame[prediction.head_index()].scalar_std());
    }

    println!("\nmeans CSV head:");
    for line in prediction.means_csv().lines().take(3) {
        println!("  {line}");
    }
    Ok(())
}
