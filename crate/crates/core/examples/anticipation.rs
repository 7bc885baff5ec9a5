//! Compare executions with and without the human-distance cost while the
//! synthesized human reaches across the robot's path.
//!
//! Run with: `cargo run --release --example anticipation`

use anticip_mpc::costs::CostWeights;
use anticip_mpc::kinematics::forward_kinematics;
use anticip_mpc::metrics::{evaluate, min_separation, MetricsConfig};
use anticip_mpc::mpc::{run_mpc, ExecutionTrace};
use anticip_mpc::scenario::{generate_resolved, GenParams, Scenario};

fn closest_approach(scenario: &Scenario, trace: &ExecutionTrace) -> anticip_mpc::Result<f64> {
    let human = scenario.actual_human();
    let mut closest = f64::INFINITY;
    for (t, q) in trace.times.iter().zip(&trace.states) {
        let fk = forward_kinematics(&scenario.model, q)?;
        closest = closest.min(min_separation(&scenario.model, &fk, human.at(*t)?));
    }
    Ok(closest)
}

fn main() -> anticip_mpc::Result<()> {
    println!(
        "{:>5}{:>14}{:>14}{:>10}{:>10}",
        "seed", "sep aware", "sep blind", "Dst aware", "Dst blind"
    );
    for seed in 0..5 {
        let aware = generate_resolved(&GenParams {
            seed,
            ..GenParams::default()
        })?;
        let blind = aware.clone().with_weights(CostWeights {
            w_dist: 0.0,
            ..aware.weights
        });
        let cfg = MetricsConfig::default();

        let trace_aware = run_mpc(&aware)?;
        let trace_blind = run_mpc(&blind)?;
        let human = aware.actual_human();
        let dst_aware = evaluate(&aware, &trace_aware, &human, &cfg)?.dst;
        let dst_blind = evaluate(&blind, &trace_blind, &human, &cfg)?.dst;
        println!(
            "{seed:>5}{:>14.4}{:>14.4}{dst_aware:>10.3}{dst_blind:>10.3}",
            closest_approach(&aware, &trace_aware)?,
            closest_approach(&blind, &trace_blind)?,
        );
    }
    Ok(())
}
