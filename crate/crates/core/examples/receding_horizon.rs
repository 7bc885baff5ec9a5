//! Run the receding-horizon loop on a generated scenario and score the
//! executed trajectory.
//!
//! Run with: `cargo run --release --example receding_horizon [seed]`

use anticip_mpc::metrics::{evaluate, MetricsConfig};
use anticip_mpc::mpc::run_mpc;
use anticip_mpc::scenario::{generate_resolved, GenParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let scenario = generate_resolved(&GenParams {
        seed,
        ..GenParams::default()
    })?;
    let trace = run_mpc(&scenario)?;

    println!(
        "{:>6}{:>6}{:>10}{:>7}{:>12}{:>10}",
        "t", "steps", "converged", "iters", "cost", "ms"
    );
    for (r, wall) in trace.replans.iter().zip(&trace.timing.per_replan) {
        println!(
            "{:>6.2}{:>6}{:>10}{:>7}{:>12.4}{:>10.2}",
            r.time,
            r.steps_executed,
            r.converged,
            r.iterations,
            r.cost,
            wall * 1e3
        );
    }
    println!("goal reached early: {}", trace.goal_reached);

    let report = evaluate(&scenario, &trace, &scenario.actual_human(), &MetricsConfig::default())?;
    println!(
        "Dst {:.3}  Vis {:.3}  Leg {:.3}  Nom {:.4}  Lat {:.4} s",
        report.dst,
        report.vis,
        report.leg,
        report.nom,
        report.lat.unwrap_or(f64::NAN)
    );
    print!("{}", trace.to_csv(&scenario.model, Some(&scenario.actual_human()))?);
    Ok(())
}
