//! Planning latency over a batch of seeded scenarios, one warm-up run first.
//!
//! Run with: `cargo run --release --example latency_bench [count] [threads]`

use anticip_mpc::cli::bench_scenarios;
use anticip_mpc::scenario::{generate_resolved, GenParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let count: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);
    let threads: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);

    let scenarios = (0..count)
        .map(|seed| {
            generate_resolved(&GenParams {
                seed,
                ..GenParams::default()
            })
        })
        .collect::<anticip_mpc::Result<Vec<_>>>()?;
    let report = bench_scenarios(&scenarios, threads, true)?;

    println!("trajectories: {}", report.count);
    println!(
        "per trajectory: {:.4} s (std {:.4})",
        report.per_trajectory_mean, report.per_trajectory_std
    );
    println!(
        "per replan:     {:.2} ms (std {:.2})",
        report.per_replan_mean * 1e3,
        report.per_replan_std * 1e3
    );
    Ok(())
}
