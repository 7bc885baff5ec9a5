//! Generate a scenario, write it to disk, load it back, and solve the whole
//! task in a single fixed-horizon optimization.
//!
//! Run with: `cargo run --release --example one_shot_plan [seed]`

use anticip_mpc::kinematics::RobotModel;
use anticip_mpc::mpc::plan_one_shot;
use anticip_mpc::scenario::{generate, GenParams, Scenario};
use anticip_mpc::solver::Solver;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let dir = std::env::temp_dir().join(format!("anticip-mpc-one-shot-{seed}"));
    std::fs::create_dir_all(&dir)?;

    let (file, prediction) = generate(&GenParams {
        seed,
        ..GenParams::default()
    })?;
    std::fs::write(
        dir.join("robot.json"),
        serde_json::to_string_pretty(&RobotModel::default_arm())?,
    )?;
    prediction.save(dir.join("prediction.json"))?;
    std::fs::write(dir.join("scenario.json"), serde_json::to_string_pretty(&file)?)?;
    let scenario = Scenario::load(dir.join("scenario.json"))?;
    println!("scenario written to {}", dir.display());

    let mut solver = Solver::new(scenario.solver);
    let result = plan_one_shot(&scenario, &mut solver)?;
    println!(
        "converged {} after {} iterations ({} outer), cost {:.4}, max bound violation {:.2e}, {:.1} ms",
        result.converged,
        result.iterations,
        result.outer_iterations,
        result.total_cost,
        result.max_bound_violation,
        result.wall_time * 1e3
    );
    for (i, (outer, cost)) in result.cost_history.iter().enumerate() {
        println!("  accepted step {i:>3} (outer {outer}): {cost:.6}");
    }
    let last = result.states.last().unwrap();
    let parts: Vec<String> = last.iter().map(|x| format!("{x:+.3}")).collect();
    println!("final joint state [{}]", parts.join(" "));
    Ok(())
}
