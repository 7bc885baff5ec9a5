//! Use the AL-iLQR solver directly on a bound-constrained quadratic
//! tracking problem with single-integrator dynamics.
//!
//! Run with: `cargo run --example quadratic_tracking`

use anticip_mpc::solver::{QuadraticCost, Solver, SolverConfig, TrajectoryProblem};
use nalgebra::{DMatrix, DVector};

fn row(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:+.3}")).collect();
    format!("[{}]", parts.join(" "))
}

fn main() -> anticip_mpc::Result<()> {
    let n = 3;
    let knots = 21;
    let target = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let cost = QuadraticCost::uniform(
        knots,
        DMatrix::identity(n, n),
        DMatrix::identity(n, n) * 0.01,
        target.clone(),
        DVector::zeros(n),
    );
    // the second joint needs 2 s at the 1 unit/s limit, so its control saturates
    let lower = DVector::from_element(n, -1.0);
    let upper = DVector::from_element(n, 1.0);
    let problem = TrajectoryProblem::new(DVector::zeros(n), 0.1, lower, upper, cost)?;

    let mut solver = Solver::new(SolverConfig::default());
    let result = solver.solve(&problem, None)?;
    println!(
        "converged {} in {} iterations, {} outer, max bound violation {:.2e}",
        result.converged, result.iterations, result.outer_iterations, result.max_bound_violation
    );
    for (k, (x, u)) in result.states.iter().zip(&result.controls).enumerate().step_by(4) {
        println!("k={k:>2}  x={}  u={}", row(x), row(u));
    }
    println!("final state {}", row(result.states.last().unwrap()));
    Ok(())
}
