//! Break the per-knot cost into its six terms and show the derivative blocks
//! handed to the optimizer.
//!
//! Run with: `cargo run --example knot_costs`

use anticip_mpc::costs::{knot_cost_terms, total_knot_cost};
use anticip_mpc::mpc::build_problem;
use anticip_mpc::scenario::{generate_resolved, GenParams};
use nalgebra::DVector;

fn main() -> anticip_mpc::Result<()> {
    let scenario = generate_resolved(&GenParams::default())?;
    let problem = build_problem(&scenario, 4, scenario.start.clone(), scenario.mpc.horizon_steps())?;
    let ctx = &problem.cost.contexts[0];
    let q = &scenario.start;
    let u = DVector::from_element(q.len(), 0.2);

    let terms = knot_cost_terms(&scenario.model, q, Some(&u), ctx)?;
    let w = ctx.weights;
    println!("knot at t = {:.2} s", ctx.time);
    println!("{:<12}{:>12}{:>10}{:>12}", "term", "value", "weight", "weighted");
    for (name, value, weight) in [
        ("distance", terms.dist, w.w_dist),
        ("visibility", terms.vis, w.w_vis),
        ("legibility", terms.leg, w.w_leg),
        ("nominal", terms.nom, w.w_nom),
        ("smoothness", terms.smooth, w.w_smooth),
        ("goal pose", terms.goal, w.w_goal),
    ] {
        println!("{name:<12}{value:>12.5}{weight:>10.3}{:>12.5}", value * weight);
    }

    let kc = total_knot_cost(&scenario.model, q, Some(&u), ctx)?;
    println!("\ntotal {:.5}", kc.value);
    println!("|grad_x| {:.4}  |grad_u| {:.4}", kc.grad_x.norm(), kc.grad_u.norm());
    let eig = kc.hess_xx.clone().symmetric_eigen().eigenvalues;
    println!("hess_xx eigenvalues in [{:.3e}, {:.3e}]", eig.min(), eig.max());
    Ok(())
}
