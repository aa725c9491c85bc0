//! Reduced optimal control with a support constraint on the control.
use std::sync::Arc;

use l0dc::fem::{assemble, TriMesh};
use l0dc::l0::{solve_l0_penalized, L0PenaltyConfig};
use l0dc::problems::{control_reduced, ControlConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let system = Arc::new(assemble(&TriMesh::structured(16)?, |_, _| 0.0)?);
    for k in [0.5, 0.25, 0.1] {
        let problem = control_reduced(system.clone(), &ControlConfig::default())?;
        let cfg = L0PenaltyConfig { k, ..Default::default() };
        let sol = solve_l0_penalized(&problem, &cfg)?;
        println!(
            "K {k:4}: J {:.6e}  l0 {:.6}  tracking {:.6e}  dc {}",
            sol.objective,
            sol.l0,
            problem.tracking_error(&sol.u),
            sol.dc_iters
        );
    }
    Ok(())
}
