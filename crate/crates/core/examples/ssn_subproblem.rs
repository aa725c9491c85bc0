//! Semismooth Newton on a weighted L1 problem from the Poisson prototype,
//! compared with an accelerated proximal-gradient solve.
use l0dc::linalg::norm_inf;
use l0dc::problems::{poisson_prototype, SmoothProblem};
use l0dc::ssn::{l1_objective, prox_grad_oracle, ssn_solve, L1Weights, SsnOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = poisson_prototype(16)?;
    let sys = p.system();
    let weights = L1Weights::scaled(0.5, &sys.free_patch_measure())?;
    let warm = p.unconstrained_minimizer()?;
    let r = ssn_solve(p.hessian(), p.q_smooth(), &weights, &warm, &SsnOptions::default())?;
    let reference = prox_grad_oracle(p.hessian(), p.q_smooth(), &weights, 1e-13, 200_000)?;
    let diff: Vec<f64> = r.u.iter().zip(&reference).map(|(a, b)| a - b).collect();
    println!("newton steps {}  residual {:.2e}  tau {:.2e}", r.iterations, r.residual_norm, r.tau);
    println!("nonzeros {} of {}", r.u.iter().filter(|v| **v != 0.0).count(), r.u.len());
    println!("objective {:.12}  |u - u_ref|inf {:.2e}", l1_objective(p.hessian(), p.q_smooth(), &weights, &r.u), norm_inf(&diff));
    Ok(())
}
