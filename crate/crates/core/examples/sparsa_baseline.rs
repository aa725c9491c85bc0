//! Lumped-L1 baseline solved by SpaRSA for several β.
use l0dc::measure::weighted_l0;
use l0dc::problems::{poisson_prototype, SmoothProblem};
use l0dc::sparsa::{lumped_l1_weights, sparsa_solve, SparsaConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = poisson_prototype(16)?;
    let sys = p.system();
    let u0 = p.unconstrained_minimizer()?;
    for beta in [1.0, 2.0, 4.36, 8.0] {
        let w = lumped_l1_weights(beta, &sys.restrict(&sys.basis_integral))?;
        let r = sparsa_solve(p.hessian(), p.q_smooth(), &w, &SparsaConfig::default(), &u0)?;
        let l0 = weighted_l0(&sys.w_of_free(&r.u), sys.element_space())?;
        println!("beta {beta:5}: f {:.6e}  l0 {l0:.6}  iterations {}", p.value(&r.u), r.iterations);
    }
    Ok(())
}
