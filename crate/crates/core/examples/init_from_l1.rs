//! Uses an L1 solution as the starting point of the support-constrained solve.
use l0dc::l0::{solve_l0_penalized, InitPolicy, L0PenaltyConfig};
use l0dc::measure::weighted_l0;
use l0dc::problems::{poisson_prototype, SmoothProblem};
use l0dc::sparsa::{lumped_l1_weights, sparsa_solve, SparsaConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = poisson_prototype(16)?;
    let sys = p.system();
    let w = lumped_l1_weights(4.36, &sys.restrict(&sys.basis_integral))?;
    let u0 = p.unconstrained_minimizer()?;
    let l1 = sparsa_solve(p.hessian(), p.q_smooth(), &w, &SparsaConfig::default(), &u0)?;
    let l0 = weighted_l0(&sys.w_of_free(&l1.u), sys.element_space())?;
    println!("L1 start:  f {:.6e}  l0 {l0:.6}", p.value(&l1.u));
    let cfg = L0PenaltyConfig { init: InitPolicy::Custom(l1.u), ..Default::default() };
    let sol = solve_l0_penalized(&p, &cfg)?;
    println!("DC result: f {:.6e}  l0 {:.6}  dc {}", sol.objective, sol.l0, sol.dc_iters);
    Ok(())
}
