//! Increasing penalty parameters with warm starts; the exact penalty makes
//! the solutions coincide once ρ is large enough.
use l0dc::l0::{penalty_sweep, L0PenaltyConfig};
use l0dc::problems::poisson_prototype;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = poisson_prototype(32)?;
    let rhos = [1e-3, 1e-1, 1e3, 1e6, 1e9, 1e12];
    for e in penalty_sweep(&p, &L0PenaltyConfig::default(), &rhos)? {
        println!(
            "rho {:8.1e}: f {:.8e}  l0 {:.6}  penalty {:.2e}  exact {}",
            e.rho, e.solution.objective, e.solution.l0, e.penalty, e.solution.report.exact_penalty
        );
    }
    Ok(())
}
