//! Support-constrained Poisson prototype on refining meshes.
use l0dc::l0::{solve_l0_penalized, L0PenaltyConfig};
use l0dc::problems::poisson_prototype;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = L0PenaltyConfig::default();
    println!("   n            f        l0       gap  dc  pairing");
    for n in [16, 32, 64] {
        let p = poisson_prototype(n)?;
        let sol = solve_l0_penalized(&p, &cfg)?;
        println!(
            "{n:4} {:12.6e} {:9.6} {:9.2e} {:3} {:8.1e}",
            sol.objective, sol.l0, sol.gap.gap, sol.dc_iters, sol.report.pairing
        );
    }
    Ok(())
}
