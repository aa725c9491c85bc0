//! Budget continuation K_k = max(λK_{k-1}, K) starting from the full domain.
use l0dc::l0::{solve_l0_penalized, L0PenaltyConfig};
use l0dc::problems::poisson_prototype;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = poisson_prototype(32)?;
    for lambda in [None, Some(0.9), Some(0.99)] {
        let cfg = L0PenaltyConfig { schedule_lambda: lambda, ..Default::default() };
        let sol = solve_l0_penalized(&p, &cfg)?;
        println!(
            "lambda {:>5}: f {:.6e}  l0 {:.6}  reductions {:3}  dc {:3}  monotone {}",
            lambda.map_or("none".into(), |l| l.to_string()),
            sol.objective,
            sol.l0,
            sol.schedule_reductions,
            sol.dc_iters,
            sol.is_monotone(1e-10)
        );
    }
    Ok(())
}
