//! Largest-K norm on a three-atom space: greedy, exact and relaxed values.
use l0dc::measure::{
    largest_k_exact, largest_k_greedy, largest_k_relaxed, reformulation_gap, subgradient_largest_k,
    weighted_l0, DiscreteMeasureSpace, ZeroSign,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let space = DiscreteMeasureSpace::new(vec![1.0, 2.0, 3.0])?;
    let x = [4.0, 4.0, 3.0];
    println!("weighted l0 = {}", weighted_l0(&x, &space)?);
    for k in [2.0, 4.0, 4.5, 6.0] {
        let greedy = largest_k_greedy(&x, &space, k)?;
        let exact = largest_k_exact(&x, &space, k)?;
        let relaxed = largest_k_relaxed(&x, &space, k)?;
        println!(
            "K = {k}: greedy {:?} -> {}, exact {:?} -> {}, relaxed {relaxed}",
            greedy.indices, greedy.value, exact.indices, exact.value
        );
    }
    let sel = largest_k_exact(&x, &space, 4.0)?;
    let s = subgradient_largest_k(&x, &space, &sel, ZeroSign::Zero)?;
    println!("subgradient at K = 4: {s:?}");
    let gap = reformulation_gap(&x, &space, 4.0)?;
    println!("gap = {} (l1 {} - largest-K {})", gap.gap, gap.l1, gap.largest_k);
    Ok(())
}
