use proptest::prelude::*;

use l0dc::measure::{
    largest_k_exact, largest_k_greedy, largest_k_relaxed, reformulation_gap, subgradient_largest_k,
    weighted_l0, weighted_l1, DiscreteMeasureSpace, ZeroSign,
};

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    (1usize..=14).prop_flat_map(|n| {
        (
            prop::collection::vec((-6i32..=6).prop_map(f64::from), n),
            prop::collection::vec((1u32..=6).prop_map(|w| f64::from(w) * 0.25), n),
            0.0f64..=1.0,
        )
            .prop_map(|(x, w, frac)| {
                let total: f64 = w.iter().sum();
                (x, w, frac * total)
            })
    })
}

proptest! {
    #[test]
    fn greedy_exact_relaxed_are_ordered((x, w, k) in instance()) {
        let space = DiscreteMeasureSpace::new(w).unwrap();
        let greedy = largest_k_greedy(&x, &space, k).unwrap();
        let exact = largest_k_exact(&x, &space, k).unwrap();
        let relaxed = largest_k_relaxed(&x, &space, k).unwrap();
        prop_assert!(greedy.value <= exact.value + 1e-12);
        prop_assert!(exact.value <= relaxed + 1e-12);
        prop_assert!(exact.weight <= k + 1e-12);
        prop_assert!(exact.value <= weighted_l1(&x, &space).unwrap() + 1e-12);
    }

    #[test]
    fn gap_vanishes_exactly_on_feasible_vectors((x, w, k) in instance()) {
        let space = DiscreteMeasureSpace::new(w).unwrap();
        let gap = reformulation_gap(&x, &space, k).unwrap();
        prop_assert!(gap.gap >= 0.0);
        let l0 = weighted_l0(&x, &space).unwrap();
        prop_assert_eq!(gap.gap <= 1e-12 * gap.l1, l0 <= k);
    }

    #[test]
    fn subgradient_supports_the_norm((x, w, k) in instance(), v in prop::collection::vec(-5.0f64..5.0, 14)) {
        let space = DiscreteMeasureSpace::new(w).unwrap();
        let sel = largest_k_exact(&x, &space, k).unwrap();
        let s = subgradient_largest_k(&x, &space, &sel, ZeroSign::Plus).unwrap();
        let v = &v[..x.len()];
        let sv: f64 = s.iter().zip(v).map(|(a, b)| a * b).sum();
        prop_assert!(sv <= largest_k_exact(v, &space, k).unwrap().value + 1e-9);
    }

    #[test]
    fn full_budget_is_the_l1_norm((x, w, _k) in instance()) {
        let space = DiscreteMeasureSpace::new(w).unwrap();
        let total = space.total_measure();
        let exact = largest_k_exact(&x, &space, total).unwrap();
        prop_assert!((exact.value - weighted_l1(&x, &space).unwrap()).abs() <= 1e-12);
    }
}
