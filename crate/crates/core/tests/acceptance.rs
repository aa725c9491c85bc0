//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use l0dc::dc::DcStatus;
use l0dc::fem::{assemble, TriMesh};
use l0dc::l0::{solve_l0_penalized, InitPolicy, L0PenaltyConfig, L0Solution};
use l0dc::linalg::{dot, norm_inf};
use l0dc::measure::{
    largest_k_exact, largest_k_greedy, largest_k_relaxed, reformulation_gap, subgradient_largest_k,
    weighted_l0, weighted_l1, DiscreteMeasureSpace, ZeroSign,
};
use l0dc::problems::{control_reduced, poisson_prototype, ControlConfig, SmoothProblem};
use l0dc::sparsa::{lumped_l1_weights, sparsa_solve, SparsaConfig};
use l0dc::ssn::{prox_grad_oracle, ssn_solve, L1Weights, QuadraticOperator, SparseOperator, SsnOptions};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

/// Runs collected for the cross-cutting criteria 9 and 12.
#[derive(Default)]
struct Runs {
    all: Vec<(String, L0Solution, f64, bool)>,
}

impl Runs {
    fn push(&mut self, label: impl Into<String>, sol: &L0Solution, rho: f64, prototype: bool) {
        self.all.push((label.into(), sol.clone(), rho, prototype));
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn random_space(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, DiscreteMeasureSpace) {
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(1..=8) as f64 * 0.5).collect();
    let x: Vec<f64> = (0..n)
        .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(-9..=9) as f64 })
        .collect();
    (x, DiscreteMeasureSpace::new(weights).unwrap())
}

fn c1_reformulation() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut feasible, mut infeasible) = (0, 0);
    for trial in 0..10_000 {
        let n = rng.gen_range(1..=20);
        let (x, space) = random_space(&mut rng, n);
        let k = rng.gen_range(0..=(2.0 * space.total_measure()) as usize) as f64 * 0.5;
        let l0 = weighted_l0(&x, &space).map_err(err)?;
        let gap = reformulation_gap(&x, &space, k).map_err(err)?;
        ensure!(gap.exact, "trial {trial}: exact oracle not used");
        let zero_gap = gap.gap <= 1e-12 * gap.l1;
        ensure!(zero_gap == (l0 <= k), "trial {trial}: gap {} but l0 {l0} vs K {k}", gap.gap);
        if zero_gap { feasible += 1 } else { infeasible += 1 }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "took {secs:.1} s");
    Ok(format!("{feasible} feasible / {infeasible} infeasible, {secs:.2} s"))
}

fn c2_regression() -> Outcome {
    let space = DiscreteMeasureSpace::new(vec![1.0, 2.0, 3.0]).map_err(err)?;
    let x = [4.0, 4.0, 3.0];
    let exact = largest_k_exact(&x, &space, 4.0).map_err(err)?;
    let greedy = largest_k_greedy(&x, &space, 4.0).map_err(err)?;
    let relaxed = largest_k_relaxed(&x, &space, 4.0).map_err(err)?;
    let gap = reformulation_gap(&x, &space, 4.0).map_err(err)?;
    ensure!(exact.value == 13.0 && exact.indices == vec![0, 2], "exact {:?}", exact);
    ensure!(greedy.value == 12.0 && greedy.indices == vec![0, 1], "greedy {:?}", greedy);
    ensure!(relaxed == 15.0, "relaxed {relaxed}");
    ensure!(gap.gap == 8.0, "gap {}", gap.gap);
    let at_h = largest_k_exact(&x, &space, 4.5).map_err(err)?.value;
    let l0 = weighted_l0(&x, &space).map_err(err)?;
    ensure!(at_h == exact.value && l0 == 6.0, "h-instance: |u|_h {at_h}, l0 {l0}");
    Ok("13 / 12 / 15 / 8; |u|_4.5 = |u|_4 = 13 with l0 = 6".into())
}

fn c3_subgradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checks = 0;
    for inst in 0..100 {
        let n = rng.gen_range(1..=12);
        let (x, space) = random_space(&mut rng, n);
        let k = rng.gen_range(0.0..=space.total_measure());
        let sel = largest_k_exact(&x, &space, k).map_err(err)?;
        let policy = match inst % 3 {
            0 => ZeroSign::Zero,
            1 => ZeroSign::Plus,
            _ => ZeroSign::Minus,
        };
        let s = subgradient_largest_k(&x, &space, &sel, policy).map_err(err)?;
        let w = space.weights();
        ensure!((dot(&s, &x) - sel.value).abs() <= 1e-9, "instance {inst}: <s,x> != |x|_K");
        ensure!(s.iter().zip(w).all(|(si, wi)| si.abs() <= *wi), "instance {inst}: |s_i| > weight");
        let support: f64 = s.iter().zip(w).filter(|(si, _)| **si != 0.0).map(|(_, wi)| wi).sum();
        ensure!(support <= k + 1e-12, "instance {inst}: support weight {support} > K {k}");
        for _ in 0..1000 {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let bound = largest_k_exact(&v, &space, k).map_err(err)?.value;
            ensure!(dot(&s, &v) <= bound + 1e-9, "instance {inst}: <s,v> {} > |v|_K {bound}", dot(&s, &v));
            checks += 1;
        }
    }
    Ok(format!("{checks} inequality checks on 100 instances"))
}

fn c4_fem() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for n in [4, 8, 16] {
        let sys = assemble(&TriMesh::structured(n).map_err(err)?, |_, _| 1.0).map_err(err)?;
        for (b, p) in sys.basis_integral.iter().zip(&sys.patch_measure) {
            worst = worst.max((b - p / 3.0).abs());
        }
        for _ in 0..20 {
            let free: Vec<f64> = (0..sys.num_dofs())
                .map(|_| if rng.gen_bool(0.4) { 0.0 } else { rng.gen_range(-1.0..1.0) })
                .collect();
            let full = sys.embed(&free);
            let w = sys.w_of(&full).map_err(err)?;
            let rhs = weighted_l1(&w, sys.element_space()).map_err(err)? / 3.0;
            worst = worst.max((sys.l1_h(&full) - rhs).abs());
        }
    }
    ensure!(worst <= 1e-12, "max deviation {worst:e}");
    Ok(format!("max deviation {worst:.1e}"))
}

fn dense_spd(rng: &mut ChaCha8Rng, n: usize) -> SparseOperator {
    let b: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let mut coo = CooMatrix::new(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut v: f64 = (0..n).map(|k| b[k][i] * b[k][j]).sum::<f64>() / n as f64;
            if i == j {
                v += 0.5;
            }
            coo.push(i, j, v);
        }
    }
    SparseOperator::new(CsrMatrix::from(&coo)).unwrap()
}

fn cross_check<H: QuadraticOperator + ?Sized>(
    h: &H,
    q: &[f64],
    weights: &L1Weights,
    warm: &[f64],
) -> Result<(f64, f64), String> {
    let r = ssn_solve(h, q, weights, warm, &SsnOptions::default()).map_err(err)?;
    ensure!(r.converged, "ssn did not converge (residual {:e})", r.residual_norm);
    let reference = prox_grad_oracle(h, q, weights, 1e-13, 500_000).map_err(err)?;
    let diff: Vec<f64> = r.u.iter().zip(&reference).map(|(a, b)| a - b).collect();
    Ok((norm_inf(&diff), r.residual_norm))
}

fn c5_subproblem() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_diff, mut worst_res): (f64, f64) = (0.0, 0.0);
    for inst in 0..50 {
        let n = rng.gen_range(2..=200);
        let h = dense_spd(&mut rng, n);
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let weights = L1Weights::new((0..n).map(|_| rng.gen_range(0.0..0.5)).collect()).map_err(err)?;
        let warm = h.solve(&q);
        let (d, r) = cross_check(&h, &q, &weights, &warm).map_err(|e| format!("random {inst}: {e}"))?;
        worst_diff = worst_diff.max(d);
        worst_res = worst_res.max(r);
    }
    for (n, rho) in [(8, 0.1), (16, 0.5), (16, 2.0), (24, 1.0), (32, 0.5)] {
        let p = poisson_prototype(n).map_err(err)?;
        let weights = L1Weights::scaled(rho, &p.system().free_patch_measure()).map_err(err)?;
        let warm = p.unconstrained_minimizer().map_err(err)?;
        let (d, r) = cross_check(p.hessian(), p.q_smooth(), &weights, &warm)
            .map_err(|e| format!("fem n={n}: {e}"))?;
        worst_diff = worst_diff.max(d);
        worst_res = worst_res.max(r);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(worst_diff <= 1e-8, "disagreement {worst_diff:e}");
    ensure!(worst_res <= 1e-14, "residual {worst_res:e}");
    ensure!(secs < 60.0, "took {secs:.1} s");
    Ok(format!("max diff {worst_diff:.1e}, max |F| {worst_res:.1e}, {secs:.1} s"))
}

fn feasible(sol: &L0Solution, k: f64) -> Result<(), String> {
    ensure!(sol.gap.gap.abs() <= 1e-12 * sol.gap.l1, "gap {:e}", sol.gap.gap);
    ensure!(sol.l0 >= k - 0.02 && sol.l0 <= k, "l0 {} outside [K - 0.02, K]", sol.l0);
    Ok(())
}

fn c6_poisson(runs: &mut Runs) -> Outcome {
    let start = Instant::now();
    let cfg = L0PenaltyConfig::default();
    let mut out = Vec::new();
    for (n, reference) in [(16, -0.0058), (32, -0.0075), (64, -0.0083)] {
        let p = poisson_prototype(n).map_err(err)?;
        let sol = solve_l0_penalized(&p, &cfg).map_err(err)?;
        runs.push(format!("poisson n={n}"), &sol, cfg.rho, true);
        ensure!((sol.objective - reference).abs() <= 0.002, "n={n}: f {} vs {reference}", sol.objective);
        feasible(&sol, cfg.k).map_err(|e| format!("n={n}: {e}"))?;
        ensure!(sol.dc_iters <= 8, "n={n}: {} DC iterations", sol.dc_iters);
        out.push(format!("n={n} f={:.5} l0={:.4} dc={}", sol.objective, sol.l0, sol.dc_iters));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 120.0, "took {secs:.1} s");
    Ok(format!("{}; {secs:.2} s", out.join(", ")))
}

fn c7_penalty(runs: &mut Runs) -> Outcome {
    let p = poisson_prototype(32).map_err(err)?;
    let mut values = Vec::new();
    for rho in [1e3, 1e6, 1e9, 1e12] {
        let cfg = L0PenaltyConfig { rho, ..Default::default() };
        let sol = solve_l0_penalized(&p, &cfg).map_err(err)?;
        runs.push(format!("poisson rho={rho:e}"), &sol, rho, true);
        feasible(&sol, cfg.k).map_err(|e| format!("rho={rho:e}: {e}"))?;
        values.push(sol.objective);
    }
    let spread = values.iter().cloned().fold(f64::MIN, f64::max) - values.iter().cloned().fold(f64::MAX, f64::min);
    ensure!(spread <= 0.001, "f spread {spread}");
    Ok(format!("f spread {spread:.1e}"))
}

fn c8_schedule(runs: &mut Runs) -> Outcome {
    let p = poisson_prototype(32).map_err(err)?;
    let plain = solve_l0_penalized(&p, &L0PenaltyConfig::default()).map_err(err)?;
    let cfg = L0PenaltyConfig { schedule_lambda: Some(0.9), ..Default::default() };
    let sol = solve_l0_penalized(&p, &cfg).map_err(err)?;
    runs.push("poisson schedule 0.9", &sol, cfg.rho, true);
    ensure!(sol.schedule_reductions == 14, "{} reductions", sol.schedule_reductions);
    ensure!((14..=25).contains(&sol.dc_iters), "{} DC iterations", sol.dc_iters);
    feasible(&sol, cfg.k)?;
    let verdict = if sol.objective <= plain.objective + 1e-12 { "schedule helps" } else { "flagged: schedule hurts" };
    Ok(format!(
        "14 reductions, {} DC iterations, f {:.5} vs unscheduled {:.5} ({verdict})",
        sol.dc_iters, sol.objective, plain.objective
    ))
}

fn c9_optimality(runs: &Runs) -> Outcome {
    let mut checked = 0;
    for (label, sol, rho, prototype) in &runs.all {
        if !prototype || sol.status != DcStatus::ConvergedFixedPoint {
            continue;
        }
        let r = &sol.report;
        ensure!(
            r.pairing.abs() <= 1e-10 * (1.0 + sol.objective.abs()),
            "{label}: pairing {:e}",
            r.pairing
        );
        ensure!(r.cond_zero <= rho * (1.0 + 1e-9), "{label}: zero-node bound {:e}", r.cond_zero);
        checked += 1;
    }
    ensure!(checked > 0, "no converged prototype runs");
    Ok(format!("{checked} converged prototype runs"))
}

fn c10_sparsa(runs: &mut Runs) -> Outcome {
    let p = poisson_prototype(16).map_err(err)?;
    let sys = p.system();
    let w = lumped_l1_weights(4.36, &sys.restrict(&sys.basis_integral)).map_err(err)?;
    let u0 = p.unconstrained_minimizer().map_err(err)?;
    let r = sparsa_solve(p.hessian(), p.q_smooth(), &w, &SparsaConfig::default(), &u0).map_err(err)?;
    let l0 = weighted_l0(&sys.w_of_free(&r.u), sys.element_space()).map_err(err)?;
    let f = p.value(&r.u);
    ensure!((0.20..=0.25).contains(&l0), "l0 {l0}");
    ensure!((-0.010..=-0.005).contains(&f), "f {f}");
    ensure!(r.iterations <= 200, "{} iterations", r.iterations);
    let cfg = L0PenaltyConfig { init: InitPolicy::Custom(r.u.clone()), ..Default::default() };
    let sol = solve_l0_penalized(&p, &cfg).map_err(err)?;
    runs.push("poisson from L1", &sol, cfg.rho, true);
    ensure!(sol.dc_iters <= 5, "warm DC took {} iterations", sol.dc_iters);
    Ok(format!(
        "l0 {l0:.4}, f {f:.5}, {} iterations; warm DC {} iterations",
        r.iterations, sol.dc_iters
    ))
}

fn c11_control(runs: &mut Runs) -> Outcome {
    let system = Arc::new(assemble(&TriMesh::structured(32).map_err(err)?, |_, _| 0.0).map_err(err)?);
    let mut notes = Vec::new();
    for k in [0.5, 0.25, 0.1] {
        let problem = control_reduced(system.clone(), &ControlConfig::default()).map_err(err)?;
        let cfg = L0PenaltyConfig { k, ..Default::default() };
        let sol = solve_l0_penalized(&problem, &cfg).map_err(err)?;
        runs.push(format!("control K={k}"), &sol, cfg.rho, false);
        ensure!(sol.dc_iters <= 8, "K={k}: {} DC iterations", sol.dc_iters);
        notes.push(format!("K={k}: dc={}", sol.dc_iters));
    }
    let mut tracking = Vec::new();
    for beta in [1e-7, 1e-9, 1e-11] {
        let problem = control_reduced(system.clone(), &ControlConfig { beta, ..Default::default() }).map_err(err)?;
        let cfg = L0PenaltyConfig { schedule_lambda: Some(0.99), ..Default::default() };
        let sol = solve_l0_penalized(&problem, &cfg).map_err(err)?;
        runs.push(format!("control beta={beta:e}"), &sol, cfg.rho, false);
        tracking.push(problem.tracking_error(&sol.u));
    }
    ensure!(
        tracking.windows(2).all(|w| w[1] < w[0]),
        "tracking errors not decreasing: {tracking:?}"
    );

    // Central differences of the reduced objective.
    let problem = control_reduced(system.clone(), &ControlConfig::default()).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let u: Vec<f64> = (0..problem.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let g = problem.gradient(&u);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let d: Vec<f64> = (0..u.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t = 1e-4;
        let shifted = |s: f64| -> Vec<f64> { u.iter().zip(&d).map(|(a, b)| a + s * b).collect() };
        let fd = (problem.value(&shifted(t)) - problem.value(&shifted(-t))) / (2.0 * t);
        let exact = dot(&g, &d);
        worst = worst.max((fd - exact).abs() / exact.abs().max(1e-300));
    }
    ensure!(worst <= 1e-6, "gradient check relative error {worst:e}");
    Ok(format!(
        "{}; tracking {:.4} > {:.4} > {:.4}; gradient check {worst:.1e}",
        notes.join(", "),
        tracking[0],
        tracking[1],
        tracking[2]
    ))
}

fn c12_monotone(runs: &Runs) -> Outcome {
    ensure!(!runs.all.is_empty(), "no runs recorded");
    let mut worst = f64::NEG_INFINITY;
    for (label, sol, _, _) in &runs.all {
        ensure!(sol.is_monotone(1e-12), "{label}: increase {:e}", sol.worst_increase());
        worst = worst.max(sol.worst_increase());
    }
    Ok(format!("{} runs, worst relative increase {worst:.1e}", runs.all.len()))
}

fn main() {
    let mut runs = Runs::default();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let guarded = |f: &mut dyn FnMut(&mut Runs) -> Outcome, runs: &mut Runs| -> Outcome {
        catch_unwind(AssertUnwindSafe(|| f(runs))).unwrap_or_else(|_| Err("panicked".into()))
    };
    results.push((1, "reformulation equivalence", guarded(&mut |_| c1_reformulation(), &mut runs)));
    results.push((2, "regression instances", guarded(&mut |_| c2_regression(), &mut runs)));
    results.push((3, "subgradient properties", guarded(&mut |_| c3_subgradient(), &mut runs)));
    results.push((4, "FEM identities", guarded(&mut |_| c4_fem(), &mut runs)));
    results.push((5, "subproblem cross-check", guarded(&mut |_| c5_subproblem(), &mut runs)));
    results.push((6, "Poisson prototype", guarded(&mut c6_poisson, &mut runs)));
    results.push((7, "penalty robustness", guarded(&mut c7_penalty, &mut runs)));
    results.push((8, "schedule behavior", guarded(&mut c8_schedule, &mut runs)));
    results.push((10, "SpaRSA baseline", guarded(&mut c10_sparsa, &mut runs)));
    results.push((11, "optimal control", guarded(&mut c11_control, &mut runs)));
    results.push((9, "optimality diagnostics", guarded(&mut |r| c9_optimality(r), &mut runs)));
    results.push((12, "DC monotonicity", guarded(&mut |r| c12_monotone(r), &mut runs)));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (id, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS {id:2} {name}: {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {id:2} {name}: {reason}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", results.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", results.len());
}
