use std::fs;

use l0dc::cli::{main_with_args, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER};
use l0dc::fem::{read_field, write_field};

fn run(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("l0dc").chain(args.iter().copied()))
}

#[test]
fn identical_runs_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let out = out.to_str().unwrap();
        assert_eq!(run(&["poisson", "--n", "12", "--schedule", "0.9", "--csv", out]), EXIT_OK);
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,K,rho,f,l0,gap,dc_iters,ssn_iters,selection_mode,K_reductions"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "12");
    assert_eq!(row[8], "greedy");
    assert!(!row[9].is_empty());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "n = 8\nK = 0.5\nrho = 1e6\n").unwrap();
    let out = dir.path().join("out.csv");
    let code = run(&[
        "poisson",
        "--config",
        cfg.to_str().unwrap(),
        "--K",
        "0.3",
        "--csv",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let text = fs::read_to_string(&out).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "8");
    assert_eq!(row[1].parse::<f64>().unwrap(), 0.3);
    assert_eq!(row[2].parse::<f64>().unwrap(), 1e6);
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "n = 8\nkappa = 3\n").unwrap();
    assert_eq!(run(&["poisson", "--config", cfg.to_str().unwrap()]), EXIT_CONFIG);
}

#[test]
fn verify_accepts_own_output_and_rejects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let field = dir.path().join("u.txt");
    let csv = dir.path().join("run.csv");
    let (field_s, csv_s) = (field.to_str().unwrap(), csv.to_str().unwrap());
    assert_eq!(
        run(&["poisson", "--n", "16", "--field", field_s, "--csv", csv_s, "--verify"]),
        EXIT_OK
    );
    assert_eq!(run(&["verify", "--n", "16", "--field", field_s, "--csv", csv_s]), EXIT_OK);

    let mut u = read_field(&field).unwrap();
    let i = u.iter().position(|v| *v == 0.0).unwrap();
    u[i] = 1.0;
    write_field(&field, &u).unwrap();
    assert_eq!(run(&["verify", "--n", "16", "--field", field_s, "--csv", csv_s]), EXIT_SOLVER);
    assert_eq!(run(&["verify", "--n", "8", "--field", field_s]), EXIT_CONFIG);
}

#[test]
fn sweep_rows_follow_grid_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let code = run(&[
        "sweep", "--ns", "12,8", "--rhos", "1e3,1e9", "--threads", "3", "--csv", out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let text = fs::read_to_string(&out).unwrap();
    let firsts: Vec<(&str, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0], f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(firsts, vec![("12", 1e3), ("12", 1e9), ("8", 1e3), ("8", 1e9)]);
}

#[test]
fn sparsa_and_control_subcommands_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    assert_eq!(run(&["sparsa", "--n", "8", "--beta", "2", "--csv", out.to_str().unwrap()]), EXIT_OK);
    assert!(fs::read_to_string(&out).unwrap().starts_with("n,beta,f,l0,iterations\n8,"));
    let out = dir.path().join("c.csv");
    assert_eq!(run(&["control", "--n", "8", "--K", "0.5", "--csv", out.to_str().unwrap()]), EXIT_OK);
    assert!(fs::read_to_string(&out).unwrap().contains("tracking_error"));
    assert_eq!(run(&["control", "--n", "8", "--beta=-1"]), EXIT_CONFIG);
}
