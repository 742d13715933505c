use std::path::Path;
use std::process::{Command, Output};

fn dynrisk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynrisk"))
        .args(args)
        .env_remove("DYNRISK_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scalar(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no '{key}' in output:\n{text}"))
        .trim()
        .parse()
        .unwrap()
}

#[test]
fn merton_prints_the_closed_form_proportion() {
    let o = dynrisk(&["merton"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let pi = scalar(&stdout(&o), "pi_m");
    assert!((pi - 0.08 / (0.3 * 0.35 * 0.35)).abs() < 1e-12);
}

#[test]
fn riskless_control_against_wealth_benchmark_has_zero_var() {
    let o = dynrisk(&[
        "risk",
        "--risk.measure",
        "var",
        "--control.pi",
        "0",
        "--control.c",
        "0",
        "--market.r",
        "0",
        "--benchmark",
        "fraction:1.0",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(scalar(&stdout(&o), "risk"), 0.0);
}

#[test]
fn bad_input_exits_with_code_2() {
    let cases: &[&[&str]] = &[
        &[],
        &["frobnicate"],
        &["merton", "--market.nope", "1"],
        &["merton", "--gamma", "0.5", "--utility.gamma", "0.5"],
        &["merton", "--gamma", "1"],
        &["merton", "--threads", "0"],
        &["risk", "--benchmark", "fraction:-2"],
        &["experiment"],
        &["experiment", "no_such_recipe"],
    ];
    for args in cases {
        let o = dynrisk(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
    let o = dynrisk(&["merton", "--market.nope", "1"]);
    assert!(stderr(&o).contains("market.nope"));
}

#[test]
fn config_file_keys_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.cfg");
    std::fs::write(
        &good,
        "# baseline with a different risk aversion\nutility.gamma = 0.5\nhorizon.delta = 1/12\n",
    )
    .unwrap();
    let o = dynrisk(&["merton", "--config", good.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!((scalar(&stdout(&o), "pi_m") - 0.08 / (0.5 * 0.35 * 0.35)).abs() < 1e-12);

    let unknown = dir.path().join("unknown.cfg");
    std::fs::write(&unknown, "risk.alpha = 0.05\nrisk.colour = red\n").unwrap();
    let o = dynrisk(&["merton", "--config", unknown.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("risk.colour"));

    let dup = dir.path().join("dup.cfg");
    std::fs::write(&dup, "gamma = 0.5\nutility.gamma = 0.6\n").unwrap();
    let o = dynrisk(&["merton", "--config", dup.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "utility.gamma = 0.5\n").unwrap();
    let o = dynrisk(&[
        "merton",
        "--config",
        cfg.to_str().unwrap(),
        "--gamma",
        "0.3",
    ]);
    assert!((scalar(&stdout(&o), "pi_m") - 0.08 / (0.3 * 0.35 * 0.35)).abs() < 1e-12);
}

#[test]
fn infeasible_constraint_exits_with_code_3() {
    // A one-year frozen position at the benchmark proportion already loses
    // more than the bound, so no long-only proportion is admissible.
    let o = dynrisk(&[
        "solve-continuous",
        "--risk.convention",
        "shares",
        "--solver.short_selling",
        "false",
        "--delta",
        "1",
        "--gamma",
        "0.9",
        "--utility.consumption",
        "false",
        "--out",
        tempfile::tempdir().unwrap().path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn solver_diagnostics_exit_with_code_4() {
    let o = dynrisk(&[
        "solve-discrete",
        "--solver.method",
        "grid",
        "--solver.wealth_min",
        "0.9",
        "--solver.wealth_max",
        "1.1",
        "--solver.wealth_nodes",
        "11",
        "--out",
        tempfile::tempdir().unwrap().path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

fn result_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timings.json")
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_are_byte_identical() {
    let runs: &[&[&str]] = &[
        &["simulate", "--paths", "2000", "--seed", "7"],
        &[
            "simulate",
            "--paths",
            "2000",
            "--seed",
            "7",
            "--simulation.regime",
            "discrete",
        ],
        &[
            "experiment",
            "eff_vs_lambda_discrete",
            "--sweep.lambdas",
            "0,0.05",
        ],
        &["solve-continuous", "--output.format", "json"],
    ];
    for args in runs {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let sub = if args[0] == "experiment" {
            args[1]
        } else {
            args[0]
        };
        for d in [&a, &b] {
            let mut full = args.to_vec();
            let out = d.path().join("out");
            full.extend(["--out", out.to_str().unwrap()]);
            let o = dynrisk(&full);
            assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        }
        let fa = result_files(&a.path().join("out").join(sub));
        let fb = result_files(&b.path().join("out").join(sub));
        assert!(fa.len() >= 2, "{args:?}");
        // Output paths differ between the two runs; compare everything else.
        let strip = |files: Vec<(String, Vec<u8>)>, root: &Path| -> Vec<(String, String)> {
            files
                .into_iter()
                .map(|(n, bytes)| {
                    (
                        n,
                        String::from_utf8(bytes)
                            .unwrap()
                            .replace(root.to_str().unwrap(), "<dir>"),
                    )
                })
                .collect()
        };
        assert_eq!(strip(fa, a.path()), strip(fb, b.path()), "{args:?}");
    }
}

#[test]
fn output_directory_defaults_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_dynrisk"))
        .args(["solve-discrete"])
        .env("DYNRISK_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("solve-discrete/value_surface.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "n,t,x,value,beta,zeta");
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("solve-discrete/summary.json")).unwrap(),
    )
    .unwrap();
    assert!(summary["version"].as_str().is_some_and(|v| !v.is_empty()));
    assert_eq!(summary["config"]["horizon.delta"], "1/24");
}

#[test]
fn discrete_lambda_sweep_reports_the_unconstrained_gap() {
    let dir = tempfile::tempdir().unwrap();
    let o = dynrisk(&[
        "experiment",
        "eff_vs_lambda_discrete",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv =
        std::fs::read_to_string(dir.path().join("eff_vs_lambda_discrete/efficiency.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "sweep_var,value_coeff_a,value_coeff_b,efficiency"
    );
    let row: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(row[0], 0.0);
    let loss = 1.0 - row[3];
    assert!((loss - 0.072).abs() <= 0.01, "loss at lambda = 0: {loss}");
    assert_eq!(csv.lines().count(), 17);
}
