use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pcsplit::{io, oracle, predict};

const TRACE_HEADER: &str = "k,primal_res,dual_res,pred_norm,dist_sq_H,progress_sq_G,slack";

fn problem(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../problems")
        .join(name)
}

fn pcsplit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcsplit"))
        .args(args)
        .env_remove("PCSPLIT_LOG")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn flat(v: &serde_json::Value) -> Vec<f64> {
    v.as_array()
        .unwrap()
        .iter()
        .flat_map(|b| b.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()))
        .collect()
}

#[test]
fn solve_qp_fixture_converges_to_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let file = problem("qp3.json");
    let o = pcsplit(&[
        "solve",
        path_str(&file),
        "--scheme",
        "gs3-alg1",
        "--nu",
        "0.9",
        "--tol",
        "1e-8",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let sol = read_json(&dir.path().join("solution.json"));
    assert_eq!(sol["status"], "converged");
    for key in ["primal", "dual", "compl"] {
        assert!(sol["residuals"][key].as_f64().unwrap() <= 1e-6, "{key}");
    }

    let p = io::load_problem(&file).unwrap();
    let (w_star, _) = oracle::reference_solution(&p).unwrap();
    let mut w = flat(&sol["blocks"]);
    w.extend(
        sol["lambda"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap()),
    );
    assert_eq!(w.len(), w_star.len());
    for (a, b) in w.iter().zip(w_star.iter()) {
        assert!((a - b).abs() <= 1e-5, "{a} vs {b}");
    }
    assert!(!dir.path().join("trace.csv").exists());
}

#[test]
fn scprsm_rejects_mu_one() {
    let o = pcsplit(&[
        "solve",
        path_str(&problem("two_block.json")),
        "--scheme",
        "scprsm",
        "--mu",
        "1.0",
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("(0,1)"), "{}", stderr(&o));
}

#[test]
fn iteration_cap_gives_exit_two_and_one_trace_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = pcsplit(&[
        "solve",
        path_str(&problem("qp3.json")),
        "--max-iters",
        "1",
        "--monitor",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let lines: Vec<_> = trace.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], TRACE_HEADER);
    assert!(lines[1].starts_with("0,"));
    assert_eq!(
        read_json(&dir.path().join("solution.json"))["status"],
        "iteration_cap"
    );
}

#[test]
fn traces_are_byte_identical() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let o = pcsplit(&[
            "trace",
            path_str(&problem("lasso_split.json")),
            "--scheme",
            "gs3-alg3",
            "--seed",
            "7",
            "--out",
            path_str(dir.path()),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        fs::read(dir.path().join("trace.csv")).unwrap()
    };
    let a = run();
    let b = run();
    assert!(a.len() > TRACE_HEADER.len() + 10);
    assert_eq!(a, b);
}

#[test]
fn trace_rows_carry_contraction_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = pcsplit(&[
        "trace",
        path_str(&problem("consensus4.json")),
        "--scheme",
        "multi-dp",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut rows = 0;
    for (k, line) in trace.lines().skip(1).enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 7);
        assert_eq!(cols[0], k.to_string());
        let slack: f64 = cols[6].parse().unwrap();
        let dist: f64 = cols[4].parse().unwrap();
        assert!(slack >= -1e-8 * dist.max(1.0), "row {k}: slack {slack}");
        rows += 1;
    }
    let sol = read_json(&dir.path().join("solution.json"));
    assert_eq!(sol["iterations"].as_u64().unwrap() as usize, rows);
    assert_eq!(sol["contraction_violations"], 0);
}

fn write_matrix(path: &Path, m: &pcsplit::matrix::DenseMatrix) {
    let rows: Vec<Vec<f64>> = (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect();
    fs::write(path, serde_json::to_string(&rows).unwrap()).unwrap();
}

#[test]
fn custom_split_with_d_equal_to_symmetric_part_fails() {
    let dir = tempfile::tempdir().unwrap();
    let q = predict::q_gs3_images(1, 1.0).unwrap().q;
    let d_file = dir.path().join("d.json");
    write_matrix(&d_file, &(q.transpose() + &q));
    let file = problem("scalar3.json");
    for cmd in ["certify", "solve"] {
        let o = pcsplit(&[
            cmd,
            path_str(&file),
            "--scheme",
            "custom-split",
            "--split-d",
            path_str(&d_file),
        ]);
        assert_eq!(code(&o), 1, "{cmd}");
        assert!(stderr(&o).contains("G not SPD"), "{cmd}: {}", stderr(&o));
    }
}

#[test]
fn custom_split_with_half_symmetric_part_certifies() {
    let dir = tempfile::tempdir().unwrap();
    let q = predict::q_gs3_images(1, 1.0).unwrap().q;
    let d_file = dir.path().join("d.json");
    write_matrix(&d_file, &((q.transpose() + &q) * 0.5));
    let file = problem("scalar3.json");
    let o = pcsplit(&["certify", path_str(&file), "--split-d", path_str(&d_file)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("scheme custom-split"));
    let o = pcsplit(&[
        "solve",
        path_str(&file),
        "--split-d",
        path_str(&d_file),
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn certify_gs3_alg2_scalar_fixture() {
    let o = pcsplit(&[
        "certify",
        path_str(&problem("scalar3.json")),
        "--scheme",
        "gs3-alg2",
        "--nu",
        "0.5",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    for needle in [
        "executed: Q 3x3, D 3x3, G 3x3, M 3x3, H 3x3",
        "hm_residual",
        "min_eig H",
        "native:",
        "certificate: ok",
    ] {
        assert!(out.contains(needle), "missing {needle:?} in\n{out}");
    }
}

#[test]
fn certify_multi_dp_orthonormal_four_blocks() {
    let o = pcsplit(&[
        "certify",
        path_str(&problem("consensus4.json")),
        "--scheme",
        "multi-dp",
        "--nu",
        "0.3",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("certificate: ok"));
}

#[test]
fn certify_probe_is_seeded() {
    let args = |seed| {
        stdout(&pcsplit(&[
            "certify",
            path_str(&problem("lasso_split.json")),
            "--scheme",
            "gs3-alg1",
            "--seed",
            seed,
        ]))
    };
    assert_eq!(args("3"), args("3"));
    assert_ne!(args("3"), args("4"));
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        [
            "scheme",
            "status",
            "iterations",
            "primal_res",
            "dual_res",
            "compl_res",
            "total_progress",
            "reason"
        ]
    );
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[test]
fn compare_gs3_variants() {
    let dir = tempfile::tempdir().unwrap();
    let o = pcsplit(&[
        "compare",
        path_str(&problem("qp3.json")),
        "--scheme",
        "gs3-alg1",
        "--scheme",
        "gs3-alg2",
        "--scheme",
        "gs3-alg3",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 3);
    for (row, name) in rows.iter().zip(["gs3-alg1", "gs3-alg2", "gs3-alg3"]) {
        assert_eq!(row[0], name);
        assert_eq!(row[1], "converged");
        assert!(row[3].parse::<f64>().unwrap() <= 1e-6);
    }
    assert_eq!(
        fs::read_to_string(dir.path().join("compare.csv")).unwrap(),
        stdout(&o)
    );
}

#[test]
fn compare_on_inequality_rejects_primal_dual() {
    let o = pcsplit(&[
        "compare",
        path_str(&problem("inequality.json")),
        "--scheme",
        "multi-pd",
        "--scheme",
        "multi-dp",
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "multi-pd");
    assert_eq!(rows[0][1], "rejected");
    assert!(rows[0][7].contains("inequality"), "{:?}", rows[0]);
    assert_eq!(rows[1][0], "multi-dp");
    assert_eq!(rows[1][1], "converged");
    assert!(rows[1][7].is_empty());
}

#[test]
fn single_config_compare_matches_solve_summary() {
    let dir = tempfile::tempdir().unwrap();
    let file = problem("lasso_split.json");
    let solve = pcsplit(&[
        "solve",
        path_str(&file),
        "--scheme",
        "multi-pd",
        "--out",
        path_str(dir.path()),
    ]);
    let compare = pcsplit(&["compare", path_str(&file), "--scheme", "multi-pd"]);
    assert_eq!(code(&solve), 0);
    assert_eq!(code(&compare), 0);
    assert_eq!(stdout(&solve), stdout(&compare));
}

#[test]
fn compare_defaults_to_applicable_schemes() {
    let o = pcsplit(&["compare", path_str(&problem("consensus4.json"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let names: Vec<String> = csv_rows(&stdout(&o)).into_iter().map(|r| r[0].clone()).collect();
    assert_eq!(names, ["multi-pd", "multi-dp"]);
}

#[test]
fn bad_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.json");
    fs::write(
        &broken,
        r#"{"m": 1, "sense": "equality", "rhs": [1.0], "blocks": [{"kind": "zero", "A": [[1.0, 2.0]]}]}"#,
    )
    .unwrap();
    let qp = problem("qp3.json");
    let ineq = problem("inequality.json");
    let cases: Vec<Vec<&str>> = vec![
        vec!["solve", path_str(&broken)],
        vec!["solve", "/nonexistent/problem.json"],
        vec!["solve", path_str(&qp), "--bogus"],
        vec!["solve", path_str(&qp), "--scheme", "nope"],
        vec!["solve", path_str(&qp), "--scheme", "scprsm"],
        vec!["solve", path_str(&qp), "--nu", "1.5"],
        vec![
            "solve",
            path_str(&qp),
            "--scheme",
            "gs3-alg1",
            "--scheme",
            "gs3-alg2",
        ],
        vec!["certify", path_str(&ineq), "--scheme", "gs3-alg1"],
    ];
    for args in cases {
        let o = pcsplit(&args);
        assert_eq!(code(&o), 1, "{args:?}: {}", stderr(&o));
        assert!(!stderr(&o).is_empty());
    }
}

#[test]
fn help_exits_zero() {
    let o = pcsplit(&["--help"]);
    assert_eq!(code(&o), 0);
    for cmd in ["solve", "certify", "compare", "trace"] {
        assert!(stdout(&o).contains(cmd));
    }
}
