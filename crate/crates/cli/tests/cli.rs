use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use shadow_merton::io::RunManifest;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shadow-merton"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

const REFERENCE: [&str; 10] =
    ["--mu", "0.08", "--sigma", "0.3", "--delta", "0.1", "--lambda-buy", "0.01", "--lambda-sell", "0.01"];

fn solve_into(dir: &Path, out: &str) -> Output {
    let mut args = vec!["solve"];
    args.extend(REFERENCE);
    args.extend(["--out", out]);
    run(dir, &args)
}

fn solved() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let o = solve_into(dir.path(), "sol.json");
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let p = dir.path().join("sol.json");
    (dir, p)
}

#[test]
fn solve_prints_one_line_and_is_deterministic() {
    let (dir, first) = solved();
    let o = solve_into(dir.path(), "again.json");
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    let line: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    for key in ["beta_lo", "beta_hi", "fraction_lo", "fraction_hi", "delta_star"] {
        assert!(line[key].is_f64(), "{key}");
    }
    assert_eq!(fs::read(&first).unwrap(), fs::read(dir.path().join("again.json")).unwrap());

    let m1 = RunManifest::verify(&dir.path().join("sol.manifest.json")).unwrap();
    let m2 = RunManifest::verify(&dir.path().join("again.manifest.json")).unwrap();
    assert_eq!(m1.outputs[0].sha256, m2.outputs[0].sha256);
    assert_eq!(m1.command, "solve");
}

#[test]
fn solve_rejects_mu_above_sigma_squared() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["solve", "--mu", "0.1", "--sigma", "0.3", "--delta", "0.1", "--lambda-buy", "0.01", "--lambda-sell", "0.01"],
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("mu out of (0, sigma^2)"));
    assert!(!dir.path().join("solution.json").exists());
}

#[test]
fn simulate_single_path_schema() {
    let (dir, sol) = solved();
    let o = run(
        dir.path(),
        &["simulate", "--solution", sol.to_str().unwrap(), "--paths", "1", "--horizon", "0.5", "--dt", "1e-3", "--seed", "11", "--out-dir", "sim"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sim = dir.path().join("sim");
    let path_csv = fs::read_to_string(sim.join("path_00000.csv")).unwrap();
    assert_eq!(path_csv.lines().next().unwrap(), "t,beta,phi,psi,dw");
    assert_eq!(path_csv.lines().count(), 1 + 501);
    let outcome = fs::read_to_string(sim.join("outcome_00000.csv")).unwrap();
    assert_eq!(
        outcome.lines().next().unwrap(),
        "t,s,c_offset,s_tilde,v_tilde,phi0,phi1,consumption,big_l,big_u,liquidation"
    );
    assert!(!sim.join("path_00001.csv").exists());

    let manifest_file = sim.join("simulate.manifest.json");
    let m = RunManifest::verify(&manifest_file).unwrap();
    assert_eq!(m.seeds["paths"][0]["increments_stream"], 0);
    assert_eq!(m.seeds["paths"][0]["bridge_stream"], 1);
    assert_eq!(m.inputs.len(), 1);

    // tampering with an output breaks the manifest
    fs::write(sim.join("summary.csv"), "edited").unwrap();
    assert!(RunManifest::verify(&manifest_file).is_err());
}

#[test]
fn simulate_rejects_bad_flags_and_edited_solutions() {
    let (dir, sol) = solved();
    let sol = sol.to_str().unwrap();
    let base = ["simulate", "--solution", sol, "--paths", "1", "--horizon", "1", "--seed", "1"];
    let mut args = base.to_vec();
    args.extend(["--dt", "0"]);
    assert_eq!(code(&run(dir.path(), &args)), 2);

    let text = fs::read_to_string(sol).unwrap();
    let key = "\"delta_star\": ";
    let at = text.find(key).unwrap() + key.len();
    let mut edited = text.clone();
    edited.replace_range(at..at + 1, if &text[at..at + 1] == "9" { "8" } else { "9" });
    fs::write(dir.path().join("edited.json"), edited).unwrap();
    let o = run(
        dir.path(),
        &["simulate", "--solution", "edited.json", "--paths", "1", "--horizon", "1", "--dt", "1e-2", "--seed", "1"],
    );
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));

    fs::write(dir.path().join("garbled.json"), &text[..text.len() / 2]).unwrap();
    let o = run(
        dir.path(),
        &["simulate", "--solution", "garbled.json", "--paths", "1", "--horizon", "1", "--dt", "1e-2", "--seed", "1"],
    );
    assert_eq!(code(&o), 4);
}

#[test]
fn aggregate_output_ignores_thread_count() {
    let (dir, sol) = solved();
    let sol = sol.to_str().unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = format!("agg{threads}");
        let o = bin()
            .current_dir(dir.path())
            .env("SHADOW_MERTON_THREADS", threads)
            .args(["simulate", "--solution", sol, "--paths", "6", "--horizon", "1", "--dt", "1e-3", "--seed", "4"])
            .args(["--aggregate", "--out-dir", &out])
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
        assert!(!dir.path().join(&out).join("path_00000.csv").exists());
        outputs.push(fs::read(dir.path().join(&out).join("summary.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(String::from_utf8_lossy(&outputs[0]).lines().count(), 7);

    let o = bin().current_dir(dir.path()).env("SHADOW_MERTON_THREADS", "zero").args(["sweep", "--lambdas", "0.01"]).output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn evaluate_zero_shift_and_coarse_oracle() {
    let (dir, sol) = solved();
    let o = run(
        dir.path(),
        &[
            "evaluate", "--solution", sol.to_str().unwrap(), "--paths", "40", "--horizon", "3", "--dt", "1e-2", "--seed", "9",
            "--perturb", "0,0.05", "--oracle", "--oracle-grid", "200", "--out", "rep.json",
        ],
    );
    // a small run may fail flags; the report is written either way
    assert!([0, 5].contains(&code(&o)), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("rep.json")).unwrap()).unwrap();
    let rows = report["perturbation"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1 + 2 * 3);
    let base = &rows[0]["estimate"]["mean"];
    let zero: Vec<_> = rows[1..].iter().filter(|r| r["shift"] == 0.0).collect();
    assert_eq!(zero.len(), 2);
    for r in zero {
        assert_eq!(&r["estimate"]["mean"], base);
    }
    let oracle = &report["oracle"];
    assert_eq!(oracle["dp"]["grid_size"], 200);
    assert!(oracle["cells_lo"].as_f64().unwrap() <= 2.0);
    assert!(oracle["cells_hi"].as_f64().unwrap() <= 2.0);
    assert_eq!(report["flags"]["oracle"], true);
    assert_eq!(report["competitors"].as_array().unwrap().len(), 2);
    RunManifest::verify(&dir.path().join("rep.manifest.json")).unwrap();
}

#[test]
fn sweep_rows_errors_and_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["sweep", "--lambdas", "0.005,0.01,0.02"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 4);

    let o = run(dir.path(), &["sweep", "--lambdas", "0.005,-0.01,0.005", "--out", "sweep.csv"]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].ends_with(",error"));
    assert!(lines[1].ends_with(','));
    assert!(!lines[2].ends_with(','));
    assert_eq!(lines[1], lines[3]);
    RunManifest::verify(&dir.path().join("sweep.manifest.json")).unwrap();

    assert_eq!(code(&run(dir.path(), &["sweep", "--lambdas", "-0.01,-0.02"])), 3);

    fs::write(dir.path().join("pairs.csv"), "lambda_buy,lambda_sell\n0.01,0.02\n0.02,0.01\n").unwrap();
    let o = run(dir.path(), &["sweep", "--lambda-pairs", "pairs.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.lines().nth(1).unwrap().starts_with("1.0000000000000000e-2,2.0000000000000000e-2,"));
}
