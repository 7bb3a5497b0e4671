use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn railsched(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_railsched"))
        .current_dir(dir)
        .env_remove("RAILSCHED_SEED")
        .args(args)
        .output()
        .expect("spawn railsched")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = railsched(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn appendix_qubo(dir: &Path, penalties: &str) {
    ok(dir, &["generate", "--appendix", "-o", "inst.json"]);
    ok(dir, &["qubo", "-i", "inst.json", "--penalties", penalties, "-o", "q.qubo"]);
}

#[test]
fn generate_piped_into_qubo() {
    let dir = tempfile::tempdir().unwrap();
    let generated = ok(dir.path(), &["generate", "--appendix"]);
    let mut child = Command::new(env!("CARGO_BIN_EXE_railsched"))
        .args(["qubo", "--penalties", "overlapping"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(&generated.stdout).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("nvars 18 "));
    assert!(text.contains("# elements one_hot 54 passing 24 headway 0 rolling_stock 12 constraints 90"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("(total 90)"));
}

#[test]
fn enumerate_finds_the_optimum() {
    let dir = tempfile::tempdir().unwrap();
    appendix_qubo(dir.path(), "overlapping");
    ok(dir.path(), &["solve", "--backend", "enumerate", "-i", "q.qubo", "-o", "all.csv"]);
    let csv = read(dir.path(), "all.csv");
    let first = csv.lines().find(|l| l.starts_with(['0', '1'])).unwrap();
    assert_eq!(first.split(',').nth(1), Some("6"));
    assert!(dir.path().join("all.csv.manifest.json").exists());
    assert!(dir.path().join("q.qubo.catalog").exists());
}

#[test]
fn seeded_qaoa_runs_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    appendix_qubo(dir.path(), "overlapping");
    for out in ["a.csv", "b.csv"] {
        let args = ["--threads", "1", "solve", "--backend", "qaoa", "--layers", "1", "--shots", "1024"];
        let mut args = args.to_vec();
        args.extend(["--seed", "7", "-i", "q.qubo", "-o", out]);
        ok(dir.path(), &args);
    }
    assert_eq!(read(dir.path(), "a.csv"), read(dir.path(), "b.csv"));
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    appendix_qubo(dir.path(), "split");
    let run = |out: &str, env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_railsched"));
        cmd.current_dir(dir.path()).env_remove("RAILSCHED_SEED");
        if let Some(v) = env {
            cmd.env("RAILSCHED_SEED", v);
        }
        let st = cmd
            .args(["solve", "--backend", "anneal", "--shots", "50", "--sweeps", "5", "-i", "q.qubo", "-o", out])
            .status()
            .unwrap();
        assert!(st.success());
    };
    run("env.csv", Some("11"));
    ok(dir.path(), &["solve", "--backend", "anneal", "--shots", "50", "--sweeps", "5", "--seed", "11", "-i", "q.qubo", "-o", "flag.csv"]);
    assert_eq!(read(dir.path(), "env.csv"), read(dir.path(), "flag.csv"));
    assert!(read(dir.path(), "env.csv").contains("# seed 11"));
}

#[test]
fn ilp_solve_reports_the_wait_at_cs() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--appendix", "-o", "inst.json"]);
    ok(dir.path(), &["ilp-solve", "-i", "inst.json", "-o", "sol.json"]);
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "sol.json")).unwrap();
    assert_eq!(report["objective"], 6.0);
    assert_eq!(report["feasible_strict"], true);
    let cs2 = report["times"]
        .as_array()
        .unwrap()
        .iter()
        .find(|t| t["station"] == "CS" && t["train"] == 2)
        .unwrap();
    assert_eq!(cs2["value"], 41);
}

#[test]
fn analyze_and_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    appendix_qubo(d, "overlapping");
    ok(d, &["spectrum", "-i", "inst.json", "--penalties", "split", "-o", "spectrum.json"]);
    ok(d, &["--seed", "1", "solve", "--backend", "anneal", "--sweeps", "10", "--beta-min", "0.01", "--beta-max", "1",
        "--shots", "2000", "-i", "q.qubo", "-o", "s.csv"]);
    ok(d, &["analyze", "--qubo", "q.qubo", "-i", "s.csv", "--edge", "MR:CS", "--histogram-out", "h.csv", "-o", "a.json"]);
    let analysis: serde_json::Value = serde_json::from_str(&read(d, "a.json")).unwrap();
    assert_eq!(analysis["shots"], 2000);
    let hist = read(d, "h.csv");
    assert!(hist.starts_with("bin_start,count\n"));
    for line in hist.lines().skip(1) {
        let t: i64 = line.split(',').next().unwrap().parse().unwrap();
        assert!((14..=16).contains(&t));
    }
    std::fs::write(d.join("empty.csv"), "").unwrap();
    ok(d, &["report", "--samples", "empty.csv", "--samples", "s.csv", "--qubo", "q.qubo", "--spectrum", "spectrum.json",
        "--histogram", "h.csv", "-o", "r.txt"]);
    let text = read(d, "r.txt");
    assert!(text.contains("empty.csv: no samples"));
    assert!(text.contains("feasible objectives {6 (x2), 6.5, 7, 7.5, 8 (x2)}"));
    let sidecar: serde_json::Value = serde_json::from_str(&read(d, "r.txt.json")).unwrap();
    assert_eq!(sidecar["empty_sample_files"][0], "empty.csv");
}

#[test]
fn report_fits_a_family_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut args: Vec<String> = vec!["report".into()];
    for trains in ["1", "2", "4", "6", "8"] {
        let (inst, q, s) = (format!("i{trains}.json"), format!("q{trains}.qubo"), format!("s{trains}.csv"));
        ok(d, &["generate", "--trains", trains, "--dmax", "6", "-o", &inst]);
        ok(d, &["qubo", "-i", &inst, "-o", &q]);
        ok(d, &["--seed", "2", "solve", "--backend", "anneal", "--sweeps", "3", "--shots", "500", "-i", &q, "-o", &s]);
        args.extend(["--samples".into(), s, "--qubo".into(), q]);
    }
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = ok(d, &argv);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("feasible fraction fit (Exponential)"), "{text}");
}

#[test]
fn hybrid_matches_the_monolithic_optimum() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--appendix", "-o", "inst.json"]);
    ok(dir.path(), &["hybrid", "-i", "inst.json", "--zone", "CS,MR", "--backend", "enumerate", "-o", "p.json"]);
    let doc: serde_json::Value = serde_json::from_str(&read(dir.path(), "p.json")).unwrap();
    assert_eq!(doc["portfolio"][0]["joint_objective"], 6.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(railsched(d, &["solve", "--bogus"]).status.code(), Some(2));
    assert_eq!(railsched(d, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(railsched(d, &["qubo", "--penalties", "custom"]).status.code(), Some(2));
    appendix_qubo(d, "overlapping");
    let capped = railsched(d, &["solve", "--backend", "enumerate", "--cap", "10", "-i", "q.qubo"]);
    assert_eq!(capped.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&capped.stderr).contains("capacity"));
    assert_eq!(railsched(d, &["hybrid", "-i", "inst.json", "--zone", "MR"]).status.code(), Some(1));
    std::fs::write(d.join("bad.qubo"), "nvars 2 offset 0\n0 1 x passing\n").unwrap();
    let bad = railsched(d, &["solve", "-i", "bad.qubo"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 2"));
    assert_eq!(railsched(d, &["--help"]).status.code(), Some(0));
}

#[test]
fn outputs_are_stable_and_manifests_reference_them() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--trains", "4", "--disturbed", "--seed", "3", "-o", "a.json"]);
    ok(d, &["generate", "--trains", "4", "--disturbed", "--seed", "3", "-o", "b.json"]);
    assert_eq!(read(d, "a.json"), read(d, "b.json"));
    let manifest: serde_json::Value = serde_json::from_str(&read(d, "a.json.manifest.json")).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["outputs"][0]["path"], "a.json");
    assert_eq!(manifest["outputs"][0]["sha256"].as_str().unwrap().len(), 64);
}
