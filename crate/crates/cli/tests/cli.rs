use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn system(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../systems").join(name)
}

struct Run {
    cache: TempDir,
    out: TempDir,
}

impl Run {
    fn new() -> Self {
        Run { cache: tempfile::tempdir().unwrap(), out: tempfile::tempdir().unwrap() }
    }

    fn exec(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_circlelab"))
            .args(args)
            .arg("--out")
            .arg(self.out.path())
            .env("CIRCLELAB_CACHE", self.cache.path())
            .output()
            .unwrap()
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.out.path().join(name)).unwrap()
    }
}

fn column(csv: &str, idx: usize) -> Vec<String> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

#[test]
fn count_line_system_and_cache_rerun() {
    let run = Run::new();
    let sys = system("line.json");
    let out = run.exec(&["count", "--system", sys.to_str().unwrap(), "--schedule", "0,5,10,20"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = run.read("count.csv");
    assert_eq!(first.lines().next().unwrap(), "X,N,seconds,method");
    assert_eq!(column(&first, 1), ["1", "11", "21", "41"]);

    let cached_files = fs::read_dir(run.cache.path()).unwrap().count();
    assert_eq!(cached_files, 4);
    let out = run.exec(&["count", "--system", sys.to_str().unwrap(), "--schedule", "0,5,10,20"]);
    assert!(out.status.success());
    let second = run.read("count.csv");
    assert_eq!(column(&first, 0), column(&second, 0));
    assert_eq!(column(&first, 1), column(&second, 1));
    assert_eq!(column(&first, 3), column(&second, 3));
    assert!(!run.cache.path().join("cache.lock").exists());
}

#[test]
fn budget_refusal_exits_with_two() {
    let run = Run::new();
    let sys = system("a12.json");
    let out = run.exec(&["count", "--system", sys.to_str().unwrap(), "--schedule", "100", "--budget", "1000"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
}

#[test]
fn bad_input_exits_with_one() {
    let run = Run::new();
    let sys = system("line.json");
    let out = run.exec(&["count", "--system", sys.to_str().unwrap(), "--schedule", "10,5"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run.exec(&["count", "--system", "/nonexistent.json", "--schedule", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn density_table_cached_equals_fresh() {
    let sys = system("quartic.json");
    let args = ["density", "--system", sys.to_str().unwrap(), "--p-max", "7", "--h-max", "3", "--schedule", "1,2,4"];
    let fresh = Run::new();
    let mut no_cache = args.to_vec();
    no_cache.push("--no-cache");
    assert!(fresh.exec(&no_cache).status.success());

    let cached = Run::new();
    assert!(cached.exec(&args).status.success());
    assert!(cached.exec(&args).status.success());
    assert_eq!(fresh.read("chi_p.csv"), cached.read("chi_p.csv"));
    assert_eq!(fresh.read("density.json"), cached.read("density.json"));

    let table = fresh.read("chi_p.csv");
    assert_eq!(table.lines().next().unwrap(), "p,h,chi_num,chi_den,stabilized");
    assert_eq!(table.lines().count(), 1 + 4 * 3);
}

#[test]
fn predict_json_is_deterministic() {
    let sys = system("quartic.json");
    let args = [
        "predict", "--system", sys.to_str().unwrap(), "--p-max", "5", "--h-max", "2", "--chi-samples", "4000", "--series", "1,2", "--seed", "7",
    ];
    let (a, b) = (Run::new(), Run::new());
    assert!(a.exec(&args).status.success());
    assert!(b.exec(&args).status.success());
    let (ja, jb) = (a.read("predict.json"), b.read("predict.json"));
    assert_eq!(ja, jb);
    let v: serde_json::Value = serde_json::from_str(&ja).unwrap();
    assert_eq!(v["meta"]["seed"], 7);
    assert!(v["result"]["predicted_c"].is_number());
}

#[test]
fn verify_line_system_is_degenerate() {
    let run = Run::new();
    let sys = system("line.json");
    let out = run.exec(&[
        "verify-asymptotic", "--system", sys.to_str().unwrap(), "--schedule", "5,10,20", "--p-max", "5", "--h-max", "2", "--chi-samples", "4000",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&run.read("verify.json")).unwrap();
    assert_eq!(v["result"]["verdict"], "degenerate");
    assert_eq!(column(&run.read("counts.csv"), 1), ["11", "21", "41"]);
}

#[test]
fn bounds_table_cells() {
    let run = Run::new();
    assert!(run.exec(&["bounds-table", "--d", "2,3", "--k-max", "10"]).status.success());
    let csv = run.read("bounds.csv");
    let row = csv.lines().find(|l| l.starts_with("2,3,")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let cells: Vec<&str> = row.split(',').collect();
    let get = |name: &str| cells[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!((get("thm11"), get("bhb13"), get("cor15"), get("diag15")), ("24", "36", "32", "9"));
    // d = 2 gives k = 3..=10, d = 3 gives k = 4..=10.
    assert_eq!(csv.lines().count(), 1 + 8 + 7);
    assert!(run.read("bounds.md").contains("| 2 | 3 | 24 (small)"));
}

#[test]
fn weyl_scan_ratio_bounded_with_metadata() {
    let run = Run::new();
    assert!(run.exec(&["weyl-scan", "--j", "3", "--schedule", "250,500,1000"]).status.success());
    let csv = run.read("weyl.csv");
    assert!(csv.starts_with("# j=3,sigma0=4,"));
    assert_eq!(csv.lines().nth(1).unwrap(), "X,Q,sup_ratio,argmax_alpha");
    for r in column(&csv, 2) {
        let r: f64 = r.parse().unwrap();
        assert!(r > 0.0 && r <= 5.0, "{r}");
    }
}

#[test]
fn meanvalue_scan_slope() {
    let run = Run::new();
    assert!(run.exec(&["meanvalue-scan", "--j", "3", "--u", "4", "--schedule", "20,40,80"]).status.success());
    let v: serde_json::Value = serde_json::from_str(&run.read("meanvalue.json")).unwrap();
    let slope = v["result"]["slope"].as_f64().unwrap();
    assert!((slope - 5.0).abs() <= 0.35, "{slope}");
    assert_eq!(run.read("meanvalue.csv").lines().next().unwrap(), "X,count");
}

#[test]
fn arcs_classify_reports_feasibility() {
    let run = Run::new();
    let sys = system("a12.json");
    let out = run.exec(&["arcs-classify", "--system", sys.to_str().unwrap(), "--alpha", "0", "--beta", "0", "--x", "100", "--theta", "0.1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&run.read("arcs.json")).unwrap();
    assert_eq!(v["result"]["classification"]["in_n"], true);
    assert_eq!(v["result"]["classification"]["in_p"], true);
    // Twelve variables are below the threshold 25 for (d, k) = (2, 3).
    assert_eq!(v["result"]["feasibility"]["feasible"], false);
}
