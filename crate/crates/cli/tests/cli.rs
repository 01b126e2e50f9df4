use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn blockmax(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blockmax"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn blockmax")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = blockmax(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Exit status and the single stderr line.
fn fails(args: &[&str], cwd: &Path) -> (i32, String) {
    let out = blockmax(args, cwd);
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "stderr: {err}");
    assert!(err.starts_with("blockmax: error code=E_"), "stderr: {err}");
    (out.status.code().unwrap(), err)
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

fn json(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&read(dir, name)).unwrap()
}

fn tmp() -> (TempDir, PathBuf) {
    let t = TempDir::new().unwrap();
    let p = t.path().to_path_buf();
    (t, p)
}

#[test]
fn blocks_yearly_three_rows() {
    let (_t, d) = tmp();
    fs::write(d.join("in.csv"), "date,value\n1984-01-02,1.0\n1984-05-01,3.2\n1984-09-09,2.1\n").unwrap();
    ok(&["blocks", "--input", "in.csv", "--rule", "year", "--out", "o"], &d);
    let csv = read(&d.join("o"), "blocks.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("block,") && lines[0].ends_with(",maximum"));
    assert!(lines[1].starts_with("1984,") && lines[1].ends_with(",3.2"));
    assert!(d.join("o/summary.txt").exists());
    assert!(read(&d.join("o"), "manifest.txt").contains("rule=year"));
}

#[test]
fn blocks_monthly_matches_brute_force() {
    let (_t, d) = tmp();
    let mut text = String::from("date,value\n");
    let mut expected = [f64::NEG_INFINITY; 2];
    for day in 0..59u32 {
        let (m, dd) = if day < 31 { (1, day + 1) } else { (2, day - 30) };
        let v = ((day * 7919) % 101) as f64 / 10.0;
        expected[(m - 1) as usize] = expected[(m - 1) as usize].max(v);
        text.push_str(&format!("2001-{m:02}-{dd:02},{v}\n"));
    }
    fs::write(d.join("in.csv"), text).unwrap();
    ok(&["blocks", "--input", "in.csv", "--rule", "month", "--out", "o"], &d);
    let csv = read(&d.join("o"), "blocks.csv");
    let got: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(got, expected);
}

#[test]
fn blocks_minima() {
    let (_t, d) = tmp();
    fs::write(d.join("in.csv"), "date,value\n2000-01-01,1\n2000-01-02,-4\n2000-01-03,2\n").unwrap();
    ok(&["blocks", "--input", "in.csv", "--rule", "size:3", "--kind", "min", "--out", "o"], &d);
    let csv = read(&d.join("o"), "blocks.csv");
    assert!(csv.lines().next().unwrap().ends_with(",minimum"));
    assert!(csv.lines().nth(1).unwrap().ends_with(",-4"));
}

#[test]
fn missing_file_names_path() {
    let (_t, d) = tmp();
    let (code, err) = fails(&["blocks", "--input", "absent.csv", "--out", "o"], &d);
    assert_eq!(code, 2);
    assert!(err.contains("E_IO") && err.contains("absent.csv"));
}

#[test]
fn malformed_row_reports_line() {
    let (_t, d) = tmp();
    fs::write(d.join("in.csv"), "date,value\n2000-01-01,1\n2000-01-02,abc\n").unwrap();
    let (code, err) = fails(&["blocks", "--input", "in.csv", "--out", "o"], &d);
    assert_eq!(code, 2);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    let (_t, d) = tmp();
    assert_eq!(fails(&["fit", "--nonsense"], &d).0, 1);
    assert_eq!(fails(&["blocks", "--input", "x.csv", "--rule", "week", "--out", "o"], &d).0, 1);
    assert_eq!(fails(&["fit", "--input", "x.csv", "--burn-in", "9", "--iterations", "5", "--out", "o"], &d).0, 1);
    fs::write(d.join("c.txt"), "seeed=3\n").unwrap();
    let (code, err) = fails(&["simulate", "--config", "c.txt", "--out", "o"], &d);
    assert_eq!(code, 1);
    assert!(err.contains("seeed"));
    assert!(blockmax(&["--help"], &d).status.success());
}

#[test]
fn simulate_mle_and_replay() {
    let (_t, d) = tmp();
    ok(&["simulate", "--tau", "0", "--groups", "1", "--per-group", "100", "--seed", "7", "--out", "s"], &d);
    assert_eq!(read(&d.join("s"), "panel.csv").lines().count(), 101);
    ok(&["simulate", "--config", "s/manifest.txt", "--out", "s2"], &d);
    assert_eq!(read(&d.join("s"), "panel.csv"), read(&d.join("s2"), "panel.csv"));

    ok(&["mle", "--input", "s/panel.csv", "--k", "10", "--out", "m"], &d);
    let m = json(&d.join("m"), "mle.json");
    assert_eq!(m["fit"]["converged"], true);
    assert_eq!(m["return_levels"][0]["k"], 10.0);

    fs::write(d.join("tiny.csv"), "block,maximum\nb1,1\nb2,2\nb3,3\n").unwrap();
    assert_eq!(fails(&["mle", "--input", "tiny.csv", "--out", "t"], &d).0, 2);
}

#[test]
fn fit_smoke_and_determinism() {
    let (_t, d) = tmp();
    ok(&["simulate", "--groups", "5", "--per-group", "10", "--tau", "1", "--seed", "2", "--out", "s"], &d);
    let args = |out: &'static str| {
        vec![
            "fit", "--input", "s/panel.csv", "--mode", "random", "--group-tag", "group",
            "--iterations", "2000", "--burn-in", "500", "--thin", "1", "--seed", "11", "--out", out,
        ]
    };
    let start = std::time::Instant::now();
    ok(&args("a"), &d);
    assert!(start.elapsed().as_secs() < 30);
    ok(&args("b"), &d);
    assert_eq!(read(&d.join("a"), "chain.csv"), read(&d.join("b"), "chain.csv"));
    let summary = read(&d.join("a"), "summary.txt");
    for name in ["mu", "sigma", "eps", "tau2", "delta[g01]"] {
        assert!(summary.contains(name), "{name} missing from summary");
    }
    let diag = json(&d.join("a"), "diagnostics.json");
    assert_eq!(diag["retained"], 1500);

    ok(&["fit", "--config", "a/manifest.txt", "--out", "c"], &d);
    assert_eq!(read(&d.join("a"), "chain.csv"), read(&d.join("c"), "chain.csv"));
}

#[test]
fn random_mode_absent_tag() {
    let (_t, d) = tmp();
    ok(&["simulate", "--per-group", "20", "--out", "s"], &d);
    let (code, err) = fails(
        &["fit", "--input", "s/panel.csv", "--mode", "random", "--group-tag", "month", "--out", "f"],
        &d,
    );
    assert_eq!(code, 2);
    assert!(err.contains("month"));
}

fn constant_chain(dir: &Path, mu: f64, sigma: f64, eps: f64) {
    let mut text = String::from("mu,sigma,eps\n");
    for _ in 0..20 {
        text.push_str(&format!("{mu},{sigma},{eps}\n"));
    }
    fs::write(dir.join("chain.csv"), text).unwrap();
    let maxima: String = (1..=10).map(|i| format!("b{i},{i}\n")).collect();
    fs::write(dir.join("maxima.csv"), format!("block,maximum\n{maxima}")).unwrap();
}

#[test]
fn returns_gumbel_fixture() {
    let (_t, d) = tmp();
    constant_chain(&d, 0.0, 1.0, 0.0);
    ok(&["returns", "--chain", "chain.csv", "--input", "maxima.csv", "--k", "10", "--k", "100", "--out", "r"], &d);
    let r = json(&d.join("r"), "report_k10.json");
    let report = &r["entries"][0]["report"];
    assert!((report["estimate"].as_f64().unwrap() - 2.250367).abs() < 1e-6);
    assert_eq!(report["sd"].as_f64().unwrap(), 0.0);
    assert!(d.join("r/report_k100.txt").exists());
    assert!(d.join("r/rk_k10.csv").exists());

    let (code, _) = fails(&["returns", "--chain", "chain.csv", "--input", "maxima.csv", "--k", "1", "--out", "r2"], &d);
    assert_eq!(code, 2);
}

#[test]
fn returns_schema_mismatch() {
    let (_t, d) = tmp();
    constant_chain(&d, 0.0, 1.0, 0.0);
    fs::write(d.join("bad.csv"), "alpha,beta\n1,2\n").unwrap();
    let (code, err) = fails(&["returns", "--chain", "bad.csv", "--input", "maxima.csv", "--k", "10", "--out", "r"], &d);
    assert_eq!(code, 2);
    assert!(err.contains("mu"));
}

#[test]
fn end_to_end_is_byte_identical() {
    let (_t, d) = tmp();
    let mut text = String::from("series,date,value\n");
    for (s, shift) in [("A", 0.0), ("B", 2.0)] {
        for i in 0..(365 * 6) {
            let date = chrono_free_date(i);
            let v = ((i * 2654435761usize) % 1000) as f64 / 250.0 + shift;
            text.push_str(&format!("{s},{date},{v}\n"));
        }
    }
    fs::write(d.join("raw.csv"), text).unwrap();
    for run in ["1", "2"] {
        let blocks = format!("b{run}");
        let fit = format!("f{run}");
        let ret = format!("r{run}");
        ok(&["blocks", "--input", "raw.csv", "--rule", "year", "--out", &blocks], &d);
        let bcsv = format!("{blocks}/blocks.csv");
        ok(&["fit", "--input", &bcsv, "--mode", "random", "--group-tag", "series",
            "--iterations", "1500", "--burn-in", "500", "--thin", "2", "--seed", "5", "--out", &fit], &d);
        let chain = format!("{fit}/chain.csv");
        ok(&["returns", "--chain", &chain, "--input", &bcsv, "--k", "10", "--out", &ret], &d);
    }
    assert_eq!(read(&d.join("b1"), "blocks.csv"), read(&d.join("b2"), "blocks.csv"));
    assert_eq!(read(&d.join("f1"), "chain.csv"), read(&d.join("f2"), "chain.csv"));
    assert_eq!(read(&d.join("r1"), "report_k10.json"), read(&d.join("r2"), "report_k10.json"));
    let r = json(&d.join("r1"), "report_k10.json");
    assert_eq!(r["group_tag"], "series");
    assert_eq!(r["entries"].as_array().unwrap().len(), 3);
}

/// Day `i` after 2000-01-01 without a date library (no leap-day handling
/// needed beyond the Gregorian rule for 2000..2010).
fn chrono_free_date(mut i: usize) -> String {
    let mut year = 2000;
    loop {
        let len = if year % 4 == 0 { 366 } else { 365 };
        if i < len {
            break;
        }
        i -= len;
        year += 1;
    }
    let feb = if year % 4 == 0 { 29 } else { 28 };
    let months = [31, feb, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];
    let mut month = 0;
    while i >= months[month] {
        i -= months[month];
        month += 1;
    }
    format!("{year}-{:02}-{:02}", month + 1, i + 1)
}

#[test]
fn replicate_study_is_ordered_and_reproducible() {
    let (_t, d) = tmp();
    let args = |out: &'static str| {
        vec!["replicate-study", "--replicates", "4", "--method", "mle", "--per-group", "200",
             "--eps", "0.2", "--seed", "9", "--k", "10", "--out", out]
    };
    ok(&args("a"), &d);
    ok(&args("b"), &d);
    let csv = read(&d.join("a"), "replicates.csv");
    assert_eq!(csv, read(&d.join("b"), "replicates.csv"));
    let reps: Vec<usize> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(reps.len(), 16);
    assert!(reps.windows(2).all(|w| w[0] <= w[1]));
    assert!(read(&d.join("a"), "summary.txt").contains("R^10"));
}
