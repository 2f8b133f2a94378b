use std::path::PathBuf;
use std::process::{Command, Output};

fn eprldpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eprldpc")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("eprldpc-cli-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn construct_then_analyze() {
    let dir = scratch("construct");
    let code = dir.join("c.qalist");
    let out = eprldpc(&["construct", "--p", "2", "--girth", "6", "--n", "48", "--seed", "3", "--out", code.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&code).unwrap();
    assert!(text.starts_with("qalist v1"));
    let out = eprldpc(&["analyze", "--in", code.to_str().unwrap(), "--trials", "1000"]);
    assert!(out.status.success());
    let report = stdout(&out);
    let g = report.lines().find_map(|l| l.strip_prefix("girth: ")).unwrap();
    assert!(g.starts_with('>') || g.parse::<usize>().unwrap() >= 6, "{g}");
    assert!(report.contains("mother lambda(x) = 1.0000x^2"));
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn config_file_merges_under_flags() {
    let dir = scratch("config");
    let code = dir.join("c.qalist");
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, format!("# small code\np = 2\nn = 24\ngirth = 4\nout = {}\nseed = 9\n", code.display())).unwrap();
    // the flag wins over the file's n
    let out = eprldpc(&["--config", cfg.to_str().unwrap(), "construct", "--n", "36"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = eprldpc(&["analyze", "--in", code.to_str().unwrap(), "--trials", "0"]);
    assert!(stdout(&out).contains("symbols: 36"), "{}", stdout(&out));
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn sweep_writes_csv_and_plot() {
    let dir = scratch("sweep");
    let code = dir.join("c.qalist");
    assert!(eprldpc(&["construct", "--p", "2", "--n", "48", "--out", code.to_str().unwrap()]).status.success());
    let csv = dir.join("r.csv");
    let out = eprldpc(&[
        "sweep", "--in", code.to_str().unwrap(), "--decoder", "bec", "--channel", "bec", "--grid", "0.1,0.3",
        "--min-errors", "5", "--max-frames", "128", "--out", csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(std::fs::read_to_string(csv.with_extension("svg")).unwrap().starts_with("<svg"));
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn exit_codes() {
    assert_eq!(eprldpc(&["construct", "--bogus"]).status.code(), Some(1));
    assert_eq!(eprldpc(&["analyze", "--in", "/nonexistent/code.qalist"]).status.code(), Some(2));
    let dir = scratch("exit");
    let bad = dir.join("bad.qalist");
    std::fs::write(&bad, "qalist v1\ngarbage\n").unwrap();
    assert_eq!(eprldpc(&["analyze", "--in", bad.to_str().unwrap()]).status.code(), Some(2));
    let code = dir.join("c.qalist");
    eprldpc(&["construct", "--p", "2", "--n", "24", "--girth", "4", "--out", code.to_str().unwrap()]);
    // erasure decoder on a Gaussian grid is rejected as a usage error
    let out = eprldpc(&["sweep", "--in", code.to_str().unwrap(), "--decoder", "bec", "--grid", "1.0"]);
    assert_eq!(out.status.code(), Some(1));
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn verify_passes() {
    let out = eprldpc(&["verify", "--trials", "20000", "--samples", "200"]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).lines().filter(|l| l.contains(": PASS - ")).count() >= 9, "{}", stdout(&out));
}
