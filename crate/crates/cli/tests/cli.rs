use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn wpcn(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wpcn"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn short(args: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    v.extend(["--set".into(), "run.slots=3000".into()]);
    v
}

fn run_short(args: &[&str], out: &Path) -> Output {
    let owned = short(args);
    let refs: Vec<&str> = owned.iter().map(String::as_str).collect();
    wpcn(&refs, out)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    let text = fs::read_to_string(path).unwrap();
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    csv::Reader::from_reader(body.as_bytes()).records().map(Result::unwrap).collect()
}

#[test]
fn run_writes_metrics_and_a_trace_row_per_slot() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_short(&["run"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(rows(&dir.path().join("metrics.csv")).len(), 1);
    assert_eq!(rows(&dir.path().join("trace.csv")).len(), 3000);
}

#[test]
fn trace_off_writes_no_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_short(&["run", "--trace", "off"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(!dir.path().join("trace.csv").exists());
    assert!(dir.path().join("metrics.csv").exists());
}

#[test]
fn sweep_rows_come_back_sorted_by_v() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_short(&["sweep", "--v-list", "1e13,1e12,3e12"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: Vec<f64> = rows(&dir.path().join("sweep.csv")).iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(v, vec![1e12, 3e12, 1e13]);
    assert_eq!(rows(&dir.path().join("metrics.csv")).len(), 3);
}

#[test]
fn pattern_has_one_row_per_angle_and_is_mirror_symmetric() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_short(&["pattern"], dir.path());
    assert_eq!(code(&o), 0);
    let r = rows(&dir.path().join("pattern.csv"));
    assert_eq!(r.len(), 360);
    let power: Vec<&str> = r.iter().map(|x| x.get(1).unwrap()).collect();
    for k in 1..360 {
        assert_eq!(power[k], power[360 - k], "angle index {k}");
    }
    assert!(String::from_utf8_lossy(&o.stdout).contains("mirror symmetric: yes"));
}

#[test]
fn same_seed_gives_identical_bytes_and_another_seed_does_not() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (dir, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        assert_eq!(code(&run_short(&["run", "--trace", "full", "--seed", seed], dir.path())), 0);
    }
    let read = |d: &tempfile::TempDir, f: &str| fs::read(d.path().join(f)).unwrap();
    for f in ["trace.csv", "metrics.csv"] {
        assert_eq!(read(&a, f), read(&b, f), "{f}");
    }
    assert_ne!(read(&a, "trace.csv"), read(&c, "trace.csv"));
}

#[test]
fn configuration_problems_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let cases: Vec<Vec<String>> = vec![
        short(&["run", "--set", "constants.v=0"]),
        short(&["run", "--set", "constants.p_max_w=-1"]),
        short(&["run", "--set", "constants.no_such_key=1"]),
        short(&["run", "--config", missing.to_str().unwrap()]),
        short(&["sweep", "--set", "run.v_list=[]"]),
    ];
    for args in cases {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = wpcn(&refs, dir.path());
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn bad_schema_and_missing_file_have_distinct_messages() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[topology]\nnodes = \"five\"\n").unwrap();
    let missing = dir.path().join("nope.toml");
    let a = wpcn(&["run", "--config", bad.to_str().unwrap()], dir.path());
    let b = wpcn(&["run", "--config", missing.to_str().unwrap()], dir.path());
    assert_eq!((code(&a), code(&b)), (2, 2));
    assert_ne!(a.stderr, b.stderr);
}

#[test]
fn validate_passes_clean_and_exits_4_under_injection() {
    let dir = tempfile::tempdir().unwrap();
    let clean = wpcn(&["validate"], dir.path());
    assert_eq!(code(&clean), 0, "{}", String::from_utf8_lossy(&clean.stdout));
    let broken = wpcn(&["validate", "--inject", "data-sign-flip"], dir.path());
    assert_eq!(code(&broken), 4);
    let out = String::from_utf8_lossy(&broken.stdout);
    assert_eq!(out.lines().filter(|l| l.starts_with("FAIL")).count(), 1, "{out}");
}
