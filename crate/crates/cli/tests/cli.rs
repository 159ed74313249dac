use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const ENV: &str = r#"
version = 1
name = "toy"
fleet = "default"
pattern = "light"
n_days = 4
seed = 11
"#;

fn iotfp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iotfp")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = iotfp(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn error_line(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).lines().last().unwrap_or_default().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("env.toml"), ENV).unwrap();
        Run { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// gen -> extract -> train -> grid -> retrain; returns the report.
    fn pipeline(&self) -> String {
        let p = |n| self.path(n);
        ok(&["gen", "--config", s(&p("env.toml")), "--out", s(&p("rows.jsonl")), "--packets-out", s(&p("packets.jsonl")), "--labels-out", s(&p("labels.json"))]);
        ok(&["extract", "--packets", s(&p("packets.jsonl")), "--labels", s(&p("labels.json")), "--out", s(&p("extracted.jsonl"))]);
        ok(&["train", "--data", s(&p("rows.jsonl")), "--model-type", "rfc", "--group", "per-category", "--window", "2", "--seed", "4", "--out", s(&p("rfc.bin"))]);
        ok(&["train", "--data", s(&p("rows.jsonl")), "--model-type", "fc", "--group", "all-device", "--window", "2", "--seed", "4", "--epochs", "2", "--out", s(&p("fc.bin"))]);
        ok(&["grid", "--data", s(&p("rows.jsonl")), "--types", "dtc,rfc", "--groups", "all-device,per-category", "--seed", "2", "--out", s(&p("grid.csv"))]);
        ok(&["retrain", "--model", s(&p("fc.bin")), "--data", s(&p("rows.jsonl")), "--start", "3", "--window", "1", "--freeze", "3", "--epochs", "2", "--seed", "9", "--eval", &format!("all={}", s(&p("rows.jsonl"))), "--out", s(&p("fc_retrained.bin"))])
    }
}

const OUTPUTS: [&str; 9] = [
    "rows.jsonl",
    "packets.jsonl",
    "labels.json",
    "extracted.jsonl",
    "rfc.bin",
    "fc.bin",
    "grid.csv",
    "fc_retrained.bin",
    "report",
];

#[test]
fn pipeline_is_byte_identical_across_reruns() {
    let (a, b) = (Run::new(), Run::new());
    let ra = a.pipeline();
    let rb = b.pipeline();
    std::fs::write(a.path("report"), &ra).unwrap();
    std::fs::write(b.path("report"), &rb).unwrap();
    for name in OUTPUTS {
        let (x, y) = (std::fs::read(a.path(name)).unwrap(), std::fs::read(b.path(name)).unwrap());
        assert!(!x.is_empty(), "{name} is empty");
        assert!(x == y, "{name} differs between runs");
    }
}

#[test]
fn grid_csv_schema_and_precision() {
    let r = Run::new();
    r.pipeline();
    let text = std::fs::read_to_string(r.path("grid.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("model_type,group,w,p,f1"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4 * 7 * 14);
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f.len(), 5);
        if !f[4].is_empty() {
            assert_eq!(f[4].split('.').nth(1).map(str::len), Some(6), "{row}");
        }
    }
}

#[test]
fn retrain_report_shows_frozen_layers_unchanged() {
    let r = Run::new();
    let report = r.pipeline();
    let layers: Vec<Vec<&str>> = report
        .lines()
        .skip(1)
        .take_while(|l| !l.starts_with("set,"))
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(layers.len(), 5);
    for (i, l) in layers.iter().enumerate() {
        let frozen = i < 3;
        assert_eq!(l[2], frozen.to_string());
        assert_eq!(l[3], frozen.to_string(), "layer {i}: {l:?}");
    }
    assert!(report.contains("\nset,f1_before,f1_after\nall,"));
    let info = ok(&["info", "--model", s(&r.path("fc_retrained.bin"))]);
    assert!(info.contains("freeze_mask=11100"), "{info}");
    assert!(info.contains("window_start=3 window_len=1"));
}

#[test]
fn extraction_matches_generated_flows() {
    let r = Run::new();
    r.pipeline();
    let count = |n| std::fs::read_to_string(r.path(n)).unwrap().lines().count();
    // Every generated flow is preceded by one DNS answer, which is a flow too.
    let (generated, extracted) = (count("rows.jsonl"), count("extracted.jsonl"));
    assert!(extracted >= generated && extracted <= 2 * generated + 10, "{generated} vs {extracted}");
}

#[test]
fn bench_prints_a_timing_table() {
    let r = Run::new();
    r.pipeline();
    let out = ok(&["bench", "--model", s(&r.path("rfc.bin")), "--data", s(&r.path("rows.jsonl")), "--n", "100,1000"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "model_type,group,n,models,seconds,per_sample_us");
    assert!(lines[1].starts_with("RFC,per-category,100,6,"), "{}", lines[1]);
    assert!(lines[2].starts_with("RFC,per-category,1000,6,"));
}

#[test]
fn failures_end_with_a_parseable_error_line() {
    let r = Run::new();
    let missing = iotfp(&["train", "--data", s(&r.path("nope.jsonl")), "--model-type", "dtc", "--group", "all-device", "--out", s(&r.path("m.bin"))]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(error_line(&missing).starts_with("error: kind=io message="), "{}", error_line(&missing));

    std::fs::write(r.path("bad.toml"), ENV.replace("version = 1", "version = 9")).unwrap();
    let bad = iotfp(&["gen", "--config", s(&r.path("bad.toml")), "--out", s(&r.path("x.jsonl"))]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(error_line(&bad).starts_with("error: kind=config message="));

    std::fs::write(r.path("broken.jsonl"), "{\"src_port\": 1}\n").unwrap();
    let parse = iotfp(&["grid", "--data", s(&r.path("broken.jsonl"))]);
    assert!(error_line(&parse).starts_with("error: kind=parse message="), "{}", error_line(&parse));

    let usage = iotfp(&["train", "--model-type", "bogus"]);
    assert_eq!(usage.status.code(), Some(2));
    assert!(error_line(&usage).starts_with("error: kind=usage message="));

    r.pipeline();
    let tree = iotfp(&["retrain", "--model", s(&r.path("rfc.bin")), "--data", s(&r.path("rows.jsonl")), "--out", s(&r.path("t.bin"))]);
    assert_eq!(tree.status.code(), Some(1));
    assert!(error_line(&tree).starts_with("error: kind=harness message="));
    assert!(!r.path("t.bin").exists());
}

#[test]
fn help_succeeds() {
    let out = iotfp(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["extract", "gen", "train", "grid", "retrain", "bench"] {
        assert!(text.contains(sub));
    }
}
