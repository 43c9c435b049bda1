use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};

fn manifest() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn configs() -> PathBuf {
    manifest().join("configs")
}

fn mixred(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixred"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mixred-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_in(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        sub,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    mixred(&args)
}

fn read(p: PathBuf) -> String {
    fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn bundled_configs_match_golden_files() {
    for name in ["kt_bernoulli", "linreg", "countable"] {
        let out = scratch(name);
        let o = run_in("redundancy", &configs().join(format!("{name}.json")), &out, &[]);
        assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        let golden = manifest().join("tests/golden");
        assert_eq!(
            read(out.join("redundancy.csv")),
            read(golden.join(format!("{name}_redundancy.csv"))),
            "{name}"
        );
        assert_eq!(
            read(out.join("gap_report.json")),
            read(golden.join(format!("{name}_gap_report.json"))),
            "{name}"
        );
    }
    let out = scratch("bound");
    let o = run_in("bound", &configs().join("kt_bernoulli.json"), &out, &[]);
    assert!(o.status.success());
    assert_eq!(
        read(out.join("bound.csv")),
        read(manifest().join("tests/golden/kt_bernoulli_bound.csv"))
    );
}

#[test]
fn csv_schema() {
    let out = scratch("schema");
    run_in("redundancy", &configs().join("kt_bernoulli.json"), &out, &[]);
    let csv = read(out.join("redundancy.csv"));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("n,D_n,std_error,method,bound_total,gap"));
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 6);
        // 12 significant digits: one leading digit and 11 after the point.
        let mantissa = fields[1].split('e').next().unwrap();
        assert_eq!(mantissa.trim_start_matches('-').len(), 13, "{line}");
    }
}

#[test]
fn monte_carlo_output_is_deterministic_across_thread_counts() {
    let cfg = scratch("mc-config").join("mc.json");
    let text = read(configs().join("markov2.json"))
        .replace("\"count\": 7", "\"count\": 4")
        .replace("\"samples\": 10000", "\"samples\": 500");
    fs::write(&cfg, text).unwrap();
    let a = scratch("mc-a");
    let b = scratch("mc-b");
    let c = scratch("mc-c");
    assert!(run_in("redundancy", &cfg, &a, &["--threads", "1"])
        .status
        .code()
        .is_some());
    run_in("redundancy", &cfg, &b, &["--threads", "3"]);
    run_in("redundancy", &cfg, &c, &["--seed", "8"]);
    assert_eq!(read(a.join("redundancy.csv")), read(b.join("redundancy.csv")));
    assert_eq!(read(a.join("gap_report.json")), read(b.join("gap_report.json")));
    assert_ne!(read(a.join("redundancy.csv")), read(c.join("redundancy.csv")));
}

fn with_edit(name: &str, from: &str, to: &str) -> PathBuf {
    static NEXT: AtomicUsize = AtomicUsize::new(0);
    let path = scratch(&format!("edit-{}", NEXT.fetch_add(1, Ordering::Relaxed))).join(name);
    let text = read(configs().join(name));
    assert!(text.contains(from));
    fs::write(&path, text.replace(from, to)).unwrap();
    path
}

#[test]
fn configuration_errors_exit_with_1() {
    let out = scratch("bad");
    let two_points = with_edit("kt_bernoulli.json", "\"count\": 9", "\"count\": 2");
    let o = run_in("redundancy", &two_points, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least 3 points"));

    let typo = with_edit("kt_bernoulli.json", "\"seed\"", "\"sead\"");
    assert_eq!(run_in("redundancy", &typo, &out, &[]).status.code(), Some(1));

    let outside = with_edit("kt_bernoulli.json", "[0.5]", "[1.5]");
    assert_eq!(run_in("redundancy", &outside, &out, &[]).status.code(), Some(1));

    let missing = out.join("nope.json");
    assert_eq!(run_in("redundancy", &missing, &out, &[]).status.code(), Some(1));
}

#[test]
fn trend_failure_exits_with_2() {
    let out = scratch("trend");
    let strict = with_edit(
        "kt_bernoulli.json",
        "\"slope_max\": 0.55",
        "\"slope_max\": 0.55, \"require_monotone_tail\": true",
    );
    let o = run_in("redundancy", &strict, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nonincreasing"));
    // The series is still written.
    assert!(out.join("redundancy.csv").exists());

    let o = run_in("gap", &configs().join("kt_bernoulli.json"), &out, &[]);
    assert!(o.status.success());
    let printed: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((printed["slope"].as_f64().unwrap() - 0.5).abs() < 1e-3);
}

#[test]
fn compress_roundtrip() {
    let dir = scratch("codec");
    let input = dir.join("in.bin");
    let data: Vec<u8> = (0..600u32)
        .map(|i| if i % 7 == 0 { 0xff } else { (i % 3) as u8 })
        .collect();
    fs::write(&input, &data).unwrap();
    let cfg = configs().join("kt_bernoulli.json");
    let packed = dir.join("in.mxr");
    let back = dir.join("out.bin");
    let o = mixred(&[
        "compress",
        "--config",
        cfg.to_str().unwrap(),
        input.to_str().unwrap(),
        packed.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = String::from_utf8_lossy(&o.stdout);
    assert!(report.contains("payload_bits") && report.contains("model_log_loss_bits"));
    let o = mixred(&[
        "decompress",
        "--config",
        cfg.to_str().unwrap(),
        packed.to_str().unwrap(),
        back.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(&back).unwrap(), data);
    assert!(fs::read(&packed).unwrap().len() < data.len());

    // A different model is rejected by the hash check.
    let other = configs().join("flat_k4.json");
    let o = mixred(&[
        "decompress",
        "--config",
        other.to_str().unwrap(),
        packed.to_str().unwrap(),
        back.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));

    // Truncation is reported.
    let mut cut = fs::read(&packed).unwrap();
    cut.truncate(cut.len() - 3);
    fs::write(&packed, cut).unwrap();
    let o = mixred(&[
        "decompress",
        "--config",
        cfg.to_str().unwrap(),
        packed.to_str().unwrap(),
        back.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("decode error"));
}

#[test]
fn check_subcommand_passes() {
    let o = mixred(&["check"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().count() >= 6 && text.lines().all(|l| l.starts_with("PASS ")));
}

#[test]
fn counterexample_flags() {
    let out = scratch("ce");
    let quick = |name: &str| {
        let text = read(configs().join(name))
            .replace("[4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14]", "[4, 5, 6, 7, 8]")
            .replace("\"quadrature_nodes\": 4096", "\"quadrature_nodes\": 256");
        let path = out.join(name);
        fs::write(&path, text).unwrap();
        let o = run_in("counterexample", &path, &out, &[]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8_lossy(&o.stdout).trim().to_string()
    };
    assert_eq!(quick("counterexample_geometric.json"), "diverging");
    assert_eq!(quick("counterexample_zero.json"), "converging");
    let csv = read(out.join("counterexample.csv"));
    assert!(csv.starts_with("n,D_n,std_error,method,excess\n"));
    let json: serde_json::Value = serde_json::from_str(&read(out.join("counterexample.json"))).unwrap();
    assert_eq!(json["flag"], "converging");
}
