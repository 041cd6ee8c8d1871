use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gazelab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn synth(dir: &Path, scenario: &str, seed: u64) -> PathBuf {
    let out = dir.join(format!("{scenario}-{seed}"));
    let o = run(&["synth", scenario, "--seed", &seed.to_string(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn analyze(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let p = |f: &str| data.join(f).to_str().unwrap().to_string();
    let mut args = vec![
        "analyze".to_string(),
        "--gaze".into(),
        p("gaze.csv"),
        "--flight".into(),
        p("flight.csv"),
        "--aoi".into(),
        p("aoi.json"),
        "--segments".into(),
        p("segments.json"),
        "--out".into(),
        out.to_str().unwrap().into(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    bin().args(&args).output().unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn synth_is_deterministic_per_seed() {
    let t = tempfile::tempdir().unwrap();
    let a = synth(t.path(), "nominal", 7);
    let b = t.path().join("again");
    assert!(run(&["synth", "nominal", "--seed", "7", "--out", b.to_str().unwrap()]).status.success());
    for f in ["gaze.csv", "flight.csv", "segments.json", "truth.json", "aoi.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = synth(t.path(), "nominal", 8);
    assert_ne!(std::fs::read(a.join("gaze.csv")).unwrap(), std::fs::read(c.join("gaze.csv")).unwrap());
}

#[test]
fn unknown_scenario_lists_valid_names() {
    let t = tempfile::tempdir().unwrap();
    let o = run(&["synth", "bogus", "--out", t.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    for name in ["nominal", "stall", "lowvis"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn stall_scenario_climbs_to_six_thousand_feet() {
    let t = tempfile::tempdir().unwrap();
    let d = synth(t.path(), "stall", 1);
    let segs: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("segments.json")).unwrap()).unwrap();
    let targets: Vec<f64> = segs
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|s| s["targets"]["altitude_ft"].as_f64())
        .collect();
    assert!(targets.contains(&6000.0), "{targets:?}");
}

#[test]
fn missing_aoi_is_a_usage_error() {
    let o = run(&["analyze", "--gaze", "g", "--flight", "f", "--segments", "s", "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--aoi"));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn parse_errors_name_file_and_line() {
    let t = tempfile::tempdir().unwrap();
    let d = synth(t.path(), "nominal", 2);
    let gaze = std::fs::read_to_string(d.join("gaze.csv")).unwrap();
    let mut lines: Vec<&str> = gaze.lines().collect();
    lines[3] = "oops";
    std::fs::write(d.join("gaze.csv"), lines.join("\n")).unwrap();
    let o = analyze(&d, &t.path().join("r"), &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("gaze.csv") && err.contains("line 4"), "{err}");
}

#[test]
fn analyze_writes_reports_that_sum_to_one_hundred_and_are_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let d = synth(t.path(), "nominal", 5);
    let r1 = t.path().join("r1");
    let r2 = t.path().join("r2");
    for r in [&r1, &r2] {
        let o = analyze(&d, r, &["--compare", "takeoff:level1"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["pdt.csv", "bands.csv", "perf.csv", "stats.csv", "report.txt"] {
        assert!(r1.join(f).exists(), "{f}");
    }
    assert!(r1.join("fixmap_OTW.csv").exists() && r1.join("fixmap_OTW.pgm").exists());
    for entry in std::fs::read_dir(&r1).unwrap() {
        let name = entry.unwrap().file_name();
        let name = name.to_str().unwrap();
        assert_eq!(
            std::fs::read(r1.join(name)).unwrap(),
            std::fs::read(r2.join(name)).unwrap(),
            "{name}"
        );
    }

    let mut totals = std::collections::BTreeMap::<String, f64>::new();
    for row in csv_rows(&r1.join("pdt.csv")) {
        *totals.entry(row[1].clone()).or_default() += row[3].parse::<f64>().unwrap();
    }
    assert_eq!(totals.len(), 4);
    for (seg, total) in totals {
        assert!((total - 100.0).abs() < 1e-6, "{seg}: {total}");
    }

    let report = std::fs::read_to_string(r1.join("report.txt")).unwrap();
    for line in [
        "dispersion_deg = 1",
        "min_fixation_ms = 100",
        "highpass_order = 4",
        "welch_segment = 256",
        "quality_floor = 0.2",
    ] {
        assert!(report.contains(line), "{line}");
    }
    assert!(report.contains("sha256="));
    assert!(std::fs::read_to_string(r1.join("stats.csv")).unwrap().contains("ttest:takeoff-level1"));
}

#[test]
fn segment_flag_restricts_outputs() {
    let t = tempfile::tempdir().unwrap();
    let d = synth(t.path(), "nominal", 6);
    let r = t.path().join("r");
    let o = analyze(&d, &r, &["--segment", "level1", "--dispersion-deg", "1.5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&r.join("pdt.csv"));
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|row| row[1] == "level1"));
    let report = std::fs::read_to_string(r.join("report.txt")).unwrap();
    assert!(report.contains("segment = level1") && report.contains("dispersion_deg = 1.5"));

    let o = analyze(&d, &t.path().join("r2"), &["--segment", "nope"]);
    assert_eq!(o.status.code(), Some(1));
}

fn http(addr: &str, method: &str, path: &str) -> String {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(s, "{method} {path} HTTP/1.1\r\nHost: x\r\nContent-Length: 0\r\nConnection: close\r\n\r\n").unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).unwrap();
    out
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn wait_up(addr: &str) {
    let t = Instant::now();
    while TcpStream::connect(addr).is_err() {
        assert!(t.elapsed() < Duration::from_secs(10), "service did not come up");
        std::thread::sleep(Duration::from_millis(20));
    }
}

#[test]
fn serve_records_and_interrupt_writes_footer() {
    let t = tempfile::tempdir().unwrap();
    let http_addr = format!("127.0.0.1:{}", free_port());
    let ingest_addr = format!("127.0.0.1:{}", free_port());
    let mut child = bin()
        .args(["serve", "--ingest", &ingest_addr, "--http", &http_addr, "--record-dir"])
        .arg(t.path())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    wait_up(&http_addr);
    assert!(http(&http_addr, "POST", "/start").starts_with("HTTP/1.1 200"));
    let mut p = TcpStream::connect(&ingest_addr).unwrap();
    for i in 0..30u64 {
        writeln!(
            p,
            r#"{{"t_ms":{},"ox":0,"oy":0,"oz":0,"dx":0,"dy":0.3,"dz":1,"pupil_mm":4.0,"eyelid":1.0,"q":1.0}}"#,
            i * 25
        )
        .unwrap();
    }
    let t0 = Instant::now();
    while !http(&http_addr, "GET", "/status").contains("\"received\":30") {
        assert!(t0.elapsed() < Duration::from_secs(5));
        std::thread::sleep(Duration::from_millis(20));
    }
    let pid = child.id().to_string();
    assert!(Command::new("kill").args(["-INT", &pid]).status().unwrap().success());
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(0));

    let session = std::fs::read_dir(t.path()).unwrap().next().unwrap().unwrap().path();
    let text = std::fs::read_to_string(session.join("gaze.csv")).unwrap();
    assert_eq!(text.lines().count(), 32);
    assert_eq!(text.lines().last().unwrap(), "# received=30 recorded=30 dropped=0");
}

#[test]
fn replay_paces_by_speed_and_exits() {
    let t = tempfile::tempdir().unwrap();
    let d = synth(t.path(), "nominal", 4);
    // Keep the first 4 s of the log.
    let text = std::fs::read_to_string(d.join("gaze.csv")).unwrap();
    let mut lines = text.lines();
    let mut short = vec![lines.next().unwrap().to_string()];
    short.extend(lines.take_while(|l| l.split(',').next().unwrap().parse::<u64>().unwrap() <= 4000).map(String::from));
    std::fs::write(d.join("gaze.csv"), short.join("\n") + "\n").unwrap();

    let http_addr = format!("127.0.0.1:{}", free_port());
    let t0 = Instant::now();
    let child = bin()
        .args(["replay", d.to_str().unwrap(), "--speed", "4", "--http", &http_addr])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let out = child.wait_with_output().unwrap();
    let took = t0.elapsed();
    assert!(out.status.success());
    assert!(took >= Duration::from_millis(950) && took < Duration::from_millis(2500), "{took:?}");
    let err = BufReader::new(&out.stderr[..]).lines().map(Result::unwrap).collect::<Vec<_>>().join("\n");
    assert!(err.contains(&format!("replayed {} samples", short.len() - 1)), "{err}");

    assert_eq!(run(&["replay", t.path().join("missing").to_str().unwrap()]).status.code(), Some(1));
}
