use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn runscan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_runscan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn dist_prints_table_and_critical_count() {
    let o = runscan(&["dist", "--h", "0.3", "-T", "5000", "--alpha", "0.05"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().last(), Some("c*=491"));

    let o = runscan(&["dist", "--h", "0.5", "-T", "3"]);
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[..4], ["x,pmf,tail", "0,0.625,1", "1,0.25,0.375", "2,0.125,0.125"]);

    let o = runscan(&["dist", "--h", "0", "-T", "10"]);
    let text = stdout(&o);
    assert!(text.lines().nth(1).unwrap().starts_with("0,1,"));
    assert!(text.lines().skip(2).filter(|l| !l.starts_with("c*")).all(|l| l.split(',').nth(1) == Some("0")));
}

#[test]
fn dist_curve_is_monotone() {
    let o = runscan(&["dist", "--curve", "--lens", "500,2000"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut last: Option<(usize, usize)> = None;
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (len, c): (usize, usize) = (f[1].parse().unwrap(), f[2].parse().unwrap());
        if let Some((prev_len, prev_c)) = last {
            if prev_len == len {
                assert!(c >= prev_c, "{line}");
            }
        }
        last = Some((len, c));
    }
}

#[test]
fn validation_failures_exit_2() {
    assert_eq!(runscan(&["dist", "--h", "1.5", "-T", "3"]).status.code(), Some(2));
    assert_eq!(runscan(&["dist", "--h", "0.5", "-T", "3", "--alpha", "0"]).status.code(), Some(2));
    assert_eq!(runscan(&["dist", "--bogus"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "height,timestamp,miner\n2,10,a\n1,20,b\n").unwrap();
    let out = dir.path().join("out");
    let o = runscan(&["detect", "--input", path(&bad), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    let good = fixture("honest_blocks.csv");
    for fdr in ["0", "1", "1.5"] {
        let o = runscan(&["detect", "--input", path(&good), "--out", path(&out), "--fdr", fdr]);
        assert_eq!(o.status.code(), Some(2), "fdr {fdr}");
    }
    let o = runscan(&["cluster", "--coin", "eth", "--input", path(&fixture("tx6.csv")), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_input_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = runscan(&[
        "detect",
        "--input",
        path(&dir.path().join("nope.csv")),
        "--out",
        path(&dir.path().join("out")),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

fn count_flags(results: &Path, miner: Option<&str>) -> (usize, usize) {
    let text = fs::read_to_string(results).unwrap();
    let rows: Vec<&str> = text
        .lines()
        .skip(1)
        .filter(|l| miner.is_none_or(|m| l.starts_with(&format!("{m},"))))
        .collect();
    let flagged = rows.iter().filter(|l| l.ends_with(",true")).count();
    (flagged, rows.len())
}

#[test]
fn detect_on_bundled_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let honest = dir.path().join("honest");
    let o = runscan(&[
        "detect",
        "--input",
        path(&fixture("honest_blocks.csv")),
        "--policy",
        "count:2000",
        "--out",
        path(&honest),
    ]);
    assert!(o.status.success());
    let (flagged, tested) = count_flags(&honest.join("miner_results.csv"), None);
    assert_eq!(tested, 60);
    assert!(flagged <= 1, "{flagged} honest flags");
    assert!(stdout(&o).contains("window,tested,flagged"));
    assert!(stdout(&o).contains("criterion,miners,quantile_share,fraction_share"));

    let selfish = dir.path().join("selfish");
    let o = runscan(&[
        "detect",
        "--input",
        path(&fixture("selfish_blocks.csv")),
        "--policy",
        "count:2000",
        "--out",
        path(&selfish),
        "--quiet",
    ]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let (flagged, windows) = count_flags(&selfish.join("miner_results.csv"), Some("selfish"));
    assert_eq!(windows, 3);
    assert!(flagged * 2 > windows);
}

#[test]
fn empty_block_file_gives_header_only_store() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "height,timestamp,miner\n").unwrap();
    let out = dir.path().join("out");
    let o = runscan(&["cartel", "--input", path(&empty), "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("manifest.json").exists());
    let results = fs::read_to_string(out.join("miner_results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1);

    let report = dir.path().join("report");
    let o = runscan(&["report", "--input", path(&out), "--out", path(&report)]);
    assert!(o.status.success());
    for name in runscan_cli::REPORT_FILES {
        let text = fs::read_to_string(report.join(name)).unwrap();
        assert_eq!(text.lines().count(), 1, "{name}");
    }
}

#[test]
fn cluster_fixture_matches_hand_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cl");
    let o = runscan(&[
        "cluster",
        "--input",
        path(&fixture("tx6.csv")),
        "--blocks",
        path(&fixture("pool_blocks.csv")),
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read_to_string(out.join("tags.csv")).unwrap(),
        fs::read_to_string(fixture("tx6_expected_tags.csv")).unwrap()
    );
    let share = fs::read_to_string(out.join("unknown_share.csv")).unwrap();
    assert!(share.contains("before,7,12,"));
    assert!(share.contains("after,1,12,"));
    assert!(stdout(&o).contains("merges H1=2 H2=1 Hp=1"));
}

#[test]
fn simulate_then_detect_closed_loop() {
    let dir = tempfile::tempdir().unwrap();
    let blocks = dir.path().join("blocks.jsonl");
    let o = runscan(&[
        "simulate", "--mode", "selfish", "--blocks", "5000", "--windows", "3", "--seed", "4",
        "--format", "jsonl", "--out", path(&blocks),
    ]);
    assert!(o.status.success());
    let out = dir.path().join("det");
    let o = runscan(&[
        "detect", "--input", path(&blocks), "--format", "jsonl", "--policy", "count:5000",
        "--family", "global", "--out", path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (flagged, windows) = count_flags(&out.join("miner_results.csv"), Some("selfish"));
    assert_eq!((flagged, windows), (3, 3));
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"family\": \"global\""));
}

#[test]
fn simulate_to_stdout_is_a_block_file() {
    let o = runscan(&["simulate", "--blocks", "10", "--honest", "3", "--seed", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("height,timestamp,miner\n"));
    assert_eq!(text.lines().count(), 11);
    assert_eq!(text, stdout(&runscan(&["simulate", "--blocks", "10", "--honest", "3", "--seed", "1"])));
}
