use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cnf_core::io::ResultFile;
use cnf_core::model::derive_selection;
use serde_json::Value;
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn cnf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cnf"))
        .args(args)
        .env_remove("CNF_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn reference() -> String {
    fixture("reference.json").display().to_string()
}

#[test]
fn solve_reference_instance() {
    let o = cnf(&["solve", &reference()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let sum = v["selection"]["sum_rate"].as_f64().unwrap();
    assert!((sum - 2.5825).abs() <= 4e-4, "sum {sum}");
    let mut relays: Vec<u64> = v["selection"]["relays"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
    relays.sort();
    assert_eq!(relays, vec![2, 3, 4, 5]);
    assert!(v.get("frontier").is_none_or(Value::is_null));
}

#[test]
fn solve_emits_three_frontier_points() {
    let o = cnf(&["solve", &reference(), "--emit-frontier"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["frontier"].as_array().unwrap().len(), 3);
}

#[test]
fn result_file_round_trips() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("result.json");
    let o = cnf(&["solve", &reference(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(&out).unwrap();
    let file = ResultFile::from_json(&text).unwrap();
    let sel = file.selection.to_selection().unwrap();
    let again = derive_selection(sel.entries.clone()).unwrap();
    assert_eq!(sel, again);
    assert_eq!(ResultFile::from_json(&file.to_json()).unwrap(), file);
}

#[test]
fn fewer_relays_than_sources_is_rejected() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "bad.json", r#"{"L": 3, "M": 2, "P": 10, "H": [[1, 0.5], [0.2, 1], [0.3, -1]]}"#);
    let o = cnf(&["solve", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("M ≥ L violated"), "{}", stderr(&o));
}

#[test]
fn malformed_input_exits_one() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "bad.json", "{ not json");
    assert_eq!(cnf(&["solve", p.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(cnf(&["solve", "/nonexistent/instance.json"]).status.code(), Some(1));
    assert_eq!(cnf(&["solve", &reference(), "--policy", "bogus"]).status.code(), Some(1));
    assert_eq!(cnf(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(cnf(&["--help"]).status.code(), Some(0));
}

#[test]
fn unreachable_floor_exits_two() {
    let o = cnf(&["solve", &reference(), "--vmin", "1000"]);
    assert_eq!(o.status.code(), Some(2));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v.is_object());
}

#[test]
fn paper_example_passes_and_negative_control_fails() {
    let o = cnf(&["paper-example"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    let gamma1 = text.lines().find(|l| l.starts_with("Gamma_1")).unwrap();
    assert!(gamma1.contains("0.5984 0.5107 0.4825 0.4588 0.4367"), "{gamma1}");
    assert!(gamma1.ends_with("PASS"));
    let counters = text.lines().find(|l| l.starts_with("counters")).unwrap();
    assert!(counters.contains("formations 3"), "{counters}");

    let o = cnf(&["paper-example", "--perturb"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).lines().any(|l| l.ends_with("FAIL")));
}

#[test]
fn frontier_command_formats() {
    let o = cnf(&["frontier", &reference(), "--csv"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().filter(|l| !l.is_empty()).collect();
    assert_eq!(rows.len(), 4);
    let o = cnf(&["frontier", &reference(), "--json"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["frontier"].as_array().map(Vec::len), Some(3));
}

#[test]
fn core_check_reference_and_adversarial() {
    let o = cnf(&["core-check", &reference()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("InCore"));

    let o = cnf(&["core-check", &reference(), "--adversarial"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("Deviation {"));
}

#[test]
fn core_check_single_block_when_relays_equal_sources() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "square.json", r#"{"L": 2, "M": 2, "P": 10, "H": [[1.2, -0.3], [0.4, 0.9]]}"#);
    let o = cnf(&["core-check", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    let blocks = text.lines().filter(|l| l.starts_with("  {")).count();
    assert_eq!(blocks, 1, "{text}");
}

fn sweep_csv(dir: &TempDir, config: &Path, threads: Option<&str>) -> String {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cnf"));
    cmd.args(["sweep", config.to_str().unwrap(), "--csv"]);
    match threads {
        Some(n) => cmd.env("CNF_THREADS", n),
        None => cmd.env_remove("CNF_THREADS"),
    };
    let o = cmd.current_dir(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    stdout(&o)
}

#[test]
fn sweep_shape_and_determinism() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "fig.json",
        r#"{"L": 4, "M_list": [4, 5, 6, 7], "snr_db_list": [10, 20], "trials": 40, "seed": 3}"#,
    );
    let a = sweep_csv(&dir, &cfg, None);
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(
        lines[0],
        "M,snr_db,avg_sum_proposed,avg_sum_baseline,avg_min,avg_tu,avg_cd_profit,avg_relay_profit,outage_frac,trials"
    );
    assert_eq!(lines.len(), 1 + 4 * 2);
    for threads in ["1", "3", "8"] {
        assert_eq!(sweep_csv(&dir, &cfg, Some(threads)), a);
    }
}

#[test]
fn sweep_writes_both_files() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = cnf(&[
        "sweep",
        fixture("sweep_small.json").to_str().unwrap(),
        "--trials",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let json: Value = serde_json::from_str(&fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(json["points"].as_array().unwrap().len(), 6);
    assert_eq!(fs::read_to_string(out.join("sweep.csv")).unwrap().lines().count(), 7);
}

#[test]
fn sweep_with_fixed_channel_matches_solve() {
    let dir = TempDir::new().unwrap();
    let inst: Value = serde_json::from_str(&fs::read_to_string(fixture("reference.json")).unwrap()).unwrap();
    let cfg = serde_json::json!({
        "L": 4,
        "M_list": [5],
        "snr_db_list": [10],
        "trials": 1,
        "seed": 0,
        "V": inst["V"],
        "H": inst["H"],
    });
    let p = write(&dir, "fixed.json", &cfg.to_string());
    let csv = sweep_csv(&dir, &p, None);
    let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();

    let solved: Value = serde_json::from_str(&stdout(&cnf(&["solve", &reference()]))).unwrap();
    let sum = solved["selection"]["sum_rate"].as_f64().unwrap();
    let step1_min = solved["step1"]["min_rate"].as_f64().unwrap();
    assert!((row[2] - sum).abs() < 1e-9, "{} vs {sum}", row[2]);
    assert!((row[3] - 4.0 * step1_min).abs() < 1e-9);
    assert!((row[2] - 2.5825).abs() <= 4e-4);
    assert!((row[3] - 2.3936).abs() <= 4e-4);
}
