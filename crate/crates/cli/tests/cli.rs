use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn amapf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amapf"))
        .args(args)
        .env("AMAPF_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const WALLED: &str = r#"{"width":3,"height":3,"obstacles":[[1,0],[1,1],[1,2]],"starts":[[0,0]],"goals":[[2,2]]}"#;

// Two robots that must pass each other in an open 3x3 room.
const ROOM: &str = r#"{"width":3,"height":3,"obstacles":[],"starts":[[0,1],[2,1]],"goals":[[1,1],[2,2]]}"#;

#[test]
fn trivial_solve_exits_zero() {
    let o = amapf(&["solve", "--random", "4", "4", "0", "1", "--seed", "9"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["status"], "solved");
    assert_eq!(v["paths"].as_array().unwrap().len(), 1);
}

#[test]
fn walled_goal_exits_infeasible() {
    let dir = TempDir::new().unwrap();
    let inst = write(&dir, "walled.json", WALLED);
    let o = amapf(&["solve", "--instance", &inst]);
    assert_eq!(code(&o), 2);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["status"], "infeasible");
    assert!(v["cost"].is_null());
}

#[test]
fn bad_input_exits_one() {
    let dir = TempDir::new().unwrap();
    let inst = write(&dir, "broken.json", "{\"width\":3");
    let o = amapf(&["solve", "--instance", &inst]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("broken.json"));

    let o = amapf(&["solve", "--random", "8", "8", "0.2", "3", "--timeout", "0"]);
    assert_ne!(code(&o), 0);
}

#[test]
fn variants_report_equal_cost() {
    let mut costs = Vec::new();
    for v in ["h0m0p0", "h1m1p1", "h1m0p1", "h0m1p0"] {
        let o = amapf(&["solve", "--random", "10", "10", "0.2", "5", "--seed", "4", "--variant", v]);
        assert_eq!(code(&o), 0);
        let r: Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(r["variant"], v);
        costs.push(r["cost"].as_u64().unwrap());
    }
    assert!(costs.windows(2).all(|w| w[0] == w[1]), "{costs:?}");
}

#[test]
fn dump_matrix_goes_to_stderr() {
    let o = amapf(&["solve", "--random", "8", "8", "0.2", "3", "--seed", "2", "--dump-matrix"]);
    assert_eq!(code(&o), 0);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("R1") && err.contains("G3"), "{err}");
    assert!(err.contains("first assignment"));
    serde_json::from_str::<Value>(&stdout(&o)).unwrap();
}

#[test]
fn bench_writes_one_row_per_run() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("runs.csv");
    let o = amapf(&[
        "bench", "--random", "8", "8", "20", "3", "--seed", "7", "--instances", "1", "--variant", "h0m0p0",
        "--variant", "h1m1p1", "--out", p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rd = csv::Reader::from_path(&out).unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    let h = rd.headers().unwrap().clone();
    let col = |name: &str| h.iter().position(|c| c == name).unwrap();
    assert_eq!(rows[0][col("cost")], rows[1][col("cost")]);
    assert_eq!(rows[0][col("status")], *"solved");
}

#[test]
fn repeats_agree_on_cost() {
    let o = amapf(&[
        "bench", "--random", "10", "10", "0.2", "5", "--seed", "3", "--instances", "1", "--variant", "h1m1p1",
        "--repeat", "3", "--format", "json",
    ]);
    assert_eq!(code(&o), 0);
    let rows: Vec<Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 3);
    let mut repeats: Vec<u64> = rows.iter().map(|r| r["repeat"].as_u64().unwrap()).collect();
    repeats.sort();
    assert_eq!(repeats, [0, 1, 2]);
    assert!(rows.iter().all(|r| r["cost"] == rows[0]["cost"] && r["nodes_expanded"] == rows[0]["nodes_expanded"]));
}

#[test]
fn bench_preset_and_presets_file() {
    let dir = TempDir::new().unwrap();
    let presets = write(
        &dir,
        "p.toml",
        "[tiny]\nwidth = 6\nheight = 6\ndensity = 0.1\nrobots = 2\ninstances = 2\nvariants = [\"h1m1p1\"]\n",
    );
    let o = amapf(&["bench", "--preset", "tiny", "--presets", &presets]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 3);

    let o = amapf(&["bench", "--preset", "missing", "--presets", &presets]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("tiny"));
}

#[test]
fn bad_thread_count_is_rejected() {
    let o = Command::new(env!("CARGO_BIN_EXE_amapf"))
        .args(["bench", "--random", "6", "6", "0", "2", "--variant", "h0m0p0"])
        .env("AMAPF_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn oracle_check_passes() {
    let o = amapf(&["oracle-check", "--count", "1", "--seed", "11"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let line: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(line["pass"], true);
    assert_eq!(line["costs"].as_array().unwrap().len(), 8);
}

#[test]
fn oracle_check_reports_injected_fault() {
    let o = amapf(&["oracle-check", "--count", "1", "--seed", "11", "--inject-fault"]);
    assert_ne!(code(&o), 0);
    let line: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(line["pass"], false);
    assert!(line["problems"][0].as_str().unwrap().contains("optimum"));
}

fn solved_room(dir: &TempDir) -> (String, Value) {
    let inst = write(dir, "room.json", ROOM);
    let o = amapf(&["solve", "--instance", &inst]);
    assert_eq!(code(&o), 0);
    (inst, serde_json::from_str(&stdout(&o)).unwrap())
}

fn validate(dir: &TempDir, inst: &str, sol: &Value) -> (i32, Value) {
    let path = write(dir, "sol.json", &sol.to_string());
    let o = amapf(&["validate", "--instance", inst, "--solution", &path]);
    (code(&o), serde_json::from_str(&stdout(&o)).unwrap())
}

#[test]
fn solver_output_validates() {
    let dir = TempDir::new().unwrap();
    let (inst, sol) = solved_room(&dir);
    let (c, r) = validate(&dir, &inst, &sol);
    assert_eq!(c, 0, "{r}");
    assert_eq!(r["pass"], true);
}

#[test]
fn swapped_positions_are_an_edge_conflict() {
    let dir = TempDir::new().unwrap();
    let inst = write(
        &dir,
        "line.json",
        r#"{"width":4,"height":1,"obstacles":[],"starts":[[0,0],[3,0]],"goals":[[0,0],[3,0]]}"#,
    );
    // Robots step toward each other, swap cells between t=1 and t=2, and walk back.
    let sol = serde_json::json!({
        "cost": 6,
        "assignment": [{"robot": 0, "goal": 0}, {"robot": 1, "goal": 1}],
        "paths": [[[0,0],[1,0],[2,0],[1,0],[0,0]], [[3,0],[2,0],[1,0],[2,0],[3,0]]],
        "variant": "h1m1p1",
        "status": "solved"
    });
    let (c, r) = validate(&dir, &inst, &sol);
    assert_eq!(c, 4);
    let v: Vec<&str> = r["violations"].as_array().unwrap().iter().map(|s| s.as_str().unwrap()).collect();
    assert!(v.iter().any(|s| s.contains("edge") && s.contains("t=2")), "{v:?}");
}

#[test]
fn wrong_cost_is_reported() {
    let dir = TempDir::new().unwrap();
    let (inst, mut sol) = solved_room(&dir);
    sol["cost"] = Value::from(sol["cost"].as_u64().unwrap() + 1);
    let (c, r) = validate(&dir, &inst, &sol);
    assert_eq!(c, 4);
    assert!(r["violations"][0].as_str().unwrap().contains("cost"), "{r}");
}

fn bench_row(variant: &str, status: &str, cost: &str, ms: &str) -> String {
    format!("inst-a,1,3,{variant},0,{status},{cost},{ms},1000,1,1,0,0,1,0,0,3,0,3\n")
}

const HEADER: &str = "instance,seed,robots,variant,repeat,status,cost,wall_time_ms,timeout_ms,nodes_expanded,roots_created,conflicts_found,conflicts_registered,assignments_computed,assignments_postponed,assignments_revoked,astar_calls,cache_hits,actual_entries\n";

#[test]
fn plotdata_pairs_runs_and_clamps_timeouts() {
    let dir = TempDir::new().unwrap();
    let csv = HEADER.to_string() + &bench_row("h0m0p0", "timeout", "", "1003.5") + &bench_row("h1m1p1", "solved", "9", "2.5");
    let input = write(&dir, "runs.csv", &csv);
    let out = dir.path().join("plots");
    let o = amapf(&["plotdata", "--input", &input, "--out-dir", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let mut rd = csv::Reader::from_path(out.join("scatter_h1m1p1.csv")).unwrap();
    let h = rd.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    let col = |name: &str| h.iter().position(|c| c == name).unwrap();
    assert_eq!(rows[0][col("baseline_ms")].parse::<f64>().unwrap(), 1000.0);
    assert_eq!(&rows[0][col("baseline_timeout")], "true");
    assert_eq!(rows[0][col("variant_ms")].parse::<f64>().unwrap(), 2.5);
    assert!(out.join("runtime_h0m0p0.csv").exists());
    assert!(!out.join("scatter_h0m0p0.csv").exists());
}

#[test]
fn plotdata_on_empty_csv_writes_nothing() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "empty.csv", HEADER);
    let out = dir.path().join("plots");
    let o = amapf(&["plotdata", "--input", &input, "--out-dir", p(&out)]);
    assert_eq!(code(&o), 0);
    assert!(!out.exists());
}

#[test]
fn plotdata_rejects_foreign_csv() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "other.csv", "a,b\n1,2\n");
    let o = amapf(&["plotdata", "--input", &input, "--out-dir", p(&dir.path().join("x"))]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bench schema"));
}
