//! End-to-end runs of the `coopdrive` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use coopdrive::model::{IntersectionModel, LaneId};
use serde_json::Value;

fn coopdrive(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coopdrive"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) {
    let o = coopdrive(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn read_csv(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(Result::unwrap).collect()
}

fn header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(String::from).collect()
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let idx = header(path).iter().position(|h| h == name).unwrap();
    read_csv(path).iter().map(|r| r[idx].to_string()).collect()
}

fn float_column(path: &Path, name: &str) -> Vec<f64> {
    column(path, name).iter().map(|s| s.parse().unwrap()).collect()
}

fn write_config(dir: &Path, value: Value) -> String {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

/// Pairwise delay of two vehicles at `v_max` on single-lane routes, best of both orders.
fn two_vehicle_optimum(d_east: f64, d_south: f64) -> f64 {
    let model = IntersectionModel::single_lane();
    let east = model.route_for(LaneId(1)).unwrap();
    let south = model.route_for(LaneId(0)).unwrap();
    let (te, ts) = (d_east / 15.0, d_south / 15.0);
    let follow = |lead_t: f64, lead: &coopdrive::model::Route, t: f64, route: &coopdrive::model::Route| {
        let mut entry = t;
        for (z, off) in route.iter() {
            if let Some(lo) = lead.offset_of(z) {
                entry = entry.max(lead_t + lo + 1.5 - off);
            }
        }
        entry - t
    };
    follow(te, east, ts, south).min(follow(ts, south, te, east))
}

#[test]
fn two_vehicle_search_reports_exact_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        serde_json::json!({
            "geometry": {"lanes_per_leg": 1},
            "scenario": {"vehicles": [
                {"id": 1, "lane": 1, "distance": 100.0},
                {"id": 2, "lane": 0, "distance": 103.125}
            ]}
        }),
    );
    ok(dir.path(), &["search", "--config", &cfg]);
    let m = dir.path().join("metrics.csv");
    let expected = two_vehicle_optimum(100.0, 103.125);
    assert!((expected - 1.0).abs() < 1e-9, "oracle {expected}");
    let j_mcts = float_column(&m, "j_mcts")[0];
    let j_opt = float_column(&m, "j_opt")[0];
    assert!((j_mcts - 1.0).abs() < 1e-9 && (j_opt - 1.0).abs() < 1e-9);
    assert_eq!(column(&m, "mcts_order")[0], "1-2");
}

#[test]
fn heuristic_rollouts_beat_random_at_equal_budget() {
    let dir = tempfile::tempdir().unwrap();
    let (h, r) = (dir.path().join("h"), dir.path().join("r"));
    let common = ["search", "--set", "scenario.random.vehicles=50", "--budget-nodes", "1000"];
    ok(&h, &[&common[..], &["--rollout", "heuristic"]].concat());
    ok(&r, &[&common[..], &["--rollout", "random"]].concat());
    let jh = float_column(&h.join("metrics.csv"), "j_mcts")[0];
    let jr = float_column(&r.join("metrics.csv"), "j_mcts")[0];
    assert!(jh <= jr, "heuristic {jh} vs random {jr}");
}

#[test]
fn iteration_log_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["search", "--budget-nodes", "10000"]);
    let best = float_column(&dir.path().join("iterations.csv"), "best_delay");
    assert!(best.len() >= 1000);
    assert!(best.windows(2).all(|w| w[1] <= w[0]));
    assert!(!header(&dir.path().join("iterations.csv")).contains(&"elapsed_s".to_string()));
}

#[test]
fn simulate_writes_one_row_per_rate_and_strategy() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "simulate",
            "--set",
            "simulation.horizon=60",
            "--set",
            "simulation.arrival_rates=[150,300,450]",
            "--strategy",
            "fifo,mcts",
            "--budget-nodes",
            "200",
        ],
    );
    let m = dir.path().join("metrics.csv");
    assert_eq!(read_csv(&m).len(), 6);
    assert_eq!(column(&m, "strategy"), ["fifo", "mcts", "fifo", "mcts", "fifo", "mcts"]);
    assert!(float_column(&m, "eta").iter().step_by(2).all(|&e| e == 0.0));
}

#[test]
fn zero_rate_simulation_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["simulate", "--set", "simulation.horizon=30", "--set", "simulation.arrival_rates=[0]"],
    );
    let m = dir.path().join("metrics.csv");
    assert!(float_column(&m, "throughput").iter().all(|&x| x == 0.0));
    assert!(float_column(&m, "average_delay").iter().all(|&x| x == 0.0));
}

#[test]
fn simulate_traces_go_to_per_run_directories() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "simulate",
            "--set",
            "simulation.horizon=30",
            "--set",
            "simulation.arrival_rates=[300]",
            "--set",
            "simulation.write_traces=true",
            "--strategy",
            "fifo",
        ],
    );
    let trace = dir.path().join("runs/rate-300_seed-0_fifo/trace.csv");
    assert!(header(&trace).contains(&"realized_entry".to_string()));
}

#[test]
fn enumerate_twelve_vehicles_ranks_fifo_and_mcts() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "enumerate",
            "--set",
            "geometry.lanes_per_leg=1",
            "--set",
            "scenario.random.per_lane=3",
            "--set",
            "enumeration.write_all=true",
        ],
    );
    assert_eq!(read_csv(&dir.path().join("delays.csv")).len(), 369_600);
    let hist = dir.path().join("histogram.csv");
    assert_eq!(read_csv(&hist).len(), 200);
    assert_eq!(float_column(&hist, "count").iter().sum::<f64>(), 369_600.0);
    let m = dir.path().join("metrics.csv");
    assert_eq!(column(&m, "label"), ["optimum", "fifo", "mcts"]);
    assert_eq!(float_column(&m, "rank")[0], 1.0);
    assert!(float_column(&m, "total").iter().all(|&t| t == 369_600.0));
}

#[test]
fn enumerate_one_vehicle_gives_single_bin() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["enumerate", "--set", "scenario.random.vehicles=1"]);
    let hist = dir.path().join("histogram.csv");
    assert_eq!(read_csv(&hist).len(), 1);
    assert_eq!(float_column(&hist, "lower"), [0.0]);
    assert_eq!(float_column(&hist, "count"), [1.0]);
}

#[test]
fn enumerate_refuses_twenty_vehicles() {
    let dir = tempfile::tempdir().unwrap();
    let o = coopdrive(
        dir.path(),
        &["enumerate", "--set", "geometry.lanes_per_leg=1", "--set", "scenario.random.per_lane=5"],
    );
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("10^10.07") && err.contains("enumerate"), "{err}");
    assert!(!dir.path().join("histogram.csv").exists());
}

#[test]
fn sweep_grid_improves_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["sweep", "--set", "sweep.omega=[0,0.5,1]", "--set", "sweep.c=[0,0.5,1]", "--set", "sweep.seeds=[0,1,2]"],
    );
    let m = dir.path().join("metrics.csv");
    assert_eq!(read_csv(&m).len(), 9);
    assert!(float_column(&m, "mean_eta").iter().all(|&e| e > 0.0));
}

#[test]
fn single_point_sweep_matches_search() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep");
    ok(
        &sweep,
        &["sweep", "--set", "sweep.omega=[0.85]", "--set", "sweep.c=[0.05]", "--set", "sweep.seeds=[3,4]"],
    );
    let mut etas = Vec::new();
    for seed in ["3", "4"] {
        let out = dir.path().join(seed);
        ok(&out, &["search", "--seed", seed]);
        etas.push(float_column(&out.join("metrics.csv"), "eta")[0]);
    }
    let mean = (etas[0] + etas[1]) / 2.0;
    let swept = float_column(&sweep.join("metrics.csv"), "mean_eta")[0];
    assert!((swept - mean).abs() < 1e-12, "{swept} vs {mean}");
}

#[test]
fn budget_sweep_is_non_decreasing() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "sweep",
            "--set",
            "sweep.omega=[]",
            "--set",
            "sweep.budgets=[10,100,1000,10000]",
            "--set",
            "sweep.seeds=[0,1,2]",
        ],
    );
    assert!(!dir.path().join("metrics.csv").exists());
    let eta = float_column(&dir.path().join("budgets.csv"), "mean_eta");
    assert_eq!(eta.len(), 4);
    assert!(eta.windows(2).all(|w| w[1] >= w[0]), "{eta:?}");
}

#[test]
fn empty_sweep_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = coopdrive(dir.path(), &["sweep", "--set", "sweep.omega=[]"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty"));
}

#[test]
fn bad_configuration_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let o = coopdrive(dir.path(), &["search", "--set", "mcts.nonsense=1"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown config key"));

    let path = dir.path().join("broken.json");
    fs::write(&path, "{ not json").unwrap();
    let o = coopdrive(dir.path(), &["search", "--config", path.to_str().unwrap()]);
    assert!(!o.status.success());

    let o = coopdrive(dir.path(), &["search", "--set", "geometry.lanes_per_leg=2"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("lane_movements"));
}

#[test]
fn effective_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&a, &["search", "--seed", "5", "--set", "mcts.omega=0.6", "--budget-nodes", "300"]);
    let echo = a.join("effective_config.json");
    ok(&b, &["search", "--config", echo.to_str().unwrap()]);
    for f in ["metrics.csv", "iterations.csv", "effective_config.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn dump_tree_writes_dot_and_json() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["dump-tree", "--budget-nodes", "20", "--set", "scenario.random.vehicles=6"]);
    let dot = fs::read_to_string(dir.path().join("tree.dot")).unwrap();
    assert!(dot.starts_with("digraph search_tree {"));
    let tree: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("tree.json")).unwrap()).unwrap();
    assert_eq!(tree["nodes"].as_array().unwrap().len(), 21);
}

#[test]
fn json_format_writes_json_tables() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["search", "--format", "json", "--budget-nodes", "50", "--timing"]);
    let rows: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert!(rows[0]["j_mcts"].as_f64().unwrap() <= rows[0]["j_fifo"].as_f64().unwrap());
    assert!(rows[0]["elapsed_s"].is_number());
    assert!(!dir.path().join("metrics.csv").exists());
}
