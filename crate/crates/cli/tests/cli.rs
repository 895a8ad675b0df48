use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const STAMP: &str = "2024-01-01T00:00:00Z";

fn fracpme(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracpme"))
        .args(args)
        .env_remove("SOURCE_DATE_EPOCH")
        .env_remove("FRACPME_THREADS")
        .output()
        .expect("binary runs")
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Data rows of a CSV artifact, split into fields, skipping comments and the column row.
fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let columns = lines.next().unwrap().split(',').map(str::to_owned).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
    (columns, rows)
}

#[test]
fn solve_writes_one_row_per_node() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("robin.csv");
    let o = fracpme(&["solve", "--alpha", "0.5", "--m", "2", "--bc", "robin", "--n", "200", "-o", path_arg(&out), "--timestamp", STAMP]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with(&format!("# fracpme v{} solve {STAMP}\n", env!("CARGO_PKG_VERSION"))));
    let (columns, rows) = csv_rows(&text);
    assert_eq!(columns, ["bc", "alpha", "m", "z", "v", "y"]);
    assert_eq!(rows.len(), 201);
    assert_eq!(rows[200][3].parse::<f64>().unwrap(), 1.0);
    // no stray temporaries left beside the artifact
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn json_carries_the_same_data() {
    let dir = TempDir::new().unwrap();
    let (csv_path, json_path) = (dir.path().join("a.csv"), dir.path().join("a.json"));
    let common = ["solve", "--alpha", "0.7", "--m", "3", "--n", "40", "--timestamp", STAMP];
    assert!(fracpme(&[&common[..], &["-o", path_arg(&csv_path)]].concat()).status.success());
    assert!(fracpme(&[&common[..], &["-o", path_arg(&json_path), "--format", "json"]].concat()).status.success());

    let (columns, rows) = csv_rows(&std::fs::read_to_string(&csv_path).unwrap());
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(doc["meta"]["command"], "solve");
    assert_eq!(doc["meta"]["timestamp"], STAMP);
    let json_columns: Vec<&str> = doc["columns"].as_array().unwrap().iter().map(|c| c.as_str().unwrap()).collect();
    assert_eq!(json_columns, columns);
    let json_rows = doc["rows"].as_array().unwrap();
    assert_eq!(json_rows.len(), rows.len());
    for (c, j) in rows.iter().zip(json_rows) {
        for k in 3..6 {
            assert_eq!(c[k].parse::<f64>().unwrap(), j[k].as_f64().unwrap());
        }
    }
}

#[test]
fn saved_config_reproduces_output_byte_for_byte() {
    let dir = TempDir::new().unwrap();
    let (cfg_path, first, second) = (dir.path().join("run.json"), dir.path().join("1.csv"), dir.path().join("2.csv"));
    let o = fracpme(&["front", "--alpha", "0.4,0.8", "--m", "2", "--bc", "all", "--n", "60", "--save-config", path_arg(&cfg_path), "-o", path_arg(&first)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let o = fracpme(&["front", "--config", path_arg(&cfg_path), "-o", path_arg(&second)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());

    let resaved = dir.path().join("again.json");
    let o = fracpme(&["--config", path_arg(&cfg_path), "--save-config", path_arg(&resaved)]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(&cfg_path).unwrap(), std::fs::read(&resaved).unwrap());
}

#[test]
fn config_errors_exit_with_two() {
    assert_eq!(fracpme(&["solve", "--alpha", "1.5", "--m", "2"]).status.code(), Some(2));
    assert_eq!(fracpme(&["solve", "--m", "-1"]).status.code(), Some(2));
    assert_eq!(fracpme(&["solve", "--n", "2"]).status.code(), Some(2));
    assert_eq!(fracpme(&["solve", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(fracpme(&[]).status.code(), Some(2));

    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(fracpme(&["--config", path_arg(&missing)]).status.code(), Some(2));

    let cfg_path = dir.path().join("front.json");
    assert!(fracpme(&["front", "--n", "20", "--save-config", path_arg(&cfg_path)]).status.success());
    assert_eq!(fracpme(&["solve", "--config", path_arg(&cfg_path)]).status.code(), Some(2));

    let o = Command::new(env!("CARGO_BIN_EXE_fracpme"))
        .args(["solve", "--n", "20"])
        .env("FRACPME_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn thread_cap_is_honoured() {
    let o = Command::new(env!("CARGO_BIN_EXE_fracpme"))
        .args(["solve", "--n", "20"])
        .env("FRACPME_THREADS", "1")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn profiles_for_all_conditions_are_monotone() {
    let o = fracpme(&["profile", "--alpha", "0.5", "--m", "2", "--bc", "all", "--t", "1", "--points", "60"]);
    assert!(o.status.success());
    let (_, rows) = csv_rows(&String::from_utf8(o.stdout).unwrap());
    for bc in ["dirichlet", "neumann", "robin"] {
        let u: Vec<f64> = rows.iter().filter(|r| r[0] == bc).map(|r| r[5].parse().unwrap()).collect();
        assert_eq!(u.len(), 60);
        assert!(u[0] > 0.0 && *u.last().unwrap() == 0.0);
        assert!(u.windows(2).all(|w| w[1] <= w[0]), "{bc} profile not monotone");
    }
}

#[test]
fn classical_front_self_converges() {
    let o = fracpme(&["front", "--alpha", "1", "--m", "2", "--bc", "dirichlet", "--n", "1500"]);
    assert!(o.status.success());
    let (columns, rows) = csv_rows(&String::from_utf8(o.stdout).unwrap());
    let col = |name: &str| columns.iter().position(|c| c == name).unwrap();
    let estimate: f64 = rows[0][col("eta_error_estimate")].parse().unwrap();
    assert!(estimate <= 1e-8, "{estimate:e}");
}

#[test]
fn power_kernel_table_layout() {
    let o = fracpme(&["solve", "--kernel", "power", "--gamma", "0,0.5,1.4142135623730951,3.141592653589793", "--m", "1,2,10,100", "--n", "10"]);
    assert!(o.status.success());
    let (columns, rows) = csv_rows(&String::from_utf8(o.stdout).unwrap());
    assert_eq!(columns, ["m", "gamma", "max_error"]);
    assert_eq!(rows.len(), 16);
    assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap() <= 1e-8));
}

#[test]
fn m0_failures_are_reported_and_exit_three() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("m0.csv");
    let o = fracpme(&["m0", "--alpha", "0.01", "-o", path_arg(&out)]);
    assert!(o.status.success());
    let (_, rows) = csv_rows(&std::fs::read_to_string(&out).unwrap());
    assert_eq!(rows[0][3], "ok");
    assert!(rows[0][2].parse::<f64>().unwrap() > 1.0);

    let o = fracpme(&["m0", "--alpha", "0.5,0.01", "-o", path_arg(&out)]);
    assert_eq!(o.status.code(), Some(3));
    let (_, rows) = csv_rows(&std::fs::read_to_string(&out).unwrap());
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][3], "ok");

    assert_eq!(fracpme(&["m0", "--alpha", "1"]).status.code(), Some(2));
}

#[test]
fn fd_reports_field_and_front() {
    let o = fracpme(&["fd", "--alpha", "0.9", "--m", "2", "--dt", "0.02", "--dx", "0.1", "--x-max", "2", "--snapshot-every", "25", "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = doc["rows"].as_array().unwrap();
    // levels 0, 25 and 50, each with 21 nodes
    assert_eq!(rows.len(), 3 * 21);
    let front = doc["summary"]["front[dirichlet,0.9,2]"].as_f64().unwrap();
    assert!(front > 0.5 && front < 2.0);

    let o = fracpme(&["fd", "--alpha", "0.9", "--m", "2", "--dt", "0.02", "--dx", "0.1", "--x-max", "0.5"]);
    assert_eq!(o.status.code(), Some(3));
}
