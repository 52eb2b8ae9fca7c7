use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const HEADER: &str = "seed,policy,control_mode,n_uavs,n_devices,area_side,horizon,arrival_rate,compute_capacity,\
queue_capacity,sweep_key,sweep_value,avg_execution_time,avg_computation_rate,avg_offloaded_data,completed_tasks,\
dropped_tasks,generated_tasks,in_flight_tasks,total_execution_time,total_compute_completed,total_offloaded_data,log_hash";

fn swarmsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swarmsim")).args(args).output().expect("binary runs")
}

fn short_scenario(dir: &Path) -> String {
    let p = dir.join("short.toml");
    fs::write(&p, "horizon = \"20 s\"\nn_devices = 4\nbandwidth = \"1 MHz\"\n").unwrap();
    p.to_str().unwrap().to_string()
}

fn lines(p: &Path) -> Vec<String> {
    fs::read_to_string(p).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn single_run_writes_metrics_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let scen = short_scenario(dir.path());
    let o = swarmsim(&["--scenario", &scen, "--policy", "greedy_nearest", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = lines(&out.join("metrics.csv"));
    assert_eq!(csv.len(), 2);
    assert_eq!(csv[0], HEADER);
    assert_eq!(csv[1].split(',').nth(1), Some("greedy_nearest"));
    let log = lines(&out.join("events.jsonl"));
    assert!(log[0].starts_with("{\"t\":0.0,\"seq\":0,\"kind\":\"sim_start\""));
    assert!(log.iter().all(|l| l.contains("\"payload\":")));
}

#[test]
fn default_scenario_runs_without_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = swarmsim(&["--seed", "3", "--mode", "distributed", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let csv = lines(&dir.path().join("metrics.csv"));
    let row: Vec<&str> = csv[1].split(',').collect();
    assert_eq!(&row[..5], &["3", "coop", "distributed", "6", "10"]);
}

#[test]
fn sweep_rows_summary_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let scen = short_scenario(dir.path());
    let run = |out: &Path, seeds: &str| {
        let o = swarmsim(&[
            "--scenario", &scen, "--sweep", "n_devices=2,3,5", "--seeds-per-point", seeds, "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&a, "2");
    run(&b, "2");
    let rows = lines(&a.join("metrics.csv"));
    assert_eq!(rows.len(), 1 + 6);
    let seeds_and_points: Vec<(String, String)> = rows[1..]
        .iter()
        .map(|r| {
            let f: Vec<&str> = r.split(',').collect();
            (f[0].to_string(), f[11].to_string())
        })
        .collect();
    assert_eq!(seeds_and_points[0], ("0".into(), "2".into()));
    assert_eq!(seeds_and_points[2], ("0".into(), "5".into()));
    assert_eq!(seeds_and_points[3], ("1".into(), "2".into()));
    assert_eq!(lines(&a.join("summary.csv")).len(), 1 + 3);
    for f in ["metrics.csv", "summary.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }

    let c = dir.path().join("c");
    run(&c, "1");
    let summary = lines(&c.join("summary.csv"));
    let header: Vec<&str> = summary[0].split(',').collect();
    let std_col = header.iter().position(|h| *h == "avg_computation_rate_std").unwrap();
    for row in &summary[1..] {
        assert_eq!(row.split(',').nth(std_col), Some("0.0"));
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    let missing = swarmsim(&["--scenario", "/no/such/file.toml", "--out", out]);
    assert_eq!(missing.status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "n_uavs = -2\ncompute_capacity = 0\nwhatever = 1\n").unwrap();
    let o = swarmsim(&["--scenario", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    for field in ["n_uavs", "compute_capacity", "whatever"] {
        assert!(err.contains(field), "{field} missing from: {err}");
    }

    assert_eq!(swarmsim(&["--policy", "sac", "--out", out]).status.code(), Some(2));
    assert_eq!(swarmsim(&["--sweep", "warp=1,2", "--out", out]).status.code(), Some(2));
    assert_eq!(swarmsim(&["--frobnicate"]).status.code(), Some(1));
    assert_eq!(swarmsim(&["--seeds-per-point", "3"]).status.code(), Some(1));
    assert_eq!(swarmsim(&["--seed", "minus-one"]).status.code(), Some(1));
    assert_eq!(swarmsim(&["--sweep", "n_devices", "--out", out]).status.code(), Some(1));
    assert_eq!(swarmsim(&["--help"]).status.code(), Some(0));
}
