use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_polarity");
const BASE: &str = "N = 1000\nD = 0.05\nR = 1\nk_on = 0.1\nk_off = 1\nk_fb = 2\n";

fn polarity(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn predict_prints_closed_forms() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.conf", &format!("{BASE}t_end = 1\n"));
    let out = polarity(&["predict", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["h_eq"], 0.5);
    assert!((v["S_p"].as_f64().unwrap() - 0.0465116).abs() < 1e-7);
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["S_p", "S_p_rel", "alpha", "chi", "gamma", "h_eq", "relax_rate", "theta"]);
}

#[test]
fn zero_window_simulation_writes_one_empty_row() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.conf", &format!("{BASE}t_end = 0\n"));
    let dir = tmp.path().join("out");
    let out = polarity(&["simulate", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let traj = fs::read_to_string(dir.join("trajectory_000.csv")).unwrap();
    let lines: Vec<&str> = traj.lines().collect();
    assert!(lines[0].starts_with("# config_hash: "));
    assert_eq!(lines[1], "time,n,h,num_clans,largest_clan_frac,second_clan_frac,spread_num,spread_den,polarized,pole_x,pole_y,pole_z");
    assert_eq!(&lines[2..], ["0,0,0,0,0,0,0,0,0,,,"]);
    let snaps = fs::read_to_string(dir.join("snapshots_000.csv")).unwrap();
    assert_eq!(snaps.lines().nth(1), Some("time,clan,x,y,z"));
    assert_eq!(snaps.lines().count(), 2);
    let summary = read_json(&dir.join("summary.json"));
    for key in ["config", "derived", "seeds", "wall_time_s", "config_hash"] {
        assert!(summary.get(key).is_some(), "summary lacks {key}");
    }
    let hash = summary["config_hash"].as_str().unwrap();
    assert!(lines[0].ends_with(hash));
}

#[test]
fn outputs_are_reproducible_and_replica_count_agnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.conf",
        "N = 200\nD = 0.05\nR = 1\nk_on = 0.1\nk_off = 1\nk_fb = 2\nt_end = 1\nburn_in = 1\nsnapshot_interval = 0.25\nreplicas = 3\nseed = 11\n",
    );
    let run = |name: &str, extra: &[&str]| {
        let dir = tmp.path().join(name);
        let mut args = vec!["simulate", "--config", &cfg, "--out", dir.to_str().unwrap()];
        args.extend_from_slice(extra);
        let out = polarity(&args);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        dir
    };
    let a = run("a", &[]);
    let b = run("b", &[]);
    for i in 0..3 {
        for stem in ["trajectory", "snapshots"] {
            let name = format!("{stem}_{i:03}.csv");
            assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name}");
        }
    }
    let strip = |p: &Path| {
        let mut v = read_json(&p.join("summary.json"));
        v.as_object_mut().unwrap().remove("wall_time_s");
        v
    };
    assert_eq!(strip(&a), strip(&b));

    // Replica i does not depend on how many replicas run alongside it.
    let c = run("c", &["--replicas", "1"]);
    let body = |p: &Path| fs::read_to_string(p.join("trajectory_000.csv")).unwrap().lines().skip(1).collect::<Vec<_>>().join("\n");
    assert_eq!(body(&a), body(&c));
    assert_ne!(read_json(&a.join("summary.json"))["config_hash"], read_json(&c.join("summary.json"))["config_hash"]);
}

#[test]
fn config_errors_exit_with_usage_status() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "bad.conf", &BASE.replace("k_fb = 2", "k_fb = 1"));
    let out = polarity(&["predict", "--config", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 6"));

    let unknown = write_config(tmp.path(), "u.conf", &format!("{BASE}t_end = 1\nspeed = 3\n"));
    assert_eq!(polarity(&["predict", "--config", &unknown]).status.code(), Some(2));
    assert_eq!(polarity(&["predict", "--config", "/nonexistent.conf"]).status.code(), Some(2));
    assert_eq!(polarity(&["no-such-command"]).status.code(), Some(2));
    let good = write_config(tmp.path(), "g.conf", &format!("{BASE}t_end = 0\n"));
    assert_eq!(polarity(&["simulate", "--config", &good]).status.code(), Some(2));
}

#[test]
fn hash_mismatch_is_detected() {
    let tmp = tempfile::tempdir().unwrap();
    let c1 = write_config(tmp.path(), "1.conf", &format!("{BASE}t_end = 0\n"));
    let c2 = write_config(tmp.path(), "2.conf", &format!("{BASE}t_end = 0\nseed = 5\n"));
    let dir = tmp.path().join("out");
    let d = dir.to_str().unwrap();
    assert_eq!(polarity(&["simulate", "--config", &c1, "--out", d]).status.code(), Some(0));
    assert_eq!(polarity(&["simulate", "--config", &c1, "--out", d]).status.code(), Some(0));
    let out = polarity(&["simulate", "--config", &c2, "--out", d]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config hash"));
}

#[test]
fn failed_runs_leave_no_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.conf", &format!("{BASE}t_end = 0\nreplicas = 2\n"));
    let dir = tmp.path().join("out");
    fs::create_dir(&dir).unwrap();
    // A directory squatting on the second replica's file name makes that write fail.
    fs::create_dir(dir.join("trajectory_001.csv")).unwrap();
    let out = polarity(&["simulate", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trajectory_001.csv"));
    let left: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(left, vec![std::ffi::OsString::from("trajectory_001.csv")]);
}

#[test]
fn gem_sample_and_lookdown() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.conf", &format!("{BASE}t_end = 0\nreplicas = 5\n"));
    let dir = tmp.path().join("gem");
    let out = polarity(&["gem-sample", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.join("gem_sticks.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("sample,index,weight,stick"));
    let sticks: Vec<Vec<f64>> = (0..5)
        .map(|s| {
            csv.lines()
                .skip(2)
                .filter(|l| l.starts_with(&format!("{s},")))
                .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
                .collect()
        })
        .collect();
    for s in &sticks {
        let total: f64 = s.iter().sum();
        assert!(total <= 1.0 + 1e-12 && total > 1.0 - 1e-9);
    }

    let out = polarity(&["lookdown", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("analytic") && text.contains("monte_carlo") && text.contains("predicted"));
}
