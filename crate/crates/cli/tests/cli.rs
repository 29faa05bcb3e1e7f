use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use gmes_cli::config::{parse_config, parse_config_str};
use gmes_cli::sweep::run_sweep;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gmes"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn files(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map(|rd| rd.flatten().map(|e| e.path()).filter(|p| p.extension().is_some_and(|e| e == ext)).collect())
        .unwrap_or_default();
    v.sort();
    v
}

const SMALL: &str = r#"
algorithms = ["gmes", "bucb"]
function = "bird"
agents = 2
iterations = 5
seeds = [3, 4]
[gmes]
ascent_iters = 10
ucb_iters = 20
"#;

#[test]
fn sweep_file_contract() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = parse_config_str(SMALL, Path::new("small.toml")).unwrap();
    spec.output_dir = dir.path().join("out");
    let report = run_sweep(&spec, 0).unwrap();
    assert!(report.failures.is_empty());
    let out = &spec.output_dir;
    assert_eq!(files(&out.join("runs"), "csv").len(), 4);
    assert_eq!(files(out, "csv"), vec![out.join("aggregate.csv")]);
    assert_eq!(files(&out.join("plots"), "svg").len(), 2);
    assert!(out.join("spec.json").exists());
    assert_eq!(fs::read_to_string(out.join("failures.json")).unwrap().trim(), "[]");
}

#[test]
fn aggregate_matches_recomputed_run_means() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = parse_config_str(SMALL, Path::new("small.toml")).unwrap();
    spec.output_dir = dir.path().to_path_buf();
    run_sweep(&spec, 0).unwrap();

    let agg = fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
    let mut lines = agg.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |n: &str| header.iter().position(|h| *h == n).unwrap();
    let mut checked = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let (alg, iter) = (f[col("algorithm")], f[col("iter")]);
        let mut instant = Vec::new();
        let mut cumulative = Vec::new();
        for p in files(&dir.path().join("runs"), "csv") {
            if !p.file_name().unwrap().to_string_lossy().contains(&format!("_{alg}_")) {
                continue;
            }
            let run = fs::read_to_string(&p).unwrap();
            let row = run.lines().skip(1).find(|l| l.split(',').next() == Some(iter)).unwrap();
            let v: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
            instant.push(v[1]);
            cumulative.push(v[2]);
        }
        assert_eq!(instant.len(), 2);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let got_i: f64 = f[col("instant_mean")].parse().unwrap();
        let got_c: f64 = f[col("cumulative_mean")].parse().unwrap();
        assert!((got_i - mean(&instant)).abs() <= 1e-12 * mean(&instant).abs().max(1.0));
        assert!((got_c - mean(&cumulative)).abs() <= 1e-12 * mean(&cumulative).abs().max(1.0));
        let sd = ((instant[0] - instant[1]).powi(2) / 2.0).sqrt();
        let lo: f64 = f[col("instant_ci_low")].parse().unwrap();
        assert!((lo - (mean(&instant) - 1.96 * sd / 2f64.sqrt())).abs() <= 1e-9 * mean(&instant).abs().max(1.0));
        checked += 1;
    }
    assert_eq!(checked, 10);
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let st = bin().args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", "2"]).status().unwrap();
        assert!(st.success());
    }
    let runs_a = files(&a.join("runs"), "csv");
    assert_eq!(runs_a.len(), 4);
    for p in runs_a {
        let q = b.join("runs").join(p.file_name().unwrap());
        assert_eq!(fs::read(&p).unwrap(), fs::read(&q).unwrap(), "{}", p.display());
    }
    assert_eq!(fs::read(a.join("aggregate.csv")).unwrap(), fs::read(b.join("aggregate.csv")).unwrap());
}

#[test]
fn seed_offset_shifts_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "algorithm = \"thompson\"\nfunction = \"ackley\"\nagents = 1\niterations = 2\nseeds = [0]\n");
    let out = dir.path().join("o");
    let st = bin()
        .args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed-offset", "5"])
        .status()
        .unwrap();
    assert!(st.success());
    assert!(out.join("runs").join("c00_thompson_ackley_m1_seed5.csv").exists());
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.toml", "algorithm = \"gmes\"\nfunction = \"ackley\"\n");
    let out = bin().args(["validate", good.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let printed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(printed["experiments"][0]["iterations"], 150);

    let bad = write(dir.path(), "bad.toml", "algorithm = \"ei\"\nfunction = \"ackley\"\njobs = 0\n");
    let out = bin().args(["validate", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gmes, ucb_pe, bucb, thompson") && err.contains("jobs"), "{err}");

    let missing = dir.path().join("nope.toml");
    assert_eq!(bin().args(["validate", missing.to_str().unwrap()]).status().unwrap().code(), Some(1));
    assert_eq!(bin().args(["frobnicate"]).status().unwrap().code(), Some(1));
}

#[test]
fn runtime_failures_are_recorded_and_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        r#"
seeds = [0]
[seek]
agents = 2
[[seek.custom]]
name = "crowded"
starts = [[1.0, 1.0], [1.1, 1.0]]
[seek.custom.field]
arena_min = [0.0, 0.0]
arena_max = [3.0, 3.0]
lamps = [{ x = 2.0, y = 2.0, height = 0.5, intensity = 1.0 }]
"#,
    );
    let out = dir.path().join("o");
    let st = bin().args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status().unwrap();
    assert_eq!(st.code(), Some(2));
    let failures: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("failures.json")).unwrap()).unwrap();
    assert_eq!(failures.as_array().unwrap().len(), 1);
    assert!(failures[0]["run"].as_str().unwrap().contains("crowded"));
}

#[test]
fn bench_prints_final_regret() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "algorithm = \"ucb_pe\"\nfunction = \"rosenbrock\"\nagents = 2\niterations = 3\n");
    let out = bin().args(["bench", cfg.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let r: f64 = text.trim().rsplit("= ").next().unwrap().parse().unwrap();
    assert!(r >= 0.0, "{text}");
}

#[test]
fn seek_preset_and_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let st = bin()
        .args(["seek", "single", "--agents", "2", "--seed", "1", "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(st.success());
    let traj = fs::read_to_string(out.join("single_m2_seed1_trajectory.csv")).unwrap();
    assert_eq!(traj.lines().next().unwrap(), "t,robot_id,x,y,heading,v,target_x,target_y");
    let res: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("single_m2_seed1.json")).unwrap()).unwrap();
    assert!(res["iterations_to_converge"].as_u64().unwrap() >= 1);

    let file = write(
        dir.path(),
        "lab.toml",
        r#"
name = "lab"
starts = [[0.5, 0.5]]
[field]
arena_min = [0.0, 0.0]
arena_max = [2.0, 2.0]
lamps = [{ x = 1.5, y = 1.5, height = 0.4, intensity = 2.0 }]
[config]
agents = 1
max_iterations = 4
"#,
    );
    let st = bin().args(["seek", file.to_str().unwrap(), "--out", out.to_str().unwrap()]).status().unwrap();
    assert!(st.success());
    assert!(out.join("lab_m1_seed0.json").exists());
    assert_eq!(bin().args(["seek", "nowhere"]).status().unwrap().code(), Some(1));
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let first = write(dir.path(), "a.toml", SMALL);
    let spec = parse_config(&first).unwrap();
    let second = write(dir.path(), "b.toml", &spec.to_toml());
    assert_eq!(parse_config(&second).unwrap(), spec);
}
