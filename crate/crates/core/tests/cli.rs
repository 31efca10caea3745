use std::path::Path;
use std::process::{Command, Output};

fn ssp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssp"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

const SMALL: &str = r#"
[data]
simulations = 1
[data.ks]
duration = 2.0
[train]
runs = 1
epochs = 1
losses = ["SSP", "MAE"]
[hyperplane]
loss = "SSP"
points = 3
"#;

#[test]
fn config_errors_exit_with_2_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[train]\nbatch_size = -1\n");
    let out = ssp(&["generate", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.batch_size"));
    let out = ssp(&["generate", "--case", "ks3d"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let cfg = write(dir.path(), "w.toml", "case = \"waves\"\n");
    let out = ssp(&["generate", "--case", "ks1d", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn metric_sweep_writes_a_headed_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = ssp(&["metric-sweep"], dir.path());
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("metric_sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("parameter,value,MSE,MAE,SSP"));
    assert_eq!(lines.count(), 3 * 81);
    assert!(csv.contains("\namplitude,1,0,0,0\n"));
    assert!(csv.contains("\namplitude,-1,"));
}

#[test]
fn generate_compare_stats_hyperplane_probe() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let run = |verb: &str| {
        let out = ssp(&[verb, "--config", &cfg, "--seed", "3", "--jobs", "2"], dir.path());
        assert!(out.status.success(), "{verb}: {}", String::from_utf8_lossy(&out.stderr));
        out
    };
    run("generate");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("dataset.json")).unwrap()).unwrap();
    assert_eq!(manifest["pair_count"], 13);
    let resolved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(resolved["seed"], 3);

    let compare = run("compare");
    let summary: serde_json::Value = serde_json::from_slice(&compare.stdout).unwrap();
    assert_eq!(summary["losses"].as_array().unwrap().len(), 2);
    let stats = run("stats");
    assert_eq!(compare.stdout, stats.stdout);

    run("hyperplane");
    assert_eq!(std::fs::read_to_string(dir.path().join("hyperplane.csv")).unwrap().lines().count(), 10);
    let probe = run("probe");
    let sigs: serde_json::Value = serde_json::from_slice(&probe.stdout).unwrap();
    assert_eq!(sigs.as_array().unwrap().len(), 3);
}

#[test]
fn divergence_exits_with_3_and_keeps_results() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}\n[train.optimizer]\nkind = \"sgd\"\nlr = 1e300\n");
    let cfg = write(dir.path(), "wild.toml", &text);
    let out = ssp(&["compare", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!(summary["losses"].as_array().unwrap().iter().any(|l| l["diverged"] != 0));
    assert!(dir.path().join("runs/SSP/run_00/run.json").is_file());
}

#[test]
fn stats_without_runs_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = ssp(&["stats"], dir.path());
    assert!(!out.status.success());
}
