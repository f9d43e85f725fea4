use std::path::Path;
use std::process::Command;

use asa_core::eval::EvalSummary;

fn asa(dir: &Path, args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_asa"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "asa {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const SMALL: &str = r#"
out_dir = "out"
catalog = "catalog/workloads.toml"
prototypes = ["vm120", "vm125"]
targets = ["vm126"]

[pipeline]
scenarios = ["S1", "S5", "S12", "S24"]
stage1_seeds = [1]

[pipeline.hyperparams]
n_trees = 12

[pipeline.agent]
cooldown_ticks = 20000

[eval]
repeats = 1
bootstrap_resamples = 200

[sweep]
windows = [1, 3, 6]

[fixture]
profile = "vm126"
phase_ticks = 40000
phases = ["S1", "S24", "S5", "S12"]

[sim]
profile = "vm121"
scenario = "S5"
"#;

#[test]
fn small_config_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    asa(d, &["catalog", "dump", "--out", "catalog"]);
    let cat = d.join("catalog/workloads.toml");
    let text = std::fs::read_to_string(&cat).unwrap();
    std::fs::write(&cat, text.replace("horizon_ticks = 120000", "horizon_ticks = 50000")).unwrap();
    std::fs::write(d.join("small.toml"), SMALL).unwrap();

    asa(d, &["sim", "run", "small.toml", "--trace", "t.ndjson"]);
    assert!(std::fs::read_to_string(d.join("t.ndjson")).unwrap().lines().count() > 100);

    for stage in ["stage1", "stage2", "stage3", "adapt"] {
        asa(d, &["pipeline", stage, "small.toml"]);
    }
    for f in ["stage1/model.json", "stage3/mappings.json", "adapt/vm126/mapping.json"] {
        assert!(d.join("out").join(f).exists(), "{f}");
    }

    asa(d, &["eval", "run", "small.toml"]);
    let summary: EvalSummary =
        serde_json::from_str(&std::fs::read_to_string(d.join("out/eval/summary.json")).unwrap()).unwrap();
    assert_eq!(summary.units, 4);
    assert_eq!(summary.cooldown_violations, 0);
    assert!((summary.win_rate + summary.loss_rate + summary.tie_rate - 1.0).abs() < 1e-12);

    asa(d, &["eval", "sweep-window", "small.toml"]);
    let sweep = std::fs::read_to_string(d.join("out/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 4);

    asa(d, &["eval", "latency", "small.toml"]);
    assert!(d.join("out/eval/latency.md").exists());

    asa(d, &["report", "emit", "small.toml", "--format", "json,csv,markdown"]);
    let md = std::fs::read_to_string(d.join("out/eval/summary.md")).unwrap();
    assert!(md.contains("| win | loss | tie |"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "out_dri = \"x\"\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_asa"))
        .args(["pipeline", "stage1", "bad.toml"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("out_dri"));
}
