use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qrw_core::PipelineConfig;

fn qrw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qrw"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

/// Synthetic world scaled down so every stage finishes in seconds.
const SMALL: &str = r#"
preset = "synthetic"
seed = 3

[sampler]
k_unique = 12
max_attempts = 200

[model.tinylm]
embed_dim = 8
hidden = 16

[model.warm_start]
epochs = 1

[train]
learning_rate = 1.0
"#;

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    path
}

#[test]
fn bundled_configs_parse() {
    let synthetic = PipelineConfig::load(&repo_file("configs/synthetic.toml")).unwrap();
    assert_eq!(synthetic, PipelineConfig::synthetic_demo());
    let kqa = PipelineConfig::load(&repo_file("configs/kqa-http.toml")).unwrap();
    assert_eq!(kqa.pairing_config().n_plus, 10);
}

#[test]
fn config_command_prints_preset_defaults() {
    let out = qrw(&["config", "--preset", "truthfulqa"]);
    assert!(out.status.success());
    let cfg = PipelineConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(
        (cfg.pairing_config().n_plus, cfg.pairing_config().n_minus),
        (5, 10)
    );
}

#[test]
fn stage_without_inputs_names_the_missing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run = dir.path().join("run");
    let out = qrw(&[
        "pair",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("scores.jsonl") && err.contains("`score` stage"),
        "{err}"
    );
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[train]\nbeta = -1.0\n").unwrap();
    let out = qrw(&[
        "rewrite",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("beta"));
}

#[test]
fn full_run_then_rerun_of_one_stage_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run = dir.path().join("run");
    let (cfg, run_s) = (cfg.to_str().unwrap(), run.to_str().unwrap());
    let out = qrw(&["all", "--config", cfg, "--seed", "5", "--out", run_s]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("rewriter"), "{stdout}");
    for name in [
        "pairs_train.jsonl",
        "rewriter.ckpt",
        "report.txt",
        "report.tsv",
        "impact.tsv",
        "export/train.jsonl",
    ] {
        assert!(run.join(name).exists(), "{name} missing");
    }

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    let stats = std::fs::read_to_string(run.join("pair_stats.jsonl")).unwrap();
    let (n_plus, n_minus) = (10, 20);
    let expected: u64 = stats
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            let plus = v["n_plus_available"].as_u64().unwrap().min(n_plus);
            let minus = v["n_minus_available"].as_u64().unwrap().min(n_minus);
            plus * minus
        })
        .sum();
    assert_eq!(
        manifest["stages"]["pair"]["counts"]["pairs"]
            .as_u64()
            .unwrap(),
        expected
    );

    let before = std::fs::read(run.join("scores.jsonl")).unwrap();
    let out = qrw(&["score", "--config", cfg, "--seed", "5", "--out", run_s]);
    assert!(out.status.success());
    assert_eq!(std::fs::read(run.join("scores.jsonl")).unwrap(), before);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["stages"]["score"]["backend_calls"], 0);
    assert!(
        manifest["stages"]["score"]["cache"]["hits"]
            .as_u64()
            .unwrap()
            > 0
    );
}
