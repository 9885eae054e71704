use std::fs;
use std::process::Command;

fn cate() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cate"))
}

#[test]
fn run_then_render() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        r#"
scenarios = ["A", "F"]
learners = ["t", "dr"]
strategies = ["naive", "split5050_cf"]
replications = 2
test_size = 40
n_override = 150

[learner_config]
[[learner_config.candidates]]
kind = "linear"
"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = cate()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .args(["--workers", "1"])
        .status()
        .unwrap();
    assert!(status.success());
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 2 * 2 * 2);

    let tables = dir.path().join("tables.md");
    let status = cate()
        .args(["render", "--in"])
        .arg(out.join("results.csv"))
        .arg("--out")
        .arg(&tables)
        .status()
        .unwrap();
    assert!(status.success());
    let md = fs::read_to_string(&tables).unwrap();
    assert!(md.contains("## T-learner") && md.contains("## DR-learner"));
    assert!(md.contains("**"));
}

#[test]
fn invalid_pair_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let output = cate()
        .args(["run", "--learners", "t", "--strategies", "fold5_combined", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("T-learner") && stderr.contains("fold5_combined"),
        "{stderr}"
    );
    assert!(!dir.path().join("results.csv").exists());
}

#[test]
fn simulate_writes_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let status = cate()
        .args(["simulate", "--scenario", "c", "--seed", "4", "--n", "30", "--out"])
        .arg(&path)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 31);
    assert!(text.starts_with("x1,"));
}

#[test]
fn shipped_configs_are_valid() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["desk.toml", "smoke.toml"] {
        let cfg = cate_cli::RunConfig::load(&root.join(name)).unwrap();
        let cfg = cfg.validate().unwrap_or_else(|e| panic!("{name}: {e:?}"));
        assert!(!cate_cli::runner::cells(&cfg).is_empty());
    }
    let desk = cate_cli::RunConfig::load(&root.join("desk.toml")).unwrap();
    assert_eq!(cate_cli::runner::cells(&desk).len(), 12 * (3 * 12 + 7));
}
