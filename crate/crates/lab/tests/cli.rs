//! End-to-end CLI behaviour: determinism, config validation, and the
//! simulate pass-through.

use std::path::Path;
use std::process::Command;

fn spongelab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spongelab"))
}

fn write(path: &Path, body: &str) {
    std::fs::write(path, body).unwrap();
}

#[test]
fn attack_nlp_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    write(
        &config,
        r#"
task = "attack-nlp"
seed = 5
out_dir = "unused"
[translator]
seed = 7
[nlp]
input_chars = 12
natural_corpus = 20
[ga]
pool_size = 30
generations = 10
"#,
    );
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let status = spongelab()
            .args(["run", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    for name in ["history.tsv", "best.tsv", "summary.txt", "best_trace.txt"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs across reruns");
    }
    // Outputs embed the config hash and seed.
    let history = std::fs::read_to_string(out_a.join("history.tsv")).unwrap();
    assert!(history.starts_with("# spongelab-ga-history v1 config="));
    assert!(history.lines().next().unwrap().contains("seed=5"));
}

#[test]
fn invalid_config_fails_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    write(
        &config,
        "task = \"attack-nlp\"\nout_dir = \"out\"\n[ga]\nselection_fraction = 2.0\n",
    );
    let output = spongelab()
        .args(["run", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("ga.selection_fraction"),
        "stderr was: {stderr}"
    );
}

#[test]
fn simulate_task_prices_a_stored_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.txt");
    write(
        &trace,
        "# spongelab-trace v1\nl0 10 5 4 2 100 60\nl1 20 20 8 8 50 50\n",
    );
    let config = dir.path().join("config.toml");
    write(
        &config,
        &format!(
            "task = \"simulate\"\nout_dir = \"out\"\n[simulate]\ntrace_path = {:?}\n",
            trace.display().to_string()
        ),
    );
    let out = dir.path().join("out");
    let output = spongelab()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success());
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    // optimized = 5*3.7 + 60*1950 + 20*3.7 + 50*1950 = 214592.5 pJ
    assert!(report.contains("energy_optimized_pj = 214592.5"), "{report}");
    assert!(report.contains("mult_total = 30"));
}

#[test]
fn overrides_change_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    write(
        &config,
        r#"
task = "attack-nlp"
seed = 5
out_dir = "unused"
[nlp]
input_chars = 12
natural_corpus = 10
[ga]
pool_size = 30
generations = 5
"#,
    );
    let out = dir.path().join("o");
    let output = spongelab()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .args(["--override", "ga.generations=7"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let history = std::fs::read_to_string(out.join("history.tsv")).unwrap();
    let rows = history
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("generation"))
        .count();
    assert_eq!(rows, 7);
}

#[test]
fn export_vocab_writes_loadable_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vocab.txt");
    let status = spongelab()
        .arg("export-vocab")
        .arg(&path)
        .status()
        .unwrap();
    assert!(status.success());
    let vocab = sponge_lab::formats::load_vocab(&path).unwrap();
    assert_eq!(vocab.len(), sponge_core::zoo::default_vocab().len());
}
