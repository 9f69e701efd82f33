use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn trendfield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trendfield")).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) {
    let out = trendfield(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn fit_and_bands(config: &Path, out: &Path) {
    let (config, out) = (config.to_str().unwrap(), out.to_str().unwrap());
    run_ok(&["fit", "--config", config, "--out", out]);
    run_ok(&["bands", "--config", config, "--out", out]);
}

fn error_record(out: &Output) -> Value {
    serde_json::from_slice(out.stderr.trim_ascii()).unwrap()
}

#[test]
fn synthetic_fixture_matches_golden_avoid_set() {
    let dir = tempfile::tempdir().unwrap();
    fit_and_bands(&fixture("synthetic.toml"), dir.path());
    let produced = std::fs::read(dir.path().join("avoid_alpha_0.05.csv")).unwrap();
    let golden = std::fs::read(fixture("golden_avoid_alpha_0.05.csv")).unwrap();
    assert_eq!(String::from_utf8(produced).unwrap(), String::from_utf8(golden).unwrap());
}

#[test]
fn simultaneous_avoid_set_is_within_pointwise_set() {
    let dir = tempfile::tempdir().unwrap();
    fit_and_bands(&fixture("synthetic.toml"), dir.path());
    for alpha in ["0.05", "0.01"] {
        let text = std::fs::read_to_string(dir.path().join(format!("cells_alpha_{alpha}.csv"))).unwrap();
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
        let (pw, sim, bon) = (col("pointwise_reject"), col("simultaneous_avoid"), col("bonferroni_reject"));
        for line in lines {
            let f: Vec<&str> = line.split(',').collect();
            if f[sim] == "1" {
                assert_eq!(f[pw], "1", "{line}");
            }
            if f[bon] == "1" {
                assert_eq!(f[pw], "1", "{line}");
            }
        }
    }
}

#[test]
fn prepare_gives_sixty_five_years_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["prepare", "--config", fixture("daily.toml").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    let text = std::fs::read_to_string(dir.path().join("anomalies.csv")).unwrap();
    let mut per_cell: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        per_cell.entry(format!("{},{}", f[0], f[1])).or_default().push(f[3].to_string());
    }
    assert_eq!(per_cell.len(), 3);
    for values in per_cell.values() {
        assert_eq!(values.len(), 65);
    }
    let masked: usize = per_cell.values().map(|v| v.iter().filter(|s| s.is_empty()).count()).sum();
    assert_eq!(masked, 1);
    let constants = std::fs::read_to_string(dir.path().join("constants.csv")).unwrap();
    assert_eq!(constants.lines().count(), 4);
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    std::fs::write(&config, "[data]\nanomalies = \"nowhere.csv\"\n").unwrap();
    let out = trendfield(&["fit", "--config", config.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let rec = error_record(&out);
    assert_eq!(rec["error"], "input");
    assert!(rec["path"].as_str().unwrap().ends_with("nowhere.csv"));
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn invalid_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    std::fs::write(&config, "[bands]\nalpha = [2.0]\n").unwrap();
    let out = trendfield(&["bands", "--config", config.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"], "config");
    let out = trendfield(&[
        "fit",
        "--config",
        fixture("synthetic.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--alpha",
        "0.05,-1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bands_without_fit_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = trendfield(&["bands", "--config", fixture("synthetic.toml").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(error_record(&out)["path"].is_string());
}

#[test]
fn seed_and_alpha_overrides_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let (config, out) = (fixture("synthetic.toml"), dir.path());
    run_ok(&["fit", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    run_ok(&["bands", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "99", "--alpha", "0.1"]);
    assert!(out.join("cells_alpha_0.1.csv").exists());
    assert!(!out.join("cells_alpha_0.05.csv").exists());
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["bands"]["seed"], 99);
    assert_eq!(manifest["fit"]["seed"], 7);
    assert!(manifest["bands"]["config"].as_str().unwrap().contains("0.1"));
    let report = trendfield(&["report", "--out", out.to_str().unwrap()]);
    assert!(report.status.success());
    assert!(String::from_utf8(report.stdout).unwrap().contains("0.1"));
}

#[test]
fn manifest_replays_to_identical_outputs() {
    let first = tempfile::tempdir().unwrap();
    fit_and_bands(&fixture("synthetic.toml"), first.path());
    let manifest: BTreeMap<String, Value> =
        serde_json::from_str(&std::fs::read_to_string(first.path().join("manifest.json")).unwrap()).unwrap();

    // Rebuild the run from the record alone: configuration text, seed and
    // input files identified by hash.
    let replay = tempfile::tempdir().unwrap();
    let work = replay.path().join("inputs");
    let out = replay.path().join("out");
    std::fs::create_dir_all(&work).unwrap();
    for command in ["fit", "bands"] {
        let rec = &manifest[command];
        for (path, hash) in rec["inputs"].as_object().unwrap() {
            let src = Path::new(path);
            let bytes = std::fs::read(src).unwrap();
            assert_eq!(trendfield::pipeline::sha256_hex(&bytes), hash.as_str().unwrap());
            std::fs::write(work.join(src.file_name().unwrap()), bytes).unwrap();
        }
        let config = work.join(format!("{command}.toml"));
        std::fs::write(&config, rec["config"].as_str().unwrap()).unwrap();
        let seed = rec["seed"].to_string();
        run_ok(&[command, "--seed", &seed, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        for (name, hash) in rec["outputs"].as_object().unwrap() {
            let bytes = std::fs::read(out.join(name)).unwrap();
            assert_eq!(trendfield::pipeline::sha256_hex(&bytes), hash.as_str().unwrap(), "{command}: {name}");
        }
    }
}

#[test]
fn simulate_writes_truth_and_anomalies() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["simulate", "--config", fixture("synthetic.toml").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    let produced = std::fs::read(dir.path().join("anomalies.csv")).unwrap();
    assert_eq!(produced, std::fs::read(fixture("synthetic_anomalies.csv")).unwrap());
    let truth: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth["beta0"], 0.45);
    assert_eq!(truth["trend"].as_array().unwrap().len(), truth["vertices"].as_array().unwrap().len());
}
