//! End-to-end tests of the binary surface: exit codes, subcommand chains,
//! manifest contents, caching behavior.

use std::path::Path;
use std::process::{Command, Output};
use vimu::demo::{generate, DemoSpec};

fn vimu() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vimu"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn small_demo(dir: &Path, fractions: Vec<f64>) -> std::path::PathBuf {
    let spec = DemoSpec {
        subjects: 3,
        classes: 2,
        real_seconds_per_class: 8.0,
        takes_per_class: 3,
        take_seconds: 6.0,
        n_trees: 15,
        fractions,
        ..DemoSpec::default()
    };
    generate(dir, &spec).expect("demo generates")
}

#[test]
fn validate_accepts_the_bundled_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_demo(dir.path(), vec![1.0]);
    let out = vimu().args(["validate", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn validate_rejects_bad_window_and_unknown_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_demo(dir.path(), vec![1.0]);
    let text = std::fs::read_to_string(&config).unwrap();
    let bad = text
        .replace("\"overlap_seconds\": 1.0", "\"overlap_seconds\": 2.5")
        .replace("\"real-only\"", "\"Real+GAN\"");
    std::fs::write(&config, bad).unwrap();
    let out = vimu().args(["validate", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("window"), "{stderr}");
    assert!(stderr.contains("unknown configuration name"), "{stderr}");
}

#[test]
fn synth_writes_one_trace_per_motion_and_placement() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_demo(dir.path(), vec![1.0]);
    run_ok(vimu().args(["synth", "--config"]).arg(&config));
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/traces/manifest.json")).unwrap(),
    )
    .unwrap();
    let entries = manifest["entries"].as_array().unwrap();
    // 2 classes x 3 takes x 2 provenances x 1 placement.
    assert_eq!(entries.len(), 12);
    assert!(manifest["errors"].as_array().unwrap().is_empty());
    for entry in entries {
        let file = dir.path().join("out/traces").join(entry["file"].as_str().unwrap());
        assert!(file.exists(), "{}", file.display());
    }
}

#[test]
fn synth_isolates_a_corrupt_motion_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_demo(dir.path(), vec![1.0]);
    let victim = dir.path().join("motions/text/waving/take01.bvh");
    std::fs::write(&victim, "HIERARCHY\nROOT broken\n").unwrap();
    let out = vimu().args(["synth", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "corrupt input must fail the batch");
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/traces/manifest.json")).unwrap(),
    )
    .unwrap();
    // The other 11 traces still came out; the error names the file.
    assert_eq!(manifest["entries"].as_array().unwrap().len(), 11);
    let errors = manifest["errors"].as_array().unwrap();
    assert_eq!(errors.len(), 1);
    assert!(errors[0].as_str().unwrap().contains("take01.bvh"));
}

#[test]
fn ingest_window_augment_featurize_train_chain() {
    let dir = tempfile::tempdir().unwrap();
    small_demo(dir.path(), vec![1.0]);
    let rec_dir = dir.path().join("work/rec");
    run_ok(
        vimu()
            .args(["ingest", "--input"])
            .arg(dir.path().join("real/subject1.csv"))
            .arg("--adapter")
            .arg(dir.path().join("adapters/real.json"))
            .args(["--resample", "20", "--out"])
            .arg(&rec_dir),
    );
    let ds_dir = dir.path().join("work/ds");
    run_ok(
        vimu()
            .args(["window", "--recording"])
            .arg(rec_dir.join("recording.json"))
            .arg("--out")
            .arg(&ds_dir),
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ds_dir.join("manifest.json")).unwrap())
            .unwrap();
    let n = manifest["window_count"].as_u64().unwrap();
    assert!(n > 0);

    let aug_dir = dir.path().join("work/ds4");
    run_ok(vimu().args(["augment", "--dataset"]).arg(&ds_dir).arg("--out").arg(&aug_dir));
    let manifest4: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(aug_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest4["window_count"].as_u64().unwrap(), 4 * n);

    let features = dir.path().join("work/features.csv");
    run_ok(vimu().args(["featurize", "--dataset"]).arg(&aug_dir).arg("--out").arg(&features));
    let model = dir.path().join("work/model.json");
    run_ok(
        vimu()
            .args(["train", "--features"])
            .arg(&features)
            .arg("--out")
            .arg(&model)
            .args(["--trees", "10"]),
    );
    assert!(model.exists());
}

#[test]
fn run_emits_one_summary_row_per_config_and_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_demo(dir.path(), vec![1.0, 0.1]);
    run_ok(vimu().args(["run", "--config"]).arg(&config));
    let summary = std::fs::read_to_string(dir.path().join("out/summary.md")).unwrap();
    let rows = summary.lines().filter(|l| l.starts_with("| real")).count();
    // All five configurations x two fractions.
    assert_eq!(rows, 10, "{summary}");
    for artifact in ["results.csv", "per_class.csv", "eval_report.json", "run_manifest.json"] {
        assert!(dir.path().join("out").join(artifact).exists(), "{artifact}");
    }
}

#[test]
fn run_manifest_hashes_match_artifact_bytes() {
    use sha2::Digest;
    let dir = tempfile::tempdir().unwrap();
    let config = small_demo(dir.path(), vec![0.1]);
    run_ok(vimu().args(["run", "--config"]).arg(&config));
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/run_manifest.json")).unwrap(),
    )
    .unwrap();
    let mut checked = 0;
    for stage in manifest["stages"].as_array().unwrap() {
        for artifact in stage["outputs"].as_array().unwrap() {
            let path = dir.path().join("out").join(artifact["path"].as_str().unwrap());
            let bytes = std::fs::read(&path).unwrap();
            let digest = hex::encode(sha2::Sha256::digest(&bytes));
            assert_eq!(digest, artifact["sha256"].as_str().unwrap(), "{}", path.display());
            checked += 1;
        }
    }
    assert!(checked >= 4, "expected several hashed artifacts, saw {checked}");
}

#[test]
fn eval_then_report_matches_run_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_demo(dir.path(), vec![0.1]);
    run_ok(vimu().args(["run", "--config"]).arg(&config));
    let report_json = dir.path().join("out/eval_report.json");
    let rendered = dir.path().join("rendered");
    run_ok(vimu().args(["report", "--report"]).arg(&report_json).arg("--out").arg(&rendered));
    for file in ["results.csv", "summary.md", "per_class.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join("out").join(file)).unwrap(),
            std::fs::read(rendered.join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn deleting_a_cache_entry_reproduces_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_demo(dir.path(), vec![0.1]);
    let cache = dir.path().join("shared_cache");
    run_ok(
        vimu()
            .env("VIMU_CACHE_DIR", &cache)
            .args(["run", "--config"])
            .arg(&config)
            .args(["--output-dir", "out1"]),
    );
    // Evict one synth stage output, then rerun into a fresh output dir.
    let entry = std::fs::read_dir(cache.join("synth")).unwrap().next().unwrap().unwrap();
    std::fs::remove_file(entry.path()).unwrap();
    run_ok(
        vimu()
            .env("VIMU_CACHE_DIR", &cache)
            .args(["run", "--config"])
            .arg(&config)
            .args(["--output-dir", "out2"]),
    );
    for file in ["results.csv", "summary.md", "per_class.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join("out1").join(file)).unwrap(),
            std::fs::read(dir.path().join("out2").join(file)).unwrap(),
            "{file}"
        );
    }
}
