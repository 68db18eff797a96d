//! Subcommand implementations. Each returns a process exit code:
//! 0 ok, 1 config-validation failure, 2 stage failure.

use crate::config::{validate, LoadedConfig};
use crate::demo::{generate, DemoSpec};
use crate::stages::{
    assemble_real_dataset, assemble_virtual_dataset, cache_dir, execute_run,
};
use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};
use sha2::Digest;
use std::path::{Path, PathBuf};
use vimu_core::augment::{augment_dataset, AugmentParams};
use vimu_core::classifier::{train_forest, ForestModel, TrainParams};
use vimu_core::eval::{emit_report, run_experiment_matrix, EvalReport, ExperimentSources, MatrixParams};
use vimu_core::features::{featurize_dataset, write_features_csv, EcdfSpec, FeatureVector};
use vimu_core::imu_sim::write_trace_csv;
use vimu_core::motion_io::Provenance;
use vimu_core::pipeline::{load_dataset, save_dataset, sliding_windows, Recording, WindowSpec};

fn load_and_validate(config: &Path) -> anyhow::Result<Result<LoadedConfig, i32>> {
    let loaded = LoadedConfig::load(config)?;
    let violations = validate(&loaded);
    if violations.is_empty() {
        Ok(Ok(loaded))
    } else {
        for v in &violations {
            eprintln!("violation: {v}");
        }
        eprintln!("{} violation(s)", violations.len());
        Ok(Err(1))
    }
}

pub fn cmd_validate(config: &Path) -> anyhow::Result<i32> {
    match load_and_validate(config)? {
        Ok(_) => {
            println!("ok");
            Ok(0)
        }
        Err(code) => Ok(code),
    }
}

#[derive(Serialize, Deserialize)]
struct TraceEntry {
    file: String,
    motion: String,
    placement: String,
    label: String,
    provenance: Provenance,
    sha256: String,
    from_cache: bool,
}

#[derive(Serialize, Deserialize)]
struct SynthManifest {
    entries: Vec<TraceEntry>,
    errors: Vec<String>,
}

pub fn cmd_synth(config: &Path, out: Option<PathBuf>) -> anyhow::Result<i32> {
    let loaded = match load_and_validate(config)? {
        Ok(l) => l,
        Err(code) => return Ok(code),
    };
    let out_dir = out.unwrap_or_else(|| loaded.output_dir().join("traces"));
    std::fs::create_dir_all(&out_dir)?;
    let cache = cache_dir(&loaded);

    let mut manifest = SynthManifest { entries: Vec::new(), errors: Vec::new() };
    let mut failed = false;
    for provenance in [Provenance::VirtualText, Provenance::VirtualVideo] {
        let (_, outcome) = assemble_virtual_dataset(&loaded, provenance, Some(&cache))?;
        for failure in &outcome.failures {
            failed = true;
            let line = format!("{}: {}", failure.motion_file.display(), failure.message);
            eprintln!("error: {line}");
            manifest.errors.push(line);
        }
        for t in &outcome.traces {
            let stem = t
                .motion_file
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| "motion".into());
            let rel = format!("{}/{}/{stem}__{}.csv", provenance.label(), t.label, t.placement);
            let path = out_dir.join(&rel);
            std::fs::create_dir_all(path.parent().expect("has parent"))?;
            let text = write_trace_csv(&t.trace);
            std::fs::write(&path, &text)?;
            manifest.entries.push(TraceEntry {
                file: rel,
                motion: t.motion_file.display().to_string(),
                placement: t.placement.clone(),
                label: t.label.clone(),
                provenance,
                sha256: hex::encode(sha2::Sha256::digest(text.as_bytes())),
                from_cache: t.from_cache,
            });
        }
    }
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    println!("wrote {} trace file(s) to {}", manifest.entries.len(), out_dir.display());
    Ok(if failed { 2 } else { 0 })
}

pub fn cmd_ingest(
    input: &Path,
    adapter: &Path,
    resample: Option<f64>,
    out: &Path,
) -> anyhow::Result<i32> {
    // Reuse the run ingestion with a synthetic single-file config context.
    let adapter_text = std::fs::read_to_string(adapter)
        .with_context(|| format!("reading adapter {}", adapter.display()))?;
    let spec: vimu_core::pipeline::AdapterSpec = serde_json::from_str(&adapter_text)?;
    let data = std::fs::read_to_string(input)?;
    let outcome = vimu_core::pipeline::ingest_column_mapped(&data, &spec, Provenance::Real)?;
    let mut rec = outcome.recording;
    if let Some(rate) = resample {
        rec = vimu_core::pipeline::resample_recording(&rec, rate)?;
    }
    std::fs::create_dir_all(out)?;
    std::fs::write(
        out.join("recording.json"),
        serde_json::to_string_pretty(&rec).expect("recording serializes"),
    )?;
    println!(
        "ingested {} samples ({} dropped, {} filtered) -> {}",
        rec.len(),
        outcome.dropped_rows,
        outcome.filtered_rows,
        out.join("recording.json").display()
    );
    Ok(0)
}

pub fn cmd_window(recording: &Path, spec: WindowSpec, out: &Path) -> anyhow::Result<i32> {
    let text = std::fs::read_to_string(recording)?;
    let rec: Recording = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", recording.display()))?;
    let ds = sliding_windows(&rec, &spec)?;
    save_dataset(&ds, out)?;
    println!("wrote {} window(s) to {}", ds.len(), out.display());
    Ok(0)
}

pub fn cmd_augment(dataset: &Path, out: &Path, params: AugmentParams) -> anyhow::Result<i32> {
    let ds = load_dataset(dataset)?;
    let augmented = augment_dataset(&ds, &params)?;
    save_dataset(&augmented, out)?;
    println!("{} -> {} window(s) at {}", ds.len(), augmented.len(), out.display());
    Ok(0)
}

pub fn cmd_featurize(dataset: &Path, out: &Path, spec: EcdfSpec) -> anyhow::Result<i32> {
    let ds = load_dataset(dataset)?;
    let channels = ds.uniform_layout()?.len();
    let features = featurize_dataset(&ds, &spec)?;
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(out, write_features_csv(&features, &spec, channels))?;
    println!("wrote {} feature row(s) to {}", features.len(), out.display());
    Ok(0)
}

/// Parse a features CSV written by `featurize`: numeric columns up to the
/// `label` column, then label/subject/provenance. Row index becomes the id.
fn parse_features_csv(text: &str) -> anyhow::Result<Vec<FeatureVector>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("empty features file"))?;
    let columns: Vec<&str> = header.split(',').collect();
    let label_idx = columns
        .iter()
        .position(|c| *c == "label")
        .ok_or_else(|| anyhow!("features header lacks a 'label' column"))?;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() {
            return Err(anyhow!("row {} has {} cells, header has {}", i + 2, cells.len(), columns.len()));
        }
        let values: Result<Vec<f64>, _> = cells[..label_idx].iter().map(|c| c.parse()).collect();
        let values = values.map_err(|e| anyhow!("row {}: {e}", i + 2))?;
        let provenance = match cells.get(label_idx + 2).copied().unwrap_or("real") {
            "real" => Provenance::Real,
            "virtual-text" => Provenance::VirtualText,
            "virtual-video" => Provenance::VirtualVideo,
            "augmented" => Provenance::Augmented,
            other => return Err(anyhow!("row {}: unknown provenance {other:?}", i + 2)),
        };
        let subject = cells.get(label_idx + 1).copied().unwrap_or("");
        out.push(FeatureVector {
            id: i as u64,
            values,
            label: cells[label_idx].to_string(),
            subject_id: (!subject.is_empty()).then(|| subject.to_string()),
            provenance,
        });
    }
    Ok(out)
}

pub fn cmd_train(features: &Path, out: &Path, params: TrainParams) -> anyhow::Result<i32> {
    let text = std::fs::read_to_string(features)?;
    let data = parse_features_csv(&text)?;
    let model = train_forest(&data, &params)?;
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(out, model.to_json())?;
    println!(
        "trained {} tree(s) on {} sample(s), model hash {}",
        params.n_trees,
        data.len(),
        model.model_hash()
    );
    let _ = ForestModel::from_json(&std::fs::read_to_string(out)?)?;
    Ok(0)
}

fn evaluate_config(loaded: &LoadedConfig) -> anyhow::Result<EvalReport> {
    let cache = cache_dir(loaded);
    let (virtual_text, _) = assemble_virtual_dataset(loaded, Provenance::VirtualText, Some(&cache))?;
    let (virtual_video, _) =
        assemble_virtual_dataset(loaded, Provenance::VirtualVideo, Some(&cache))?;
    let real = assemble_real_dataset(loaded)?;
    let cfg = &loaded.config;
    let params = MatrixParams {
        augment: cfg.augment.clone(),
        features: cfg.features,
        forest: cfg.forest,
        repeat_seeds: cfg.repeat_seeds.clone(),
        fractions: cfg.fractions.clone(),
    };
    Ok(run_experiment_matrix(
        &ExperimentSources { real, virtual_text, virtual_video },
        &cfg.parsed_configurations(),
        &cfg.fold,
        &params,
    )?)
}

pub fn cmd_eval(config: &Path, out: Option<PathBuf>) -> anyhow::Result<i32> {
    let loaded = match load_and_validate(config)? {
        Ok(l) => l,
        Err(code) => return Ok(code),
    };
    let report = evaluate_config(&loaded)?;
    let out = out.unwrap_or_else(|| loaded.output_dir().join("eval_report.json"));
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&out, report.to_json())?;
    println!("wrote {}", out.display());
    Ok(0)
}

pub fn cmd_report(report: &Path, out: &Path) -> anyhow::Result<i32> {
    let text = std::fs::read_to_string(report)?;
    let report = EvalReport::from_json(&text)?;
    emit_report(&report, out)?;
    println!("wrote results.csv, summary.md, per_class.csv to {}", out.display());
    Ok(0)
}

pub fn cmd_run(config: &Path, overrides: RunOverrides) -> anyhow::Result<i32> {
    let mut loaded = LoadedConfig::load(config)?;
    overrides.apply(&mut loaded);
    let violations = validate(&loaded);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("violation: {v}");
        }
        return Ok(1);
    }
    let output = execute_run(&loaded)?;
    println!("run complete: {} entries -> {}", output.report.entries.len(), output.report_dir.display());
    Ok(0)
}

/// Scalar config overrides exposed as CLI flags.
#[derive(Debug, Default, Clone)]
pub struct RunOverrides {
    pub output_dir: Option<PathBuf>,
    pub fractions: Option<Vec<f64>>,
    pub trees: Option<usize>,
    pub forest_seed: Option<u64>,
}

impl RunOverrides {
    fn apply(&self, loaded: &mut LoadedConfig) {
        if let Some(dir) = &self.output_dir {
            loaded.config.output_dir = dir.clone();
        }
        if let Some(fractions) = &self.fractions {
            loaded.config.fractions = fractions.clone();
        }
        if let Some(trees) = self.trees {
            loaded.config.forest.n_trees = trees;
        }
        if let Some(seed) = self.forest_seed {
            loaded.config.forest.seed = seed;
        }
    }
}

pub fn cmd_demo(out: &Path, spec: DemoSpec) -> anyhow::Result<i32> {
    let config_path = generate(out, &spec)?;
    println!("demo task written; config at {}", config_path.display());
    Ok(0)
}
