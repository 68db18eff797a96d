//! The end-to-end run: ingest real files, synthesize virtual datasets,
//! evaluate the experiment matrix, and emit report files plus the run
//! manifest. Also hosts the smaller building blocks the standalone
//! subcommands reuse.

use crate::config::LoadedConfig;
use crate::manifest::{Artifact, RunManifest, StageRecord};
use crate::synth::{synthesize_source, windows_from_synth, SynthOutcome};
use anyhow::{anyhow, Context};
use std::path::{Path, PathBuf};
use vimu_core::eval::{emit_report, run_experiment_matrix, EvalReport, ExperimentSources, MatrixParams};
use vimu_core::motion_io::Provenance;
use vimu_core::pipeline::{
    ingest_column_mapped, resample_recording, save_dataset, sliding_windows, AdapterSpec, Dataset,
};

/// Cache directory: `VIMU_CACHE_DIR` overrides `<output_dir>/cache`.
pub fn cache_dir(loaded: &LoadedConfig) -> PathBuf {
    match std::env::var_os("VIMU_CACHE_DIR") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => loaded.output_dir().join("cache"),
    }
}

/// Ingest one real source file through its adapter, resampled to the
/// window rate.
pub fn ingest_real_source(
    loaded: &LoadedConfig,
    file: &Path,
    adapter: &Path,
) -> anyhow::Result<(vimu_core::pipeline::Recording, usize, usize)> {
    let adapter_text = std::fs::read_to_string(loaded.resolve(adapter))
        .with_context(|| format!("reading adapter {}", adapter.display()))?;
    let spec: AdapterSpec = serde_json::from_str(&adapter_text)
        .with_context(|| format!("parsing adapter {}", adapter.display()))?;
    let data = std::fs::read_to_string(loaded.resolve(file))
        .with_context(|| format!("reading {}", file.display()))?;
    let outcome = ingest_column_mapped(&data, &spec, Provenance::Real)
        .with_context(|| format!("ingesting {}", file.display()))?;
    let rec = resample_recording(&outcome.recording, loaded.config.window.rate)?;
    Ok((rec, outcome.dropped_rows, outcome.filtered_rows))
}

/// Ingest and window every real source into one dataset.
pub fn assemble_real_dataset(loaded: &LoadedConfig) -> anyhow::Result<Dataset> {
    let mut combined = Dataset::default();
    for source in &loaded.config.sources.real {
        let (rec, dropped, filtered) = ingest_real_source(loaded, &source.file, &source.adapter)?;
        if dropped + filtered > 0 {
            eprintln!(
                "  {}: dropped {dropped} unparseable rows, filtered {filtered} off-dictionary rows",
                source.file.display()
            );
        }
        let ds = sliding_windows(&rec, &loaded.config.window)?;
        combined.windows.extend(ds.windows);
        combined.meta.sources.push(source.file.display().to_string());
    }
    combined.meta.window_spec = Some(loaded.config.window);
    if combined.is_empty() {
        return Err(anyhow!("real sources produced no windows"));
    }
    Ok(combined)
}

/// Synthesize and window one virtual source; failures abort only if no
/// motion survived.
pub fn assemble_virtual_dataset(
    loaded: &LoadedConfig,
    provenance: Provenance,
    cache: Option<&Path>,
) -> anyhow::Result<(Dataset, SynthOutcome)> {
    let source = match provenance {
        Provenance::VirtualText => loaded.config.sources.virtual_text.as_ref(),
        Provenance::VirtualVideo => loaded.config.sources.virtual_video.as_ref(),
        _ => None,
    };
    let Some(source) = source else {
        return Ok((Dataset::default(), SynthOutcome::default()));
    };
    let outcome = synthesize_source(loaded, source, provenance, cache)?;
    let dataset =
        windows_from_synth(&outcome, &loaded.config.placements, &loaded.config.window, provenance)?;
    Ok((dataset, outcome))
}

fn dataset_stage_artifact(dir: &Path, name: &str) -> std::io::Result<Artifact> {
    Artifact::from_file(&format!("datasets/{name}/manifest.json"), &dir.join("manifest.json"))
}

pub struct RunOutput {
    pub report: EvalReport,
    pub report_dir: PathBuf,
}

/// Execute the full pipeline for a validated config.
pub fn execute_run(loaded: &LoadedConfig) -> anyhow::Result<RunOutput> {
    let cfg = &loaded.config;
    let out_dir = loaded.output_dir();
    std::fs::create_dir_all(&out_dir)?;
    let cache = cache_dir(loaded);
    let mut manifest = RunManifest::new(loaded.config_hash.clone());

    // Stage: synthesize virtual IMU datasets.
    eprintln!("stage synth: virtual IMU synthesis");
    let (virtual_text, text_outcome) =
        assemble_virtual_dataset(loaded, Provenance::VirtualText, Some(&cache))
            .context("stage synth (virtual-text)")?;
    let (virtual_video, video_outcome) =
        assemble_virtual_dataset(loaded, Provenance::VirtualVideo, Some(&cache))
            .context("stage synth (virtual-video)")?;
    for f in text_outcome.failures.iter().chain(&video_outcome.failures) {
        let line = format!("synth {}: {}", f.motion_file.display(), f.message);
        eprintln!("  warning: {line}");
        manifest.errors.push(line);
    }

    // Stage: ingest real recordings.
    eprintln!("stage ingest: real recordings");
    let real = assemble_real_dataset(loaded).context("stage ingest")?;

    // Persist the windowed datasets for audit.
    let datasets_dir = out_dir.join("datasets");
    let mut dataset_artifacts = Vec::new();
    for (name, ds) in
        [("real", &real), ("virtual-text", &virtual_text), ("virtual-video", &virtual_video)]
    {
        if ds.is_empty() {
            continue;
        }
        let dir = datasets_dir.join(name);
        save_dataset(ds, &dir).with_context(|| format!("stage persist ({name})"))?;
        dataset_artifacts.push(dataset_stage_artifact(&dir, name)?);
    }
    manifest.stages.push(StageRecord {
        name: "assemble".into(),
        inputs: vec![],
        outputs: dataset_artifacts.clone(),
    });
    eprintln!(
        "  windows: real {}, virtual-text {}, virtual-video {}",
        real.len(),
        virtual_text.len(),
        virtual_video.len()
    );

    // Stage: the experiment matrix.
    eprintln!("stage eval: experiment matrix");
    let configs = cfg.parsed_configurations();
    let params = MatrixParams {
        augment: cfg.augment.clone(),
        features: cfg.features,
        forest: cfg.forest,
        repeat_seeds: cfg.repeat_seeds.clone(),
        fractions: cfg.fractions.clone(),
    };
    let sources = ExperimentSources { real, virtual_text, virtual_video };
    let report =
        run_experiment_matrix(&sources, &configs, &cfg.fold, &params).context("stage eval")?;

    // Stage: emit report files.
    eprintln!("stage report: writing artifacts");
    std::fs::write(out_dir.join("eval_report.json"), report.to_json()).context("stage report")?;
    emit_report(&report, &out_dir).context("stage report")?;
    let mut outputs = vec![];
    for name in ["eval_report.json", "results.csv", "summary.md", "per_class.csv"] {
        outputs.push(Artifact::from_file(name, &out_dir.join(name))?);
    }
    manifest.stages.push(StageRecord {
        name: "evaluate".into(),
        inputs: dataset_artifacts,
        outputs,
    });

    manifest.finish_and_write(&out_dir.join("run_manifest.json"))?;
    Ok(RunOutput { report, report_dir: out_dir })
}
