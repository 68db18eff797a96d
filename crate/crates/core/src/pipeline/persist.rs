//! Dataset persistence: `manifest.json` plus one `windows/NNNNNN.csv` per
//! window (columns in channel-layout order, one row per sample). The
//! manifest records a schema version, the dataset metadata, the layout, and
//! a sha-256 content hash per window file; loading re-verifies every hash.

use super::{Dataset, DatasetMeta, LabeledWindow, PipelineError};
use crate::augment::{ChannelLayout, SegmentMatrix};
use crate::motion_io::Provenance;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct WindowEntry {
    file: String,
    id: u64,
    label: String,
    subject_id: Option<String>,
    provenance: Provenance,
    origin_id: Option<u64>,
    rows: usize,
    sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetManifest {
    schema_version: u32,
    meta: DatasetMeta,
    layout: ChannelLayout,
    window_count: usize,
    windows: Vec<WindowEntry>,
}

fn window_csv(window: &LabeledWindow) -> String {
    let mut out = String::new();
    out.push_str(&window.segment.layout().channel_names().join(","));
    out.push('\n');
    for t in 0..window.segment.rows() {
        let row: Vec<String> = window.segment.row(t).iter().map(f64::to_string).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write a dataset directory. All windows must share one channel layout.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<(), PipelineError> {
    let layout = ds.uniform_layout()?.clone();
    let windows_dir = dir.join("windows");
    fs::create_dir_all(&windows_dir)?;

    let mut entries = Vec::with_capacity(ds.windows.len());
    for (i, w) in ds.windows.iter().enumerate() {
        let file = format!("windows/{i:06}.csv");
        let text = window_csv(w);
        fs::write(dir.join(&file), &text)?;
        entries.push(WindowEntry {
            file,
            id: w.id,
            label: w.label.clone(),
            subject_id: w.subject_id.clone(),
            provenance: w.provenance,
            origin_id: w.origin_id,
            rows: w.segment.rows(),
            sha256: sha256_hex(text.as_bytes()),
        });
    }
    let manifest = DatasetManifest {
        schema_version: SCHEMA_VERSION,
        meta: ds.meta.clone(),
        layout,
        window_count: entries.len(),
        windows: entries,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| PipelineError::CorruptManifest(e.to_string()))?;
    fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

fn parse_window_csv(
    text: &str,
    layout: &ChannelLayout,
    file: &str,
) -> Result<SegmentMatrix, PipelineError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            let names: Vec<&str> = line.split(',').collect();
            let expected = layout.channel_names();
            if names != expected.iter().map(String::as_str).collect::<Vec<_>>() {
                return Err(PipelineError::CorruptManifest(format!(
                    "{file}: header does not match the manifest layout"
                )));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
        let row = row.map_err(|_| {
            PipelineError::Parse { line: i + 1, message: format!("{file}: non-numeric cell") }
        })?;
        rows.push(row);
    }
    let t = rows.len();
    let values: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(SegmentMatrix::new(values, t, layout.clone())?)
}

/// Load a dataset directory written by [`save_dataset`], verifying the
/// schema version, window count, and every per-file content hash.
pub fn load_dataset(dir: &Path) -> Result<Dataset, PipelineError> {
    let manifest_text = fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: DatasetManifest = serde_json::from_str(&manifest_text)
        .map_err(|e| PipelineError::CorruptManifest(e.to_string()))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(PipelineError::CorruptManifest(format!(
            "unsupported schema version {}",
            manifest.schema_version
        )));
    }
    if manifest.window_count != manifest.windows.len() {
        return Err(PipelineError::CorruptManifest(format!(
            "window_count {} disagrees with {} listed windows",
            manifest.window_count,
            manifest.windows.len()
        )));
    }
    let mut windows = Vec::with_capacity(manifest.windows.len());
    for entry in &manifest.windows {
        let text = fs::read_to_string(dir.join(&entry.file))?;
        if sha256_hex(text.as_bytes()) != entry.sha256 {
            return Err(PipelineError::ChecksumMismatch(entry.file.clone()));
        }
        let segment = parse_window_csv(&text, &manifest.layout, &entry.file)?;
        if segment.rows() != entry.rows {
            return Err(PipelineError::CorruptManifest(format!(
                "{}: {} rows on disk, manifest says {}",
                entry.file,
                segment.rows(),
                entry.rows
            )));
        }
        let window = LabeledWindow::new(
            segment,
            entry.label.clone(),
            entry.subject_id.clone(),
            entry.provenance,
            entry.origin_id,
        );
        if window.id != entry.id {
            return Err(PipelineError::CorruptManifest(format!(
                "{}: recomputed window id does not match the manifest",
                entry.file
            )));
        }
        windows.push(window);
    }
    Ok(Dataset { windows, meta: manifest.meta })
}
