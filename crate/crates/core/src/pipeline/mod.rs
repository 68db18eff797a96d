//! Dataset assembly: ingestion of real recordings through column-mapped
//! adapters, resampling, sliding-window segmentation, training-configuration
//! composition, stratified subsampling, and dataset persistence.

mod adapter;
mod persist;

pub use adapter::{
    export_recording, ingest_column_mapped, AdapterSpec, ColumnRef, IngestOutcome, SensorColumns,
};
pub use persist::{load_dataset, save_dataset};

use crate::augment::{augment_dataset, AugmentError, AugmentParams, ChannelLayout, SegmentMatrix};
use crate::motion_io::Provenance;
use crate::rng::substream_tagged;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("adapter: {0}")]
    Adapter(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("ingest produced no rows")]
    EmptyIngest,
    #[error("invalid recording: {0}")]
    InvalidRecording(String),
    #[error("invalid window spec: {0}")]
    InvalidWindowSpec(String),
    #[error("recording rate {got} Hz does not match window spec rate {want} Hz")]
    RateMismatch { got: f64, want: f64 },
    #[error("real dataset is empty")]
    EmptyRealDataset,
    #[error("channel layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("fraction must be in (0, 1], got {0}")]
    BadFraction(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("manifest corrupt: {0}")]
    CorruptManifest(String),
    #[error("checksum mismatch for {0}")]
    ChecksumMismatch(String),
    #[error(transparent)]
    Augment(#[from] AugmentError),
}

/// A labeled, windowed segment with provenance. The id is a content hash,
/// so it is stable under reordering and across process runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledWindow {
    pub id: u64,
    pub segment: SegmentMatrix,
    pub label: String,
    pub subject_id: Option<String>,
    pub provenance: Provenance,
    /// For augmented windows, the id of the window they were derived from.
    pub origin_id: Option<u64>,
}

impl LabeledWindow {
    pub fn new(
        segment: SegmentMatrix,
        label: String,
        subject_id: Option<String>,
        provenance: Provenance,
        origin_id: Option<u64>,
    ) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(segment.content_bytes());
        hasher.update(label.as_bytes());
        hasher.update([0u8]);
        if let Some(s) = &subject_id {
            hasher.update(s.as_bytes());
        }
        hasher.update([0u8]);
        hasher.update(provenance.label().as_bytes());
        if let Some(o) = origin_id {
            hasher.update(o.to_le_bytes());
        }
        let digest = hasher.finalize();
        let id = u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"));
        LabeledWindow { id, segment, label, subject_id, provenance, origin_id }
    }
}

/// Reproducibility metadata carried alongside the windows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub sources: Vec<String>,
    pub window_spec: Option<WindowSpec>,
    pub seeds: Vec<u64>,
}

/// A set of labeled windows plus its provenance metadata.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub windows: Vec<LabeledWindow>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn labels(&self) -> BTreeSet<&str> {
        self.windows.iter().map(|w| w.label.as_str()).collect()
    }

    pub fn layout(&self) -> Option<&ChannelLayout> {
        self.windows.first().map(|w| w.segment.layout())
    }

    /// Errors unless every window shares one channel layout.
    pub fn uniform_layout(&self) -> Result<&ChannelLayout, PipelineError> {
        let first = self
            .layout()
            .ok_or_else(|| PipelineError::LayoutMismatch("dataset is empty".into()))?;
        for (i, w) in self.windows.iter().enumerate() {
            if w.segment.layout() != first {
                return Err(PipelineError::LayoutMismatch(format!(
                    "window {i} has a different layout than window 0"
                )));
            }
        }
        Ok(first)
    }

    /// Stable hex digest over window ids and labels, for run manifests.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for w in &self.windows {
            hasher.update(w.id.to_le_bytes());
            hasher.update(w.label.as_bytes());
            hasher.update([0u8]);
        }
        hex::encode(hasher.finalize())
    }
}

/// Per-sample or per-recording activity labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LabelTrack {
    PerSample(Vec<String>),
    Constant(String),
}

/// A continuous multichannel recording, the unit of ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub sample_rate: f64,
    /// `channels[sample]` is one row of C values.
    pub channels: Vec<Vec<f64>>,
    pub layout: ChannelLayout,
    pub labels: LabelTrack,
    pub subject_id: Option<String>,
    pub provenance: Provenance,
}

impl Recording {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.sample_rate > 0.0) {
            return Err(PipelineError::InvalidRecording(format!(
                "sample rate must be positive, got {}",
                self.sample_rate
            )));
        }
        let c = self.layout.len();
        for (i, row) in self.channels.iter().enumerate() {
            if row.len() != c {
                return Err(PipelineError::InvalidRecording(format!(
                    "sample {i} has {} channels, layout has {c}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(PipelineError::InvalidRecording(format!(
                    "non-finite value at sample {i}"
                )));
            }
        }
        if let LabelTrack::PerSample(labels) = &self.labels {
            if labels.len() != self.channels.len() {
                return Err(PipelineError::InvalidRecording(format!(
                    "{} labels for {} samples",
                    labels.len(),
                    self.channels.len()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn label_at(&self, sample: usize) -> &str {
        match &self.labels {
            LabelTrack::PerSample(l) => &l[sample],
            LabelTrack::Constant(l) => l,
        }
    }
}

/// Resample a recording to `target_rate` by per-channel linear interpolation
/// on the uniform source timeline (output starts at t = 0, never exceeding
/// the source duration). Per-sample labels take the nearest source sample.
pub fn resample_recording(rec: &Recording, target_rate: f64) -> Result<Recording, PipelineError> {
    if !(target_rate > 0.0) {
        return Err(PipelineError::InvalidRecording(format!(
            "target rate must be positive, got {target_rate}"
        )));
    }
    rec.validate()?;
    if rec.is_empty() {
        return Err(PipelineError::InvalidRecording("empty recording".into()));
    }
    let n = rec.len();
    let step = rec.sample_rate / target_rate;
    let mut count = ((n - 1) as f64 / step).floor() as usize + 1;
    while (count - 1) as f64 * step > (n - 1) as f64 {
        count -= 1;
    }
    let c = rec.layout.len();
    let mut channels = Vec::with_capacity(count);
    let mut labels = Vec::new();
    for i in 0..count {
        let pos = i as f64 * step;
        let idx = (pos.floor() as usize).min(n - 1);
        let frac = pos - idx as f64;
        let row: Vec<f64> = if idx + 1 >= n || frac == 0.0 {
            rec.channels[idx].clone()
        } else {
            (0..c)
                .map(|k| rec.channels[idx][k] * (1.0 - frac) + rec.channels[idx + 1][k] * frac)
                .collect()
        };
        channels.push(row);
        if let LabelTrack::PerSample(src) = &rec.labels {
            let nearest = (pos.round() as usize).min(n - 1);
            labels.push(src[nearest].clone());
        }
    }
    Ok(Recording {
        sample_rate: target_rate,
        channels,
        layout: rec.layout.clone(),
        labels: match &rec.labels {
            LabelTrack::PerSample(_) => LabelTrack::PerSample(labels),
            LabelTrack::Constant(l) => LabelTrack::Constant(l.clone()),
        },
        subject_id: rec.subject_id.clone(),
        provenance: rec.provenance,
    })
}

/// Sliding-window geometry. Defaults: 2 s windows, 1 s overlap, 20 Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSpec {
    pub window_seconds: f64,
    pub overlap_seconds: f64,
    pub rate: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec { window_seconds: 2.0, overlap_seconds: 1.0, rate: 20.0 }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.rate > 0.0) {
            return Err(PipelineError::InvalidWindowSpec(format!(
                "rate must be positive, got {}",
                self.rate
            )));
        }
        if !(self.overlap_seconds >= 0.0 && self.overlap_seconds < self.window_seconds) {
            return Err(PipelineError::InvalidWindowSpec(format!(
                "need 0 <= overlap < window, got overlap {} s and window {} s",
                self.overlap_seconds, self.window_seconds
            )));
        }
        for (what, seconds) in
            [("window", self.window_seconds), ("stride", self.window_seconds - self.overlap_seconds)]
        {
            let samples = seconds * self.rate;
            if samples < 0.5 || (samples - samples.round()).abs() > 1e-9 {
                return Err(PipelineError::InvalidWindowSpec(format!(
                    "{what} of {seconds} s at {} Hz is {samples} samples; must be a positive integer",
                    self.rate
                )));
            }
        }
        Ok(())
    }

    /// Samples per window (T).
    pub fn samples_per_window(&self) -> usize {
        (self.window_seconds * self.rate).round() as usize
    }

    /// Samples between window starts.
    pub fn stride(&self) -> usize {
        ((self.window_seconds - self.overlap_seconds) * self.rate).round() as usize
    }
}

/// Majority label of a window slice; ties break toward the label occurring
/// earliest in the window. Returns `None` when the majority label covers
/// less than half of the samples.
fn window_label(rec: &Recording, start: usize, len: usize) -> Option<String> {
    if let LabelTrack::Constant(l) = &rec.labels {
        return Some(l.clone());
    }
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new(); // label -> (count, first pos)
    for k in 0..len {
        let label = rec.label_at(start + k);
        let entry = counts.entry(label).or_insert((0, k));
        entry.0 += 1;
    }
    let (label, (count, _)) = counts
        .iter()
        .max_by(|a, b| (a.1 .0, std::cmp::Reverse(a.1 .1)).cmp(&(b.1 .0, std::cmp::Reverse(b.1 .1))))?;
    if 2 * count < len {
        return None;
    }
    Some((*label).to_string())
}

/// Segment a recording into labeled windows.
///
/// Window starts step by `stride` samples; the count is
/// `floor((N - T) / stride) + 1` for N >= T, else zero. Windows whose
/// majority label covers less than 50% of their samples are dropped.
pub fn sliding_windows(rec: &Recording, spec: &WindowSpec) -> Result<Dataset, PipelineError> {
    spec.validate()?;
    rec.validate()?;
    if (rec.sample_rate - spec.rate).abs() > 1e-9 {
        return Err(PipelineError::RateMismatch { got: rec.sample_rate, want: spec.rate });
    }
    let t = spec.samples_per_window();
    let stride = spec.stride();
    let n = rec.len();
    let mut windows = Vec::new();
    if n >= t {
        let count = (n - t) / stride + 1;
        for w in 0..count {
            let start = w * stride;
            let Some(label) = window_label(rec, start, t) else {
                continue;
            };
            let mut values = Vec::with_capacity(t * rec.layout.len());
            for k in 0..t {
                values.extend_from_slice(&rec.channels[start + k]);
            }
            let segment = SegmentMatrix::new(values, t, rec.layout.clone())?;
            windows.push(LabeledWindow::new(
                segment,
                label,
                rec.subject_id.clone(),
                rec.provenance,
                None,
            ));
        }
    }
    Ok(Dataset {
        windows,
        meta: DatasetMeta { sources: Vec::new(), window_spec: Some(*spec), seeds: Vec::new() },
    })
}

/// The five training configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TrainingConfig {
    RealOnly,
    RealPlusVirtualText,
    RealPlusVirtualVideo,
    RealPlusBothVirtual,
    RealPlusAugmentation,
}

impl TrainingConfig {
    pub const ALL: [TrainingConfig; 5] = [
        TrainingConfig::RealOnly,
        TrainingConfig::RealPlusVirtualText,
        TrainingConfig::RealPlusVirtualVideo,
        TrainingConfig::RealPlusBothVirtual,
        TrainingConfig::RealPlusAugmentation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrainingConfig::RealOnly => "real-only",
            TrainingConfig::RealPlusVirtualText => "real+virtual-text",
            TrainingConfig::RealPlusVirtualVideo => "real+virtual-video",
            TrainingConfig::RealPlusBothVirtual => "real+virtual-text+virtual-video",
            TrainingConfig::RealPlusAugmentation => "real+augmentation",
        }
    }

    pub fn parse(name: &str) -> Option<TrainingConfig> {
        TrainingConfig::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl std::fmt::Display for TrainingConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Restrict a virtual dataset to the activities and sensor channels of the
/// real dataset: windows with labels absent from the real set are excluded;
/// layouts are projected onto the real layout (an error if some real channel
/// is missing from the virtual layout).
fn filter_virtual(
    real: &Dataset,
    virtual_ds: &Dataset,
    out: &mut Vec<LabeledWindow>,
) -> Result<(), PipelineError> {
    if virtual_ds.is_empty() {
        return Ok(());
    }
    let real_layout = real.uniform_layout()?.clone();
    let real_labels = real.labels();
    let virt_layout = virtual_ds.uniform_layout()?;
    let identical = *virt_layout == real_layout;
    if !identical && virt_layout.projection_onto(&real_layout).is_none() {
        return Err(PipelineError::LayoutMismatch(
            "virtual dataset lacks channels present in the real dataset".into(),
        ));
    }
    for w in &virtual_ds.windows {
        if !real_labels.contains(w.label.as_str()) {
            continue;
        }
        if identical {
            out.push(w.clone());
        } else {
            let segment = w.segment.project_onto(&real_layout)?;
            out.push(LabeledWindow::new(
                segment,
                w.label.clone(),
                w.subject_id.clone(),
                w.provenance,
                w.origin_id,
            ));
        }
    }
    Ok(())
}

/// Assemble the training set for one configuration. Virtual windows are
/// restricted to the real dataset's activities and sensor channels; the
/// augmentation configuration expands the real part only.
pub fn compose_configuration(
    real: &Dataset,
    virtual_text: &Dataset,
    virtual_video: &Dataset,
    cfg: TrainingConfig,
    augment_params: &AugmentParams,
) -> Result<Dataset, PipelineError> {
    if real.is_empty() {
        return Err(PipelineError::EmptyRealDataset);
    }
    real.uniform_layout()?;
    let mut meta = real.meta.clone();
    let mut windows = real.windows.clone();
    match cfg {
        TrainingConfig::RealOnly => {}
        TrainingConfig::RealPlusVirtualText => {
            filter_virtual(real, virtual_text, &mut windows)?;
            meta.sources.extend(virtual_text.meta.sources.iter().cloned());
        }
        TrainingConfig::RealPlusVirtualVideo => {
            filter_virtual(real, virtual_video, &mut windows)?;
            meta.sources.extend(virtual_video.meta.sources.iter().cloned());
        }
        TrainingConfig::RealPlusBothVirtual => {
            filter_virtual(real, virtual_text, &mut windows)?;
            filter_virtual(real, virtual_video, &mut windows)?;
            meta.sources.extend(virtual_text.meta.sources.iter().cloned());
            meta.sources.extend(virtual_video.meta.sources.iter().cloned());
        }
        TrainingConfig::RealPlusAugmentation => {
            return Ok(augment_dataset(real, augment_params)?);
        }
    }
    Ok(Dataset { windows, meta })
}

/// Per-class stratified random subsample: `round(fraction * n_class)`
/// windows per present class, at least one each, deterministic under the
/// seed and invariant to input order (selection is keyed on window ids).
/// Selected windows keep their original relative order.
pub fn subsample_fraction(
    ds: &Dataset,
    fraction: f64,
    seed: u64,
) -> Result<Dataset, PipelineError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(PipelineError::BadFraction(fraction));
    }
    if fraction == 1.0 {
        return Ok(ds.clone());
    }
    let mut by_class: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
    for w in &ds.windows {
        by_class.entry(w.label.as_str()).or_default().push(w.id);
    }
    let mut selected: BTreeSet<u64> = BTreeSet::new();
    for (label, mut ids) in by_class {
        ids.sort_unstable();
        ids.dedup();
        let take = ((fraction * ids.len() as f64).round() as usize).clamp(1, ids.len());
        let mut rng = substream_tagged(seed, label);
        ids.shuffle(&mut rng);
        selected.extend(ids.into_iter().take(take));
    }
    let windows: Vec<LabeledWindow> =
        ds.windows.iter().filter(|w| selected.contains(&w.id)).cloned().collect();
    let mut meta = ds.meta.clone();
    meta.seeds.push(seed);
    Ok(Dataset { windows, meta })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> ChannelLayout {
        ChannelLayout::from_sensors(&["wrist_accel"])
    }

    fn recording(n: usize, labels: LabelTrack) -> Recording {
        Recording {
            sample_rate: 20.0,
            channels: (0..n).map(|k| vec![k as f64, 0.0, 1.0]).collect(),
            layout: layout(),
            labels,
            subject_id: Some("s1".into()),
            provenance: Provenance::Real,
        }
    }

    fn window(label: &str, subject: Option<&str>, provenance: Provenance, fill: f64) -> LabeledWindow {
        let values: Vec<f64> = (0..12).map(|i| fill + i as f64).collect();
        LabeledWindow::new(
            SegmentMatrix::new(values, 4, layout()).unwrap(),
            label.to_string(),
            subject.map(str::to_string),
            provenance,
            None,
        )
    }

    fn dataset(windows: Vec<LabeledWindow>) -> Dataset {
        Dataset { windows, meta: DatasetMeta::default() }
    }

    #[test]
    fn window_count_formula() {
        // N=100 samples at 20 Hz with the default 2 s / 1 s spec: T=40,
        // stride=20, starts at 0, 20, 40, 60.
        let rec = recording(100, LabelTrack::Constant("walk".into()));
        let spec = WindowSpec::default();
        assert_eq!(spec.samples_per_window(), 40);
        assert_eq!(spec.stride(), 20);
        let ds = sliding_windows(&rec, &spec).unwrap();
        assert_eq!(ds.len(), 4);
        for w in &ds.windows {
            assert_eq!(w.label, "walk");
            assert_eq!(w.segment.rows(), 40);
        }
    }

    #[test]
    fn too_short_recording_yields_no_windows() {
        let rec = recording(39, LabelTrack::Constant("walk".into()));
        let ds = sliding_windows(&rec, &WindowSpec::default()).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn window_count_matches_brute_force_enumeration() {
        // Sweep (N, T, stride); compare against naively placed windows.
        for t in [5usize, 8, 40] {
            for stride in [1usize, 3, 5, 8] {
                if stride > t {
                    continue; // overlap would be negative
                }
                for n in [0usize, 4, 5, 7, 39, 40, 41, 100, 123] {
                    let spec = WindowSpec {
                        window_seconds: t as f64,
                        overlap_seconds: (t - stride) as f64,
                        rate: 1.0,
                    };
                    if spec.validate().is_err() {
                        continue;
                    }
                    let rec = Recording {
                        sample_rate: 1.0,
                        channels: (0..n).map(|k| vec![k as f64, 0.0, 0.0]).collect(),
                        layout: layout(),
                        labels: LabelTrack::Constant("a".into()),
                        subject_id: None,
                        provenance: Provenance::Real,
                    };
                    let got = sliding_windows(&rec, &spec).unwrap().len();
                    let brute = {
                        let mut count = 0;
                        let mut start = 0;
                        while start + t <= n {
                            count += 1;
                            start += stride;
                        }
                        count
                    };
                    assert_eq!(got, brute, "n={n} t={t} stride={stride}");
                    if n >= t {
                        assert_eq!(got, (n - t) / stride + 1);
                    }
                }
            }
        }
    }

    #[test]
    fn majority_label_and_tie_rule() {
        // 40-sample window: 18 a's, 18 b's, 4 c's -> a and b tie; "a" occurs
        // first in the window, so it wins and covers < 50%: dropped.
        let mut labels = Vec::new();
        labels.extend(vec!["a".to_string(); 18]);
        labels.extend(vec!["b".to_string(); 18]);
        labels.extend(vec!["c".to_string(); 4]);
        let rec = recording(40, LabelTrack::PerSample(labels));
        let ds = sliding_windows(&rec, &WindowSpec::default()).unwrap();
        assert!(ds.is_empty(), "sub-majority window must be dropped");

        // 20/20 split: exactly half coverage is kept, earliest label wins.
        let mut labels = Vec::new();
        labels.extend(vec!["b".to_string(); 20]);
        labels.extend(vec!["a".to_string(); 20]);
        let rec = recording(40, LabelTrack::PerSample(labels));
        let ds = sliding_windows(&rec, &WindowSpec::default()).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.windows[0].label, "b");
    }

    #[test]
    fn uniform_labels_survive_windowing() {
        let rec = recording(80, LabelTrack::PerSample(vec!["jog".into(); 80]));
        let ds = sliding_windows(&rec, &WindowSpec::default()).unwrap();
        assert_eq!(ds.len(), 3);
        assert!(ds.windows.iter().all(|w| w.label == "jog"));
    }

    #[test]
    fn rate_mismatch_is_rejected() {
        let mut rec = recording(100, LabelTrack::Constant("walk".into()));
        rec.sample_rate = 50.0;
        assert!(matches!(
            sliding_windows(&rec, &WindowSpec::default()),
            Err(PipelineError::RateMismatch { .. })
        ));
    }

    #[test]
    fn resampling_halves_a_50hz_recording() {
        let rec = Recording {
            sample_rate: 40.0,
            channels: (0..81).map(|k| vec![k as f64, 2.0 * k as f64, 0.0]).collect(),
            layout: layout(),
            labels: LabelTrack::PerSample((0..81).map(|k| format!("l{}", k / 41)).collect()),
            subject_id: None,
            provenance: Provenance::Real,
        };
        let out = resample_recording(&rec, 20.0).unwrap();
        assert_eq!(out.len(), 41);
        for (i, row) in out.channels.iter().enumerate() {
            assert!((row[0] - 2.0 * i as f64).abs() < 1e-12);
        }
        if let LabelTrack::PerSample(labels) = &out.labels {
            assert_eq!(labels[0], "l0");
            assert_eq!(labels[40], "l1");
        } else {
            panic!("labels must stay per-sample");
        }
    }

    #[test]
    fn compose_real_only_is_identity() {
        let real = dataset(vec![window("a", Some("s1"), Provenance::Real, 0.0)]);
        let empty = Dataset::default();
        let out = compose_configuration(
            &real,
            &empty,
            &empty,
            TrainingConfig::RealOnly,
            &AugmentParams::default(),
        )
        .unwrap();
        assert_eq!(out.windows, real.windows);
    }

    #[test]
    fn compose_intersects_virtual_labels() {
        let real = dataset(vec![
            window("a", Some("s1"), Provenance::Real, 0.0),
            window("b", Some("s1"), Provenance::Real, 5.0),
        ]);
        let vt = dataset(vec![
            window("a", None, Provenance::VirtualText, 10.0),
            window("zz", None, Provenance::VirtualText, 20.0), // extra class
        ]);
        let empty = Dataset::default();
        let out = compose_configuration(
            &real,
            &vt,
            &empty,
            TrainingConfig::RealPlusVirtualText,
            &AugmentParams::default(),
        )
        .unwrap();
        assert_eq!(out.len(), 3);
        assert!(out.windows.iter().all(|w| w.label != "zz"));
    }

    #[test]
    fn compose_projects_virtual_layout_onto_real() {
        let real = dataset(vec![window("a", Some("s1"), Provenance::Real, 0.0)]);
        // Virtual windows carry an extra sensor; projection keeps the real
        // channels in real order.
        let wide = ChannelLayout::from_sensors(&["ankle_accel", "wrist_accel"]);
        let values: Vec<f64> = (0..24).map(|i| i as f64).collect();
        let vt = dataset(vec![LabeledWindow::new(
            SegmentMatrix::new(values, 4, wide).unwrap(),
            "a".into(),
            None,
            Provenance::VirtualText,
            None,
        )]);
        let empty = Dataset::default();
        let out = compose_configuration(
            &real,
            &vt,
            &empty,
            TrainingConfig::RealPlusVirtualText,
            &AugmentParams::default(),
        )
        .unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out.windows[1].segment.layout(), real.layout().unwrap());
        // Row 0 of the wide window is 0..6; wrist_accel occupies columns 3..6.
        assert_eq!(out.windows[1].segment.row(0), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn compose_rejects_unprojectable_layout() {
        let real = dataset(vec![window("a", Some("s1"), Provenance::Real, 0.0)]);
        let other = ChannelLayout::from_sensors(&["chest_accel"]);
        let vt = dataset(vec![LabeledWindow::new(
            SegmentMatrix::new(vec![0.0; 12], 4, other).unwrap(),
            "a".into(),
            None,
            Provenance::VirtualText,
            None,
        )]);
        let empty = Dataset::default();
        let err = compose_configuration(
            &real,
            &vt,
            &empty,
            TrainingConfig::RealPlusVirtualText,
            &AugmentParams::default(),
        );
        assert!(matches!(err, Err(PipelineError::LayoutMismatch(_))));
    }

    #[test]
    fn compose_augmentation_quadruples_real() {
        let real = dataset(
            (0..10).map(|i| window("a", Some("s1"), Provenance::Real, i as f64)).collect(),
        );
        let vt = dataset(vec![window("a", None, Provenance::VirtualText, 99.0)]);
        let out = compose_configuration(
            &real,
            &vt,
            &vt,
            TrainingConfig::RealPlusAugmentation,
            &AugmentParams::default(),
        )
        .unwrap();
        // Augmentation applies to the real part only: 4 x 10, no virtual.
        assert_eq!(out.len(), 40);
        assert!(out.windows.iter().all(|w| w.provenance != Provenance::VirtualText));
    }

    #[test]
    fn compose_requires_nonempty_real() {
        let empty = Dataset::default();
        assert!(matches!(
            compose_configuration(
                &empty,
                &empty,
                &empty,
                TrainingConfig::RealOnly,
                &AugmentParams::default()
            ),
            Err(PipelineError::EmptyRealDataset)
        ));
    }

    #[test]
    fn compose_sizes_add_up() {
        let real = dataset(vec![
            window("a", Some("s1"), Provenance::Real, 0.0),
            window("b", Some("s2"), Provenance::Real, 1.0),
        ]);
        let vt = dataset(vec![
            window("a", None, Provenance::VirtualText, 2.0),
            window("b", None, Provenance::VirtualText, 3.0),
        ]);
        let vv = dataset(vec![window("a", None, Provenance::VirtualVideo, 4.0)]);
        let out = compose_configuration(
            &real,
            &vt,
            &vv,
            TrainingConfig::RealPlusBothVirtual,
            &AugmentParams::default(),
        )
        .unwrap();
        assert_eq!(out.len(), real.len() + vt.len() + vv.len());
    }

    #[test]
    fn subsample_full_fraction_is_identity() {
        let ds = dataset(
            (0..7).map(|i| window("a", Some("s1"), Provenance::Real, i as f64)).collect(),
        );
        let out = subsample_fraction(&ds, 1.0, 5).unwrap();
        assert_eq!(out.windows, ds.windows);
    }

    #[test]
    fn subsample_takes_a_tenth_per_class() {
        let ds = dataset(
            (0..100).map(|i| window("a", Some("s1"), Provenance::Real, i as f64)).collect(),
        );
        let out = subsample_fraction(&ds, 0.1, 5).unwrap();
        assert_eq!(out.len(), 10);
    }

    #[test]
    fn subsample_keeps_at_least_one_per_class() {
        let mut windows: Vec<LabeledWindow> =
            (0..50).map(|i| window("big", Some("s1"), Provenance::Real, i as f64)).collect();
        windows.push(window("tiny", Some("s1"), Provenance::Real, 999.0));
        let out = subsample_fraction(&dataset(windows), 0.1, 1).unwrap();
        assert_eq!(out.len(), 5 + 1);
        assert!(out.windows.iter().any(|w| w.label == "tiny"));
    }

    #[test]
    fn subsample_seeds_select_different_windows() {
        let ds = dataset(
            (0..40).map(|i| window("a", Some("s1"), Provenance::Real, i as f64)).collect(),
        );
        let a = subsample_fraction(&ds, 0.25, 1).unwrap();
        let b = subsample_fraction(&ds, 0.25, 2).unwrap();
        assert_eq!(a.len(), 10);
        assert_eq!(b.len(), 10);
        let ids_a: BTreeSet<u64> = a.windows.iter().map(|w| w.id).collect();
        let ids_b: BTreeSet<u64> = b.windows.iter().map(|w| w.id).collect();
        assert_ne!(ids_a, ids_b);
    }

    #[test]
    fn subsample_is_invariant_to_input_order() {
        let windows: Vec<LabeledWindow> = (0..30)
            .map(|i| window(if i % 2 == 0 { "a" } else { "b" }, Some("s1"), Provenance::Real, i as f64))
            .collect();
        let ds = dataset(windows.clone());
        let mut reversed = windows;
        reversed.reverse();
        let ds_rev = dataset(reversed);
        let a: BTreeSet<u64> =
            subsample_fraction(&ds, 0.2, 9).unwrap().windows.iter().map(|w| w.id).collect();
        let b: BTreeSet<u64> =
            subsample_fraction(&ds_rev, 0.2, 9).unwrap().windows.iter().map(|w| w.id).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_fraction_is_rejected() {
        let ds = dataset(vec![window("a", None, Provenance::Real, 0.0)]);
        assert!(matches!(subsample_fraction(&ds, 0.0, 1), Err(PipelineError::BadFraction(_))));
        assert!(matches!(subsample_fraction(&ds, 1.5, 1), Err(PipelineError::BadFraction(_))));
    }

    #[test]
    fn overlapping_spec_validation() {
        let bad = WindowSpec { window_seconds: 1.0, overlap_seconds: 1.0, rate: 20.0 };
        assert!(bad.validate().is_err());
        let bad = WindowSpec { window_seconds: 1.0, overlap_seconds: 0.33, rate: 20.0 };
        assert!(bad.validate().is_err(), "non-integer stride must be rejected");
    }
}
