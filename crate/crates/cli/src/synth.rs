//! Virtual IMU synthesis over directories of motion files, with a
//! content-addressed trace cache.
//!
//! Motion files live under `<motion_dir>/<activity>/<take>.{bvh,csv}`; the
//! activity label is the subdirectory name. Each motion runs through
//! inverse kinematics once, then one sensor per placement is simulated and
//! resampled to the window rate. Traces are cached keyed by the hash of the
//! motion bytes, skeleton bytes (for CSV motions), placement and settings,
//! so reruns and deleted cache entries reproduce identical bytes.

use crate::config::{IngestSettings, LoadedConfig, MotionSource, SimulationSettings, UpAxis};
use anyhow::{anyhow, Context};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use vimu_core::imu_sim::{
    parse_trace_csv, resample_trace, simulate_imu, write_trace_csv, ImuTrace, SensorConfig,
};
use vimu_core::kinematics::inverse_kinematics;
use vimu_core::math::Vec3;
use vimu_core::motion_io::{
    forward_kinematics, parse_bvh, parse_joint_csv, JointCsvSpec, MotionSequence, Provenance,
    Skeleton,
};
use vimu_core::pipeline::{sliding_windows, Dataset, LabelTrack, Recording, WindowSpec};
use vimu_core::rng::{hash_str, sub_seed};

/// One synthesized sensor stream, tagged with where it came from.
#[derive(Debug, Clone)]
pub struct SynthTrace {
    pub motion_file: PathBuf,
    pub label: String,
    pub placement: String,
    pub trace: ImuTrace,
    pub from_cache: bool,
}

/// Per-file failure; the batch continues past these.
#[derive(Debug, Clone)]
pub struct SynthFailure {
    pub motion_file: PathBuf,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct SynthOutcome {
    pub traces: Vec<SynthTrace>,
    pub failures: Vec<SynthFailure>,
}

/// Map y-up coordinates to the toolkit's z-up convention (+90 degrees
/// about x: (x, y, z) -> (x, -z, y)).
fn to_z_up(v: Vec3) -> Vec3 {
    Vec3::new(v.x, -v.z, v.y)
}

fn apply_ingest(mut motion: MotionSequence, ingest: &IngestSettings) -> MotionSequence {
    if ingest.up_axis == UpAxis::Y {
        for frame in &mut motion.positions {
            for p in frame.iter_mut() {
                *p = to_z_up(*p);
            }
        }
    }
    if ingest.scale != 1.0 {
        motion = motion.scaled(ingest.scale);
    }
    motion
}

/// Motion files under a source dir: (path, activity label), sorted by path
/// for deterministic batch order.
pub fn discover_motions(dir: &Path) -> anyhow::Result<Vec<(PathBuf, String)>> {
    let mut out = Vec::new();
    for class_entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let class_entry = class_entry?;
        if !class_entry.file_type()?.is_dir() {
            continue;
        }
        let label = class_entry.file_name().to_string_lossy().to_string();
        for file in std::fs::read_dir(class_entry.path())? {
            let path = file?.path();
            let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
            if matches!(ext, "bvh" | "csv") {
                out.push((path, label.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

struct SharedSkeleton {
    skeleton: Skeleton,
    bytes_hash: String,
}

fn load_shared_skeleton(
    loaded: &LoadedConfig,
    source: &MotionSource,
) -> anyhow::Result<Option<SharedSkeleton>> {
    let Some(path) = &source.skeleton else {
        return Ok(None);
    };
    let path = loaded.resolve(path);
    let bytes =
        std::fs::read(&path).with_context(|| format!("reading skeleton {}", path.display()))?;
    let text = String::from_utf8_lossy(&bytes);
    let (skeleton, _) = parse_bvh(&text)
        .map_err(|e| anyhow!("skeleton {}: {e}", path.display()))?;
    Ok(Some(SharedSkeleton { skeleton, bytes_hash: hex::encode(Sha256::digest(&bytes)) }))
}

/// Load a motion file into (skeleton, motion). BVH files carry their own
/// hierarchy; CSV joint trajectories use the shared skeleton.
fn load_motion(
    path: &Path,
    label: &str,
    provenance: Provenance,
    shared: Option<&SharedSkeleton>,
    source: &MotionSource,
    ingest: &IngestSettings,
) -> anyhow::Result<(Skeleton, MotionSequence)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let (skeleton, mut motion) = match ext {
        "bvh" => {
            let (skeleton, pose) = parse_bvh(&text)?;
            let motion = forward_kinematics(&skeleton, &pose)?;
            (skeleton, motion)
        }
        "csv" => {
            let shared = shared.ok_or_else(|| {
                anyhow!("CSV motion {} needs a skeleton in the motion source", path.display())
            })?;
            let spec = JointCsvSpec {
                joints: shared.skeleton.joint_names().to_vec(),
                frame_rate: source.frame_rate,
                provenance,
                activity_label: Some(label.to_string()),
                subject_id: None,
            };
            (shared.skeleton.clone(), parse_joint_csv(&text, &spec)?)
        }
        other => return Err(anyhow!("unsupported motion extension {other:?}")),
    };
    motion.provenance = provenance;
    motion.activity_label = Some(label.to_string());
    motion = apply_ingest(motion, ingest);
    Ok((skeleton, motion))
}

/// Cache key for one (motion file, placement) trace.
fn cache_key(
    motion_bytes_hash: &str,
    skeleton_hash: Option<&str>,
    placement: &str,
    sim: &SimulationSettings,
    ingest: &IngestSettings,
    rate: f64,
) -> String {
    let mut hasher = Sha256::new();
    hasher.update(motion_bytes_hash.as_bytes());
    if let Some(h) = skeleton_hash {
        hasher.update(h.as_bytes());
    }
    hasher.update(placement.as_bytes());
    hasher.update(serde_json::to_string(sim).expect("settings serialize").as_bytes());
    hasher.update(serde_json::to_string(ingest).expect("settings serialize").as_bytes());
    hasher.update(rate.to_le_bytes());
    hex::encode(hasher.finalize())
}

/// Synthesize traces for every (motion, placement) pair of a source.
/// Failures are collected per file; good files still produce traces.
pub fn synthesize_source(
    loaded: &LoadedConfig,
    source: &MotionSource,
    provenance: Provenance,
    cache_dir: Option<&Path>,
) -> anyhow::Result<SynthOutcome> {
    let cfg = &loaded.config;
    let dir = loaded.resolve(&source.motion_dir);
    let motions = discover_motions(&dir)?;
    let shared = load_shared_skeleton(loaded, source)?;
    let rate = cfg.window.rate;

    let mut outcome = SynthOutcome::default();
    for (path, label) in motions {
        match synthesize_motion(
            &path,
            &label,
            provenance,
            shared.as_ref(),
            source,
            cfg,
            cache_dir,
            rate,
        ) {
            Ok(traces) => outcome.traces.extend(traces),
            Err(e) => outcome
                .failures
                .push(SynthFailure { motion_file: path, message: format!("{e:#}") }),
        }
    }
    Ok(outcome)
}

#[allow(clippy::too_many_arguments)]
fn synthesize_motion(
    path: &Path,
    label: &str,
    provenance: Provenance,
    shared: Option<&SharedSkeleton>,
    source: &MotionSource,
    cfg: &crate::config::ExperimentConfig,
    cache_dir: Option<&Path>,
    rate: f64,
) -> anyhow::Result<Vec<SynthTrace>> {
    let motion_bytes = std::fs::read(path)?;
    let motion_hash = hex::encode(Sha256::digest(&motion_bytes));
    let skeleton_hash = shared.map(|s| s.bytes_hash.clone());

    // Serve every placement from cache when possible; IK runs only when at
    // least one placement misses.
    let mut cached: Vec<Option<ImuTrace>> = Vec::with_capacity(cfg.placements.len());
    for placement in &cfg.placements {
        let entry = cache_dir.map(|d| {
            d.join("synth").join(format!(
                "{}.csv",
                cache_key(&motion_hash, skeleton_hash.as_deref(), placement, &cfg.simulation, &cfg.ingest, rate)
            ))
        });
        let trace = match entry {
            Some(p) if p.exists() => {
                let text = std::fs::read_to_string(&p)?;
                let mut t = parse_trace_csv(&text, rate, 0, provenance)
                    .map_err(|e| anyhow!("cache entry {}: {e}", p.display()))?;
                t.activity_label = Some(label.to_string());
                Some(t)
            }
            _ => None,
        };
        cached.push(trace);
    }

    let mut lazy: Option<(Skeleton, MotionSequence, vimu_core::kinematics::RotationTrack)> = None;
    let mut out = Vec::with_capacity(cfg.placements.len());
    for (placement, cached_trace) in cfg.placements.iter().zip(cached) {
        if let Some(trace) = cached_trace {
            out.push(SynthTrace {
                motion_file: path.to_path_buf(),
                label: label.to_string(),
                placement: placement.clone(),
                trace,
                from_cache: true,
            });
            continue;
        }
        if lazy.is_none() {
            let (skeleton, motion) = load_motion(path, label, provenance, shared, source, &cfg.ingest)?;
            let ik = inverse_kinematics(&skeleton, &motion)?;
            lazy = Some((skeleton, motion, ik.track));
        }
        let (skeleton, motion, track) = lazy.as_ref().expect("filled above");
        let joint_index = skeleton.joint_index(placement).ok_or_else(|| {
            anyhow!("placement '{placement}' is not a joint of {}", path.display())
        })?;
        let sensor = SensorConfig {
            joint_index,
            gravity: cfg.simulation.gravity,
            accel_noise_std: cfg.simulation.accel_noise_std,
            gyro_noise_std: cfg.simulation.gyro_noise_std,
            accel_bias_range: cfg.simulation.accel_bias_range,
            gyro_bias_range: cfg.simulation.gyro_bias_range,
            seed: sub_seed(cfg.simulation.seed, hash_str(&format!("{motion_hash}/{placement}"))),
        };
        let trace = simulate_imu(motion, track, &sensor)?;
        let trace = resample_trace(&trace, rate)?;
        if let Some(d) = cache_dir {
            let key = cache_key(&motion_hash, skeleton_hash.as_deref(), placement, &cfg.simulation, &cfg.ingest, rate);
            let p = d.join("synth").join(format!("{key}.csv"));
            std::fs::create_dir_all(p.parent().expect("has parent"))?;
            std::fs::write(&p, write_trace_csv(&trace))?;
        }
        out.push(SynthTrace {
            motion_file: path.to_path_buf(),
            label: label.to_string(),
            placement: placement.clone(),
            trace,
            from_cache: false,
        });
    }
    Ok(out)
}

/// Merge the per-placement traces of one motion into a single recording:
/// per placement, an accel triple then a gyro triple, in placement order.
pub fn traces_to_recording(
    placements: &[String],
    traces: &[&ImuTrace],
    label: &str,
    provenance: Provenance,
) -> anyhow::Result<Recording> {
    if placements.len() != traces.len() {
        return Err(anyhow!("{} placements but {} traces", placements.len(), traces.len()));
    }
    let n = traces
        .first()
        .map(|t| t.len())
        .ok_or_else(|| anyhow!("no traces to merge"))?;
    if traces.iter().any(|t| t.len() != n) {
        return Err(anyhow!("trace lengths differ across placements"));
    }
    let sensor_names: Vec<String> = placements
        .iter()
        .flat_map(|p| [format!("{p}_accel"), format!("{p}_gyro")])
        .collect();
    let layout = vimu_core::augment::ChannelLayout::from_sensors(&sensor_names);
    let mut channels = Vec::with_capacity(n);
    for k in 0..n {
        let mut row = Vec::with_capacity(placements.len() * 6);
        for t in traces {
            let a = t.accel[k];
            let g = t.gyro[k];
            row.extend_from_slice(&[a.x, a.y, a.z, g.x, g.y, g.z]);
        }
        channels.push(row);
    }
    Ok(Recording {
        sample_rate: traces[0].sample_rate,
        channels,
        layout,
        labels: LabelTrack::Constant(label.to_string()),
        subject_id: None,
        provenance,
    })
}

/// Window every synthesized motion and concatenate into one dataset.
pub fn windows_from_synth(
    outcome: &SynthOutcome,
    placements: &[String],
    window: &WindowSpec,
    provenance: Provenance,
) -> anyhow::Result<Dataset> {
    use std::collections::BTreeMap;
    let mut by_motion: BTreeMap<&Path, Vec<&SynthTrace>> = BTreeMap::new();
    for t in &outcome.traces {
        by_motion.entry(t.motion_file.as_path()).or_default().push(t);
    }
    let mut combined = Dataset::default();
    for (motion_file, mut traces) in by_motion {
        traces.sort_by_key(|t| {
            placements.iter().position(|p| *p == t.placement).unwrap_or(usize::MAX)
        });
        if traces.len() != placements.len() {
            return Err(anyhow!(
                "{}: {} traces for {} placements",
                motion_file.display(),
                traces.len(),
                placements.len()
            ));
        }
        let label = traces[0].label.clone();
        let refs: Vec<&ImuTrace> = traces.iter().map(|t| &t.trace).collect();
        let recording = traces_to_recording(placements, &refs, &label, provenance)?;
        let ds = sliding_windows(&recording, window)?;
        combined.windows.extend(ds.windows);
        combined.meta.sources.push(motion_file.display().to_string());
    }
    combined.meta.window_spec = Some(*window);
    Ok(combined)
}
