//! Declarative experiment configuration.
//!
//! One JSON document drives the whole workflow; relative paths resolve
//! against the config file's directory. `validate` lists every violation
//! with its config path instead of stopping at the first.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use vimu_core::augment::AugmentParams;
use vimu_core::classifier::TrainParams;
use vimu_core::eval::FoldSpec;
use vimu_core::features::EcdfSpec;
use vimu_core::math::Vec3;
use vimu_core::pipeline::{TrainingConfig, WindowSpec};

/// One real-sensor file plus the adapter spec describing its columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealSource {
    pub file: PathBuf,
    pub adapter: PathBuf,
}

/// A directory of motion files, one subdirectory per activity label.
/// `.bvh` files carry their own skeleton; `.csv` joint trajectories need
/// the shared `skeleton` BVH for joint order and offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSource {
    pub motion_dir: PathBuf,
    #[serde(default)]
    pub skeleton: Option<PathBuf>,
    /// Frame rate for CSV motions that lack a `# frame_rate=` comment.
    #[serde(default)]
    pub frame_rate: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sources {
    #[serde(default)]
    pub real: Vec<RealSource>,
    #[serde(default)]
    pub virtual_text: Option<MotionSource>,
    #[serde(default)]
    pub virtual_video: Option<MotionSource>,
}

/// Which world axis points up in the motion files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpAxis {
    #[default]
    Z,
    Y,
}

/// Units and orientation of ingested motion files. Both are exposed rather
/// than guessed; accelerations scale quadratically with the unit choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestSettings {
    /// Multiplier taking motion-file units to meters.
    pub scale: f64,
    pub up_axis: UpAxis,
}

impl Default for IngestSettings {
    fn default() -> Self {
        IngestSettings { scale: 1.0, up_axis: UpAxis::Z }
    }
}

/// Sensor-simulation settings shared by every placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationSettings {
    pub gravity: Vec3,
    pub accel_noise_std: f64,
    pub gyro_noise_std: f64,
    pub accel_bias_range: f64,
    pub gyro_bias_range: f64,
    pub seed: u64,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        SimulationSettings {
            gravity: Vec3::new(0.0, 0.0, -9.81),
            accel_noise_std: 0.05,
            gyro_noise_std: 0.01,
            accel_bias_range: 0.0,
            gyro_bias_range: 0.0,
            seed: 0,
        }
    }
}

fn default_fractions() -> Vec<f64> {
    vec![1.0, 0.1]
}

fn default_repeat_seeds() -> Vec<u64> {
    vec![17, 29, 43]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    /// Skeleton joints that carry a virtual sensor.
    pub placements: Vec<String>,
    pub sources: Sources,
    #[serde(default)]
    pub ingest: IngestSettings,
    #[serde(default)]
    pub simulation: SimulationSettings,
    #[serde(default)]
    pub window: WindowSpec,
    #[serde(default)]
    pub augment: AugmentParams,
    #[serde(default)]
    pub features: EcdfSpec,
    #[serde(default)]
    pub forest: TrainParams,
    pub fold: FoldSpec,
    /// Training configuration names; validated against the known five.
    pub configurations: Vec<String>,
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    #[serde(default = "default_repeat_seeds")]
    pub repeat_seeds: Vec<u64>,
}

/// A config loaded from disk, remembering where relative paths anchor.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base: PathBuf,
    /// Hash of the raw config bytes, for run manifests.
    pub config_hash: String,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> anyhow::Result<LoadedConfig> {
        let bytes = std::fs::read(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let config: ExperimentConfig = serde_json::from_slice(&bytes)
            .map_err(|e| anyhow::anyhow!("config {} is not valid: {e}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        let config_hash = hex::encode(sha2::Sha256::digest(&bytes));
        Ok(LoadedConfig { config, base, config_hash })
    }

    /// Resolve a config-relative path.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output_dir)
    }
}

use sha2::Digest;

/// One validation failure, addressed by its config path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl ExperimentConfig {
    pub fn parsed_configurations(&self) -> Vec<TrainingConfig> {
        self.configurations
            .iter()
            .filter_map(|name| TrainingConfig::parse(name))
            .collect()
    }

    fn needs_virtual_text(&self) -> bool {
        self.parsed_configurations().iter().any(|c| {
            matches!(c, TrainingConfig::RealPlusVirtualText | TrainingConfig::RealPlusBothVirtual)
        })
    }

    fn needs_virtual_video(&self) -> bool {
        self.parsed_configurations().iter().any(|c| {
            matches!(c, TrainingConfig::RealPlusVirtualVideo | TrainingConfig::RealPlusBothVirtual)
        })
    }
}

/// Schema, invariant and path pre-flight. Returns every violation found.
pub fn validate(loaded: &LoadedConfig) -> Vec<Violation> {
    let cfg = &loaded.config;
    let mut violations = Vec::new();
    let mut push = |path: &str, message: String| {
        violations.push(Violation { path: path.to_string(), message });
    };

    if cfg.placements.is_empty() {
        push("placements", "at least one sensor placement is required".into());
    }
    if let Err(e) = cfg.window.validate() {
        push("window", e.to_string());
    }
    if let Err(e) = cfg.fold.validate() {
        push("fold", e.to_string());
    }
    if let Err(e) = cfg.augment.validate() {
        push("augment", e.to_string());
    }
    if let Err(e) = cfg.features.validate() {
        push("features", e.to_string());
    }
    if let Err(e) = cfg.forest.validate() {
        push("forest", e.to_string());
    }
    if cfg.simulation.accel_noise_std < 0.0 || cfg.simulation.gyro_noise_std < 0.0 {
        push("simulation", "noise stds must be >= 0".into());
    }
    if cfg.simulation.accel_bias_range < 0.0 || cfg.simulation.gyro_bias_range < 0.0 {
        push("simulation", "bias ranges must be >= 0".into());
    }
    if !(cfg.ingest.scale > 0.0) {
        push("ingest.scale", format!("must be positive, got {}", cfg.ingest.scale));
    }

    if cfg.configurations.is_empty() {
        push("configurations", "at least one training configuration is required".into());
    }
    for (i, name) in cfg.configurations.iter().enumerate() {
        if TrainingConfig::parse(name).is_none() {
            let known: Vec<&str> = TrainingConfig::ALL.iter().map(|c| c.name()).collect();
            push(
                &format!("configurations[{i}]"),
                format!("unknown configuration name {name:?}; known: {known:?}"),
            );
        }
    }
    if cfg.fractions.is_empty() {
        push("fractions", "at least one fraction is required".into());
    }
    for (i, f) in cfg.fractions.iter().enumerate() {
        if !(*f > 0.0 && *f <= 1.0) {
            push(&format!("fractions[{i}]"), format!("must be in (0, 1], got {f}"));
        }
    }
    if cfg.repeat_seeds.is_empty() {
        push("repeat_seeds", "at least one repeat seed is required".into());
    }

    if cfg.sources.real.is_empty() {
        push("sources.real", "at least one real source file is required".into());
    }
    for (i, source) in cfg.sources.real.iter().enumerate() {
        for (field, p) in [("file", &source.file), ("adapter", &source.adapter)] {
            let resolved = loaded.resolve(p);
            if !resolved.exists() {
                push(
                    &format!("sources.real[{i}].{field}"),
                    format!("path does not exist: {}", resolved.display()),
                );
            }
        }
    }
    for (name, source, needed) in [
        ("virtual_text", &cfg.sources.virtual_text, cfg.needs_virtual_text()),
        ("virtual_video", &cfg.sources.virtual_video, cfg.needs_virtual_video()),
    ] {
        match source {
            None if needed => push(
                &format!("sources.{name}"),
                "required by the selected configurations but not provided".into(),
            ),
            Some(ms) => {
                let dir = loaded.resolve(&ms.motion_dir);
                if !dir.is_dir() {
                    push(
                        &format!("sources.{name}.motion_dir"),
                        format!("not a directory: {}", dir.display()),
                    );
                }
                if let Some(skeleton) = &ms.skeleton {
                    let p = loaded.resolve(skeleton);
                    if !p.exists() {
                        push(
                            &format!("sources.{name}.skeleton"),
                            format!("path does not exist: {}", p.display()),
                        );
                    }
                }
                if let Some(rate) = ms.frame_rate {
                    if !(rate > 0.0) {
                        push(
                            &format!("sources.{name}.frame_rate"),
                            format!("must be positive, got {rate}"),
                        );
                    }
                }
            }
            None => {}
        }
    }

    violations
}
