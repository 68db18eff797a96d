//! Deterministic desk-scale demo task generator.
//!
//! Produces a self-contained directory: synthetic arm-motion files for four
//! activity classes (virtual-text takes as BVH, virtual-video takes as
//! joint CSVs), noisy "real" wrist IMU recordings for four simulated
//! subjects with per-sample labels, matching adapter spec, and a ready
//! config.json. Every byte is a pure function of the demo seed.

use crate::config::{
    ExperimentConfig, IngestSettings, MotionSource, RealSource, SimulationSettings, Sources,
};
use anyhow::Context;
use rand::Rng;
use std::f64::consts::PI;
use std::path::Path;
use vimu_core::augment::AugmentParams;
use vimu_core::classifier::TrainParams;
use vimu_core::eval::{FoldKind, FoldSpec};
use vimu_core::features::EcdfSpec;
use vimu_core::imu_sim::{simulate_imu, SensorConfig};
use vimu_core::kinematics::inverse_kinematics;
use vimu_core::math::Vec3;
use vimu_core::motion_io::{
    forward_kinematics, write_bvh, write_joint_csv, ChannelPose, MotionSequence, Provenance,
    RotationOrder, Skeleton,
};
use vimu_core::pipeline::{TrainingConfig, WindowSpec};
use vimu_core::rng::{hash_str, sub_seed, substream_tagged};

#[derive(Debug, Clone)]
pub struct DemoSpec {
    pub seed: u64,
    pub subjects: usize,
    /// Activity classes to include (up to four).
    pub classes: usize,
    pub real_seconds_per_class: f64,
    /// Virtual takes per class per provenance.
    pub takes_per_class: usize,
    pub take_seconds: f64,
    pub motion_rate: f64,
    /// Fractions wired into the generated config.
    pub fractions: Vec<f64>,
    pub n_trees: usize,
}

impl Default for DemoSpec {
    fn default() -> Self {
        DemoSpec {
            seed: 2024,
            subjects: 4,
            classes: 4,
            real_seconds_per_class: 14.0,
            takes_per_class: 12,
            take_seconds: 8.0,
            motion_rate: 50.0,
            fractions: vec![0.1],
            n_trees: 100,
        }
    }
}

const JOINT_PELVIS: usize = 0;
const JOINT_SPINE: usize = 3;
const JOINT_SHOULDER: usize = 5;
const JOINT_ELBOW: usize = 6;
const JOINT_WRIST: usize = 7;

/// The demo body: pelvis root with hips, spine/neck, and a right arm chain
/// ending at the wrist sensor joint. Offsets in meters, z up.
pub fn demo_skeleton() -> Skeleton {
    Skeleton::new(
        vec![
            "pelvis".into(),
            "left_hip".into(),
            "right_hip".into(),
            "spine".into(),
            "neck".into(),
            "right_shoulder".into(),
            "right_elbow".into(),
            "right_wrist".into(),
        ],
        vec![None, Some(0), Some(0), Some(0), Some(3), Some(3), Some(5), Some(6)],
        vec![
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.12, 0.0, -0.06),
            Vec3::new(-0.12, 0.0, -0.06),
            Vec3::new(0.0, 0.0, 0.25),
            Vec3::new(0.0, 0.0, 0.22),
            Vec3::new(-0.2, 0.0, 0.15),
            Vec3::new(-0.28, 0.0, 0.0),
            Vec3::new(-0.26, 0.0, 0.0),
        ],
    )
    .expect("demo skeleton is valid")
}

/// Amplitude/frequency/phase variation applied to a whole motion.
#[derive(Debug, Clone, Copy)]
struct MotionStyle {
    amp: f64,
    freq: f64,
    phase: f64,
}

const AMP_RANGE: (f64, f64) = (0.68, 1.38);
const FREQ_RANGE: (f64, f64) = (0.78, 1.25);

fn lerp(range: (f64, f64), t: f64) -> f64 {
    range.0 + (range.1 - range.0) * t
}

impl MotionStyle {
    fn draw<R: Rng>(rng: &mut R) -> MotionStyle {
        MotionStyle {
            amp: rng.gen_range(AMP_RANGE.0..AMP_RANGE.1),
            freq: rng.gen_range(FREQ_RANGE.0..FREQ_RANGE.1),
            phase: rng.gen_range(0.0..2.0 * PI),
        }
    }

    /// Subjects sit at deterministic, spread-out points of the style space
    /// (amplitude ascending, frequency descending), so leaving one out
    /// always demands extrapolation beyond the remaining real subjects.
    fn for_subject<R: Rng>(index: usize, count: usize, rng: &mut R) -> MotionStyle {
        let t = index as f64 / (count - 1).max(1) as f64;
        MotionStyle {
            amp: lerp(AMP_RANGE, t),
            freq: lerp(FREQ_RANGE, 1.0 - t),
            phase: rng.gen_range(0.0..2.0 * PI),
        }
    }
}

/// One activity's base motion pattern. Angles in degrees, stored in the
/// joints' ZXY channel order.
struct ClassDef {
    name: &'static str,
    shoulder_base: [f64; 3],
    shoulder_amp: [f64; 3],
    /// Phase lead of the y-axis term, for circular patterns.
    shoulder_phase_y: f64,
    shoulder_freq: f64,
    elbow_base: f64,
    elbow_amp: f64,
    elbow_freq: f64,
    spine_amp: f64,
    root_yaw_amp: f64,
    bob_amp: f64,
}

// Class magnitude/frequency ranges deliberately overlap once subject style
// scaling is applied, so a handful of real windows from three subjects does
// not cover the style manifold; the dense virtual takes do.
const CLASSES: [ClassDef; 4] = [
    // Arm up, forearm oscillation.
    ClassDef {
        name: "waving",
        shoulder_base: [10.0, 0.0, 50.0],
        shoulder_amp: [12.0, 0.0, 5.0],
        shoulder_phase_y: 0.0,
        shoulder_freq: 1.6,
        elbow_base: 25.0,
        elbow_amp: 30.0,
        elbow_freq: 1.6,
        spine_amp: 3.0,
        root_yaw_amp: 5.0,
        bob_amp: 0.01,
    },
    // Forearm forward, circular shoulder motion.
    ClassDef {
        name: "stirring",
        shoulder_base: [0.0, 0.0, 30.0],
        shoulder_amp: [18.0, 0.0, 18.0],
        shoulder_phase_y: PI / 2.0,
        shoulder_freq: 1.3,
        elbow_base: 55.0,
        elbow_amp: 5.0,
        elbow_freq: 1.3,
        spine_amp: 2.0,
        root_yaw_amp: 4.0,
        bob_amp: 0.005,
    },
    // Whole-arm raises.
    ClassDef {
        name: "raising",
        shoulder_base: [0.0, 0.0, 40.0],
        shoulder_amp: [0.0, 0.0, 34.0],
        shoulder_phase_y: 0.0,
        shoulder_freq: 1.0,
        elbow_base: 12.0,
        elbow_amp: 6.0,
        elbow_freq: 1.0,
        spine_amp: 5.0,
        root_yaw_amp: 3.0,
        bob_amp: 0.02,
    },
    // Quicker, tighter tremor.
    ClassDef {
        name: "shaking",
        shoulder_base: [5.0, 0.0, 35.0],
        shoulder_amp: [5.0, 0.0, 2.0],
        shoulder_phase_y: 0.0,
        shoulder_freq: 2.3,
        elbow_base: 30.0,
        elbow_amp: 13.0,
        elbow_freq: 2.3,
        spine_amp: 1.5,
        root_yaw_amp: 2.0,
        bob_amp: 0.004,
    },
];

fn class_pose(def: &ClassDef, style: MotionStyle, frames: usize, rate: f64) -> ChannelPose {
    let joints = demo_skeleton().joint_count();
    let mut rotations = vec![vec![[0.0f64; 3]; joints]; frames];
    let mut root_translation = vec![Vec3::ZERO; frames];
    for (f, (rot, root)) in rotations.iter_mut().zip(&mut root_translation).enumerate() {
        let t = f as f64 / rate;
        let main = 2.0 * PI * def.shoulder_freq * style.freq * t + style.phase;
        let elbow = 2.0 * PI * def.elbow_freq * style.freq * t + style.phase;
        let slow = 2.0 * PI * 0.3 * style.freq * t + style.phase;
        rot[JOINT_SHOULDER] = [
            def.shoulder_base[0] + style.amp * def.shoulder_amp[0] * main.sin(),
            def.shoulder_base[1],
            def.shoulder_base[2]
                + style.amp * def.shoulder_amp[2] * (main + def.shoulder_phase_y).sin(),
        ];
        rot[JOINT_ELBOW] = [def.elbow_base + style.amp * def.elbow_amp * elbow.sin(), 0.0, 0.0];
        rot[JOINT_SPINE] = [0.0, def.spine_amp * (main * 0.5).sin(), 0.0];
        rot[JOINT_PELVIS] = [def.root_yaw_amp * slow.sin(), 0.0, 0.0];
        *root = Vec3::new(0.0, 0.0, def.bob_amp * (2.0 * main).sin());
    }
    ChannelPose {
        frame_rate: rate,
        root_translation,
        rotations_deg: rotations,
        orders: vec![zxy_order(); joints],
    }
}

fn zxy_order() -> RotationOrder {
    use vimu_core::math::Axis3;
    RotationOrder([Axis3::Z, Axis3::X, Axis3::Y])
}

fn motion_from_pose(
    skeleton: &Skeleton,
    pose: &ChannelPose,
    label: &str,
    provenance: Provenance,
) -> anyhow::Result<MotionSequence> {
    let mut motion = forward_kinematics(skeleton, pose)?;
    motion.provenance = provenance;
    motion.activity_label = Some(label.to_string());
    Ok(motion)
}

/// Simulate a noisy wrist trace for one real (subject, class) block and
/// append its rows to a subject CSV body. `mount_angle` models the device
/// worn rotated about the sensor z axis, a per-subject constant.
#[allow(clippy::too_many_arguments)]
fn append_real_block(
    body: &mut String,
    skeleton: &Skeleton,
    def: &ClassDef,
    style: MotionStyle,
    mount_angle: f64,
    subject: &str,
    spec: &DemoSpec,
    block_seed: u64,
) -> anyhow::Result<()> {
    let frames = (spec.real_seconds_per_class * spec.motion_rate) as usize;
    let pose = class_pose(def, style, frames, spec.motion_rate);
    let motion = motion_from_pose(skeleton, &pose, def.name, Provenance::Real)?;
    let ik = inverse_kinematics(skeleton, &motion)?;
    // Consumer-grade mess: markedly noisier than the virtual defaults, with
    // a fresh calibration bias per recording block.
    let sensor = SensorConfig {
        joint_index: JOINT_WRIST,
        gravity: Vec3::new(0.0, 0.0, -9.81),
        accel_noise_std: 0.8,
        gyro_noise_std: 0.12,
        accel_bias_range: 0.5,
        gyro_bias_range: 0.08,
        seed: block_seed,
    };
    let trace = simulate_imu(&motion, &ik.track, &sensor)?;
    let (sin, cos) = mount_angle.sin_cos();
    let mount = |v: Vec3| Vec3::new(v.x * cos - v.y * sin, v.x * sin + v.y * cos, v.z);
    for (k, (a, g)) in trace.accel.iter().zip(&trace.gyro).enumerate() {
        let t = k as f64 / trace.sample_rate;
        let (a, g) = (mount(*a), mount(*g));
        body.push_str(&format!(
            "{t},{},{},{},{},{},{},{},{}\n",
            a.x, a.y, a.z, g.x, g.y, g.z, def.name, subject
        ));
    }
    Ok(())
}

const REAL_ADAPTER_JSON: &str = r#"{
  "delimiter": ",",
  "sample_rate": 50.0,
  "has_header": true,
  "timestamp_column": "t",
  "label_column": "activity",
  "subject_column": "subject",
  "sensors": [
    { "name": "right_wrist_accel", "x": "ax", "y": "ay", "z": "az" },
    { "name": "right_wrist_gyro", "x": "gx", "y": "gy", "z": "gz" }
  ]
}
"#;

/// Generate the demo task into `dir` and return the config path.
pub fn generate(dir: &Path, spec: &DemoSpec) -> anyhow::Result<std::path::PathBuf> {
    anyhow::ensure!(spec.classes >= 2 && spec.classes <= CLASSES.len(), "2..=4 classes supported");
    anyhow::ensure!(spec.subjects >= 2, "at least 2 subjects required for LOSO");
    let skeleton = demo_skeleton();
    std::fs::create_dir_all(dir)?;

    // Shared rest-pose skeleton reference for the CSV motions.
    let rest_pose = class_pose(&CLASSES[0], MotionStyle { amp: 0.0, freq: 1.0, phase: 0.0 }, 2, spec.motion_rate);
    let motions_dir = dir.join("motions");
    std::fs::create_dir_all(&motions_dir)?;
    std::fs::write(motions_dir.join("skeleton.bvh"), write_bvh(&skeleton, &rest_pose))?;

    // Virtual takes: BVH for the text pipeline, joint CSVs for the video
    // pipeline, spanning the style space the subjects are drawn from.
    let take_frames = (spec.take_seconds * spec.motion_rate) as usize;
    for def in &CLASSES[..spec.classes] {
        let text_dir = motions_dir.join("text").join(def.name);
        let video_dir = motions_dir.join("video").join(def.name);
        std::fs::create_dir_all(&text_dir)?;
        std::fs::create_dir_all(&video_dir)?;
        for take in 0..spec.takes_per_class {
            for (kind, out_dir) in [("text", &text_dir), ("video", &video_dir)] {
                let mut rng = substream_tagged(
                    spec.seed,
                    &format!("take/{kind}/{}/{take}", def.name),
                );
                let style = MotionStyle::draw(&mut rng);
                let pose = class_pose(def, style, take_frames, spec.motion_rate);
                if kind == "text" {
                    std::fs::write(
                        out_dir.join(format!("take{take:02}.bvh")),
                        write_bvh(&skeleton, &pose),
                    )?;
                } else {
                    let motion =
                        motion_from_pose(&skeleton, &pose, def.name, Provenance::VirtualVideo)?;
                    std::fs::write(
                        out_dir.join(format!("take{take:02}.csv")),
                        write_joint_csv(&motion, skeleton.joint_names()),
                    )?;
                }
            }
        }
    }

    // Real recordings: one labeled CSV per subject, all classes in sequence.
    let real_dir = dir.join("real");
    let adapters_dir = dir.join("adapters");
    std::fs::create_dir_all(&real_dir)?;
    std::fs::create_dir_all(&adapters_dir)?;
    std::fs::write(adapters_dir.join("real.json"), REAL_ADAPTER_JSON)?;
    let mut real_sources = Vec::new();
    for s in 0..spec.subjects {
        let subject = format!("subject{}", s + 1);
        let mut body = String::from("t,ax,ay,az,gx,gy,gz,activity,subject\n");
        let mut style_rng = substream_tagged(spec.seed, &format!("subject/{subject}"));
        let style = MotionStyle::for_subject(s, spec.subjects, &mut style_rng);
        // Device worn rotated; spread across subjects, alternating sign.
        let t = s as f64 / (spec.subjects - 1).max(1) as f64;
        let mount_angle = (22.0 * (2.0 * t - 1.0) * if s % 2 == 0 { 1.0 } else { -1.0 }).to_radians();
        for def in &CLASSES[..spec.classes] {
            let block_seed = sub_seed(spec.seed, hash_str(&format!("real/{subject}/{}", def.name)));
            append_real_block(&mut body, &skeleton, def, style, mount_angle, &subject, spec, block_seed)
                .with_context(|| format!("generating {subject}/{}", def.name))?;
        }
        let file = format!("real/{subject}.csv");
        std::fs::write(dir.join(&file), body)?;
        real_sources.push(RealSource { file: file.into(), adapter: "adapters/real.json".into() });
    }

    let config = ExperimentConfig {
        output_dir: "out".into(),
        placements: vec!["right_wrist".into()],
        sources: Sources {
            real: real_sources,
            virtual_text: Some(MotionSource {
                motion_dir: "motions/text".into(),
                skeleton: None,
                frame_rate: None,
            }),
            virtual_video: Some(MotionSource {
                motion_dir: "motions/video".into(),
                skeleton: Some("motions/skeleton.bvh".into()),
                frame_rate: Some(spec.motion_rate),
            }),
        },
        ingest: IngestSettings::default(),
        simulation: SimulationSettings { seed: 7, ..SimulationSettings::default() },
        window: WindowSpec::default(),
        augment: AugmentParams { seed: 11, ..AugmentParams::default() },
        features: EcdfSpec::default(),
        forest: TrainParams { n_trees: spec.n_trees, ..TrainParams::default() },
        fold: FoldSpec { kind: FoldKind::Loso, seed: 0 },
        configurations: TrainingConfig::ALL.iter().map(|c| c.name().to_string()).collect(),
        fractions: spec.fractions.clone(),
        repeat_seeds: vec![17, 29, 43],
    };
    let config_path = dir.join("config.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).expect("config serializes"))?;
    Ok(config_path)
}
