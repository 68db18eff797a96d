//! Tri-axial accelerometer/gyroscope simulation at skeleton joints.
//!
//! The accelerometer returns specific force `R^-1 (p_ddot - g)` in the
//! sensor frame, so a stationary sensor with identity orientation and the
//! default gravity reads +9.81 on the z axis. The sensor sits at the joint
//! center with no lever arm; the sensor frame is the joint's global
//! rotation frame. Noise is per-axis white Gaussian plus one constant bias
//! per axis drawn uniformly from a configured half-width, all from a seeded
//! generator.

use crate::kinematics::{angular_velocity, KinematicsError, RotationTrack};
use crate::math::Vec3;
use crate::motion_io::{MotionSequence, Provenance};
use crate::rng::substream;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("need at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },
    #[error("motion and rotation track are misaligned: {0}")]
    Misaligned(String),
    #[error("joint index {joint} out of range for {joints} joints")]
    BadJoint { joint: usize, joints: usize },
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("empty trace")]
    EmptyTrace,
    #[error("target rate must be positive, got {0}")]
    BadRate(f64),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// Simulation parameters for one virtual sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub joint_index: usize,
    /// m/s^2, world frame.
    pub gravity: Vec3,
    /// Std of white accelerometer noise, m/s^2.
    pub accel_noise_std: f64,
    /// Std of white gyroscope noise, rad/s.
    pub gyro_noise_std: f64,
    /// Half-width of the uniform per-axis accelerometer bias draw, m/s^2.
    pub accel_bias_range: f64,
    /// Half-width of the uniform per-axis gyroscope bias draw, rad/s.
    pub gyro_bias_range: f64,
    pub seed: u64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            joint_index: 0,
            gravity: Vec3::new(0.0, 0.0, -9.81),
            accel_noise_std: 0.05,
            gyro_noise_std: 0.01,
            accel_bias_range: 0.0,
            gyro_bias_range: 0.0,
            seed: 0,
        }
    }
}

impl SensorConfig {
    fn validate(&self) -> Result<(), SimError> {
        if self.accel_noise_std < 0.0 || self.gyro_noise_std < 0.0 {
            return Err(SimError::BadConfig("noise std must be >= 0".into()));
        }
        if self.accel_bias_range < 0.0 || self.gyro_bias_range < 0.0 {
            return Err(SimError::BadConfig("bias range must be >= 0".into()));
        }
        Ok(())
    }
}

/// Simulated IMU streams for one sensor placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImuTrace {
    pub sample_rate: f64,
    /// Specific force, m/s^2, sensor frame.
    pub accel: Vec<Vec3>,
    /// Angular velocity, rad/s, sensor frame.
    pub gyro: Vec<Vec3>,
    pub joint_index: usize,
    pub activity_label: Option<String>,
    pub subject_id: Option<String>,
    pub provenance: Provenance,
}

impl ImuTrace {
    pub fn len(&self) -> usize {
        self.accel.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accel.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        if self.accel.is_empty() {
            0.0
        } else {
            (self.accel.len() - 1) as f64 / self.sample_rate
        }
    }
}

/// World-frame linear acceleration of one joint by central second
/// differences: `(p[k+1] - 2 p[k] + p[k-1]) * rate^2`. Endpoints copy the
/// nearest interior value.
pub fn linear_acceleration(motion: &MotionSequence, joint: usize) -> Result<Vec<Vec3>, SimError> {
    let frames = motion.frame_count();
    if frames < 3 {
        return Err(SimError::TooFewFrames { needed: 3, got: frames });
    }
    if joint >= motion.joint_count() {
        return Err(SimError::BadJoint { joint, joints: motion.joint_count() });
    }
    let rate2 = motion.frame_rate * motion.frame_rate;
    let mut accel = vec![Vec3::ZERO; frames];
    for (k, slot) in accel.iter_mut().enumerate().take(frames - 1).skip(1) {
        let p_prev = motion.positions[k - 1][joint];
        let p = motion.positions[k][joint];
        let p_next = motion.positions[k + 1][joint];
        *slot = (p_next - p * 2.0 + p_prev) * rate2;
    }
    accel[0] = accel[1];
    accel[frames - 1] = accel[frames - 2];
    Ok(accel)
}

/// Simulate one sensor from a motion and its recovered rotations.
///
/// Deterministic for a fixed seed; with zero noise and bias the output does
/// not depend on the seed at all. Draw order is fixed: three accel bias
/// uniforms, three gyro bias uniforms, then per sample three accel and
/// three gyro normals.
pub fn simulate_imu(
    motion: &MotionSequence,
    rotations: &RotationTrack,
    config: &SensorConfig,
) -> Result<ImuTrace, SimError> {
    config.validate()?;
    if rotations.frame_count() != motion.frame_count() {
        return Err(SimError::Misaligned(format!(
            "motion has {} frames, rotations have {}",
            motion.frame_count(),
            rotations.frame_count()
        )));
    }
    if rotations.joint_count() != motion.joint_count() {
        return Err(SimError::Misaligned(format!(
            "motion has {} joints, rotations have {}",
            motion.joint_count(),
            rotations.joint_count()
        )));
    }
    let joint = config.joint_index;
    if joint >= motion.joint_count() {
        return Err(SimError::BadJoint { joint, joints: motion.joint_count() });
    }

    let world_accel = linear_acceleration(motion, joint)?;
    let omega = angular_velocity(rotations, motion.frame_rate)?;

    let mut rng = substream(config.seed, joint as u64);
    let uniform_in = |rng: &mut rand_chacha::ChaCha8Rng, half: f64| -> f64 {
        half * (2.0 * rng.gen::<f64>() - 1.0)
    };
    let accel_bias = Vec3::new(
        uniform_in(&mut rng, config.accel_bias_range),
        uniform_in(&mut rng, config.accel_bias_range),
        uniform_in(&mut rng, config.accel_bias_range),
    );
    let gyro_bias = Vec3::new(
        uniform_in(&mut rng, config.gyro_bias_range),
        uniform_in(&mut rng, config.gyro_bias_range),
        uniform_in(&mut rng, config.gyro_bias_range),
    );

    let mut accel = Vec::with_capacity(motion.frame_count());
    let mut gyro = Vec::with_capacity(motion.frame_count());
    for k in 0..motion.frame_count() {
        let orientation = rotations.global[k][joint];
        let specific_force = orientation.conjugate().rotate(world_accel[k] - config.gravity);
        let mut normal = |std: f64| -> f64 {
            let z: f64 = StandardNormal.sample(&mut rng);
            std * z
        };
        let accel_noise = Vec3::new(
            normal(config.accel_noise_std),
            normal(config.accel_noise_std),
            normal(config.accel_noise_std),
        );
        let gyro_noise = Vec3::new(
            normal(config.gyro_noise_std),
            normal(config.gyro_noise_std),
            normal(config.gyro_noise_std),
        );
        accel.push(specific_force + accel_bias + accel_noise);
        gyro.push(omega[k][joint] + gyro_bias + gyro_noise);
    }

    Ok(ImuTrace {
        sample_rate: motion.frame_rate,
        accel,
        gyro,
        joint_index: joint,
        activity_label: motion.activity_label.clone(),
        subject_id: motion.subject_id.clone(),
        provenance: motion.provenance,
    })
}

/// Resample a trace by per-channel linear interpolation on its uniform
/// timeline. The output starts at t = 0 with step `1/target_rate`; the last
/// sample never exceeds the source duration.
pub fn resample_trace(trace: &ImuTrace, target_rate: f64) -> Result<ImuTrace, SimError> {
    if !(target_rate > 0.0) {
        return Err(SimError::BadRate(target_rate));
    }
    if trace.is_empty() {
        return Err(SimError::EmptyTrace);
    }
    let n = trace.len();
    let step = trace.sample_rate / target_rate; // source samples per output sample
    let mut count = ((n - 1) as f64 / step).floor() as usize + 1;
    // Guard against floating-point overshoot at the boundary.
    while (count - 1) as f64 * step > (n - 1) as f64 {
        count -= 1;
    }

    let lerp = |channel: &[Vec3], pos: f64| -> Vec3 {
        let idx = pos.floor() as usize;
        if idx + 1 >= n {
            return channel[n - 1];
        }
        let frac = pos - idx as f64;
        if frac == 0.0 {
            channel[idx]
        } else {
            channel[idx] * (1.0 - frac) + channel[idx + 1] * frac
        }
    };

    let mut accel = Vec::with_capacity(count);
    let mut gyro = Vec::with_capacity(count);
    for i in 0..count {
        let pos = i as f64 * step;
        accel.push(lerp(&trace.accel, pos));
        gyro.push(lerp(&trace.gyro, pos));
    }
    Ok(ImuTrace {
        sample_rate: target_rate,
        accel,
        gyro,
        joint_index: trace.joint_index,
        activity_label: trace.activity_label.clone(),
        subject_id: trace.subject_id.clone(),
        provenance: trace.provenance,
    })
}

/// Trace CSV with header `t,ax,ay,az,gx,gy,gz`. Floats use shortest
/// round-trip formatting, so write/read is value-exact.
pub fn write_trace_csv(trace: &ImuTrace) -> String {
    let mut out = String::from("t,ax,ay,az,gx,gy,gz\n");
    for (k, (a, g)) in trace.accel.iter().zip(&trace.gyro).enumerate() {
        let t = k as f64 / trace.sample_rate;
        out.push_str(&format!(
            "{t},{},{},{},{},{},{}\n",
            a.x, a.y, a.z, g.x, g.y, g.z
        ));
    }
    out
}

/// Parse a trace CSV written by [`write_trace_csv`].
pub fn parse_trace_csv(
    text: &str,
    sample_rate: f64,
    joint_index: usize,
    provenance: Provenance,
) -> Result<ImuTrace, SimError> {
    let mut accel = Vec::new();
    let mut gyro = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 7 {
            return Err(SimError::BadConfig(format!(
                "trace row {} has {} cells, expected 7",
                i + 1,
                cells.len()
            )));
        }
        let mut vals = [0.0f64; 6];
        for (k, cell) in cells[1..].iter().enumerate() {
            vals[k] = cell.parse().map_err(|_| {
                SimError::BadConfig(format!("non-numeric trace cell '{cell}' on row {}", i + 1))
            })?;
        }
        accel.push(Vec3::new(vals[0], vals[1], vals[2]));
        gyro.push(Vec3::new(vals[3], vals[4], vals[5]));
    }
    if accel.is_empty() {
        return Err(SimError::EmptyTrace);
    }
    Ok(ImuTrace {
        sample_rate,
        accel,
        gyro,
        joint_index,
        activity_label: None,
        subject_id: None,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::Quaternion;
    use std::f64::consts::PI;

    fn still_motion(frames: usize, at: Vec3) -> MotionSequence {
        MotionSequence::new(100.0, vec![vec![at]; frames], Provenance::VirtualText).unwrap()
    }

    fn identity_track(frames: usize, joints: usize) -> RotationTrack {
        RotationTrack {
            global: vec![vec![Quaternion::IDENTITY; joints]; frames],
            local: vec![vec![Quaternion::IDENTITY; joints]; frames],
        }
    }

    fn zero_noise_config() -> SensorConfig {
        SensorConfig {
            accel_noise_std: 0.0,
            gyro_noise_std: 0.0,
            ..SensorConfig::default()
        }
    }

    /// Circle of radius 1 m traversed at 2*pi rad/s, sampled at 100 Hz.
    fn circular_motion(frames: usize) -> MotionSequence {
        let rate = 100.0;
        let omega = 2.0 * PI;
        let positions: Vec<Vec<Vec3>> = (0..frames)
            .map(|k| {
                let t = k as f64 / rate;
                vec![Vec3::new((omega * t).cos(), (omega * t).sin(), 0.0)]
            })
            .collect();
        MotionSequence::new(rate, positions, Provenance::VirtualText).unwrap()
    }

    #[test]
    fn stationary_joint_has_zero_acceleration() {
        let accel = linear_acceleration(&still_motion(10, Vec3::new(1.0, 2.0, 3.0)), 0).unwrap();
        for a in accel {
            assert!(a.norm() < 1e-12);
        }
    }

    #[test]
    fn constant_velocity_is_annihilated_exactly() {
        let v = Vec3::new(0.5, -1.0, 2.0);
        let positions: Vec<Vec<Vec3>> =
            (0..20).map(|k| vec![v * (k as f64 / 50.0)]).collect();
        let motion = MotionSequence::new(50.0, positions, Provenance::VirtualText).unwrap();
        let accel = linear_acceleration(&motion, 0).unwrap();
        for a in accel {
            assert!(a.norm() < 1e-9, "{a:?}");
        }
    }

    #[test]
    fn circular_motion_matches_centripetal_magnitude() {
        let motion = circular_motion(200);
        let accel = linear_acceleration(&motion, 0).unwrap();
        let expected = 4.0 * PI * PI; // omega^2 * r = 39.478...
        for a in &accel[1..199] {
            let rel = (a.norm() - expected).abs() / expected;
            assert!(rel < 1e-3, "relative error {rel}");
        }
    }

    #[test]
    fn stationary_identity_sensor_reads_plus_g() {
        let motion = still_motion(10, Vec3::ZERO);
        let track = identity_track(10, 1);
        let trace = simulate_imu(&motion, &track, &zero_noise_config()).unwrap();
        for (a, g) in trace.accel.iter().zip(&trace.gyro) {
            assert!((*a - Vec3::new(0.0, 0.0, 9.81)).norm() < 1e-9);
            assert!(g.norm() < 1e-12);
        }
    }

    #[test]
    fn free_fall_reads_zero() {
        // p(t) = 0.5 g t^2 gives p_ddot = g, so specific force vanishes.
        let g = Vec3::new(0.0, 0.0, -9.81);
        let rate = 100.0;
        let positions: Vec<Vec<Vec3>> = (0..30)
            .map(|k| {
                let t = k as f64 / rate;
                vec![g * (0.5 * t * t)]
            })
            .collect();
        let motion = MotionSequence::new(rate, positions, Provenance::VirtualText).unwrap();
        let trace = simulate_imu(&motion, &identity_track(30, 1), &zero_noise_config()).unwrap();
        for a in &trace.accel {
            assert!(a.norm() < 1e-6, "{a:?}");
        }
    }

    #[test]
    fn circular_motion_specific_force_at_crossing() {
        // At t=0 the joint crosses (+1, 0, 0): centripetal acceleration
        // points inward (-x) and gravity contributes +z.
        let motion = circular_motion(200);
        let trace =
            simulate_imu(&motion, &identity_track(200, 1), &zero_noise_config()).unwrap();
        // Sample k=100 is a full revolution later, also at (+1,0,0), and is
        // interior so the central difference applies.
        let a = trace.accel[100];
        let expected = Vec3::new(-4.0 * PI * PI, 0.0, 9.81);
        assert!((a.x - expected.x).abs() / expected.x.abs() < 1e-3, "{a:?}");
        assert!(a.y.abs() < 0.05, "{a:?}");
        assert!((a.z - expected.z).abs() < 1e-9, "{a:?}");
    }

    #[test]
    fn zero_noise_output_is_seed_independent() {
        let motion = circular_motion(50);
        let track = identity_track(50, 1);
        let mut c1 = zero_noise_config();
        c1.seed = 1;
        let mut c2 = zero_noise_config();
        c2.seed = 9999;
        assert_eq!(simulate_imu(&motion, &track, &c1).unwrap(), simulate_imu(&motion, &track, &c2).unwrap());
    }

    #[test]
    fn fixed_seed_noisy_output_is_reproducible() {
        let motion = circular_motion(50);
        let track = identity_track(50, 1);
        let config = SensorConfig {
            accel_noise_std: 0.05,
            gyro_noise_std: 0.01,
            accel_bias_range: 0.1,
            gyro_bias_range: 0.02,
            seed: 42,
            ..SensorConfig::default()
        };
        let t1 = simulate_imu(&motion, &track, &config).unwrap();
        let t2 = simulate_imu(&motion, &track, &config).unwrap();
        assert_eq!(t1, t2);
        let mut other = config.clone();
        other.seed = 43;
        assert_ne!(t1, simulate_imu(&motion, &track, &other).unwrap());
    }

    #[test]
    fn world_rotation_leaves_sensor_frames_unchanged() {
        // Rotate positions, orientations and gravity by a fixed rotation;
        // sensor-frame readings must not move.
        let fixed = Quaternion::from_axis_angle(Vec3::new(0.3, -0.5, 0.8), 1.1).unwrap();
        let motion = circular_motion(80);
        let mut track = identity_track(80, 1);
        // Give the sensor a non-trivial spinning orientation.
        for (k, frame) in track.global.iter_mut().enumerate() {
            frame[0] =
                Quaternion::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), 0.05 * k as f64).unwrap();
        }
        let rotated_positions: Vec<Vec<Vec3>> = motion
            .positions
            .iter()
            .map(|f| f.iter().map(|p| fixed.rotate(*p)).collect())
            .collect();
        let rotated_motion =
            MotionSequence::new(motion.frame_rate, rotated_positions, Provenance::VirtualText)
                .unwrap();
        let rotated_track = RotationTrack {
            global: track
                .global
                .iter()
                .map(|f| f.iter().map(|q| fixed * *q).collect())
                .collect(),
            local: track.local.clone(),
        };
        let config = zero_noise_config();
        let mut rotated_config = config.clone();
        rotated_config.gravity = fixed.rotate(config.gravity);

        let plain = simulate_imu(&motion, &track, &config).unwrap();
        let rotated = simulate_imu(&rotated_motion, &rotated_track, &rotated_config).unwrap();
        for (a, b) in plain.accel.iter().zip(&rotated.accel) {
            assert!((*a - *b).norm() < 1e-9);
        }
        for (a, b) in plain.gyro.iter().zip(&rotated.gyro) {
            assert!((*a - *b).norm() < 1e-9);
        }
    }

    #[test]
    fn noise_statistics_match_configuration() {
        // Long stationary trace: mean within 5 sigma / 1000 of zero, std
        // within 1% of the configured value.
        let samples = 340_000; // x3 axes > 1e6 draws
        let motion = still_motion(samples, Vec3::ZERO);
        let track = identity_track(samples, 1);
        let config = SensorConfig {
            accel_noise_std: 0.05,
            gyro_noise_std: 0.0,
            seed: 7,
            ..SensorConfig::default()
        };
        let trace = simulate_imu(&motion, &track, &config).unwrap();
        let baseline = Vec3::new(0.0, 0.0, 9.81);
        let mut residuals = Vec::with_capacity(samples * 3);
        for a in &trace.accel {
            let r = *a - baseline;
            residuals.extend_from_slice(&[r.x, r.y, r.z]);
        }
        let n = residuals.len() as f64;
        let mean = residuals.iter().sum::<f64>() / n;
        let var = residuals.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 5.0 * 0.05 / 1000.0, "mean {mean}");
        assert!((var.sqrt() - 0.05).abs() / 0.05 < 0.01, "std {}", var.sqrt());
    }

    #[test]
    fn resample_identity_rate_is_bitwise_equal() {
        let motion = circular_motion(64);
        let trace =
            simulate_imu(&motion, &identity_track(64, 1), &zero_noise_config()).unwrap();
        let same = resample_trace(&trace, trace.sample_rate).unwrap();
        assert_eq!(trace, same);
    }

    #[test]
    fn downsampling_a_ramp_is_exact() {
        // Linear ramp at 40 Hz -> 20 Hz: interpolation is exact on ramps.
        let ramp: Vec<Vec3> = (0..41).map(|k| Vec3::new(k as f64 * 0.25, 0.0, 0.0)).collect();
        let trace = ImuTrace {
            sample_rate: 40.0,
            accel: ramp.clone(),
            gyro: ramp,
            joint_index: 0,
            activity_label: None,
            subject_id: None,
            provenance: Provenance::Real,
        };
        let out = resample_trace(&trace, 20.0).unwrap();
        assert_eq!(out.len(), 21);
        for (i, a) in out.accel.iter().enumerate() {
            let t = i as f64 / 20.0;
            let expected = 0.25 * 40.0 * t;
            assert!((a.x - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn downsampled_sine_tracks_the_analytic_signal() {
        // 1 Hz sine sampled at 100 Hz then resampled to 20 Hz.
        let src_rate = 100.0;
        let samples: Vec<Vec3> = (0..301)
            .map(|k| {
                let t = k as f64 / src_rate;
                Vec3::new((2.0 * PI * t).sin(), 0.0, 0.0)
            })
            .collect();
        let trace = ImuTrace {
            sample_rate: src_rate,
            accel: samples.clone(),
            gyro: samples,
            joint_index: 0,
            activity_label: None,
            subject_id: None,
            provenance: Provenance::Real,
        };
        let out = resample_trace(&trace, 20.0).unwrap();
        for (i, a) in out.accel.iter().enumerate() {
            let t = i as f64 / 20.0;
            assert!(t <= 3.0 + 1e-12);
            assert!((a.x - (2.0 * PI * t).sin()).abs() < 2e-3);
        }
    }

    #[test]
    fn trace_csv_round_trip_is_exact() {
        let motion = circular_motion(32);
        let config = SensorConfig { accel_noise_std: 0.05, seed: 3, ..SensorConfig::default() };
        let trace = simulate_imu(&motion, &identity_track(32, 1), &config).unwrap();
        let text = write_trace_csv(&trace);
        let back = parse_trace_csv(&text, trace.sample_rate, 0, trace.provenance).unwrap();
        assert_eq!(trace.accel, back.accel);
        assert_eq!(trace.gyro, back.gyro);
    }

    #[test]
    fn misaligned_inputs_are_rejected() {
        let motion = still_motion(10, Vec3::ZERO);
        let track = identity_track(9, 1);
        assert!(matches!(
            simulate_imu(&motion, &track, &zero_noise_config()),
            Err(SimError::Misaligned(_))
        ));
    }
}
