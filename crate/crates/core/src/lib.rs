//! Virtual IMU synthesis and activity-recognition evaluation toolkit.
//!
//! The crate covers the full chain from 3D joint-motion sequences to a
//! classification report:
//!
//! - [`motion_io`] — BVH and joint-trajectory CSV parsing, forward kinematics.
//! - [`kinematics`] — quaternion algebra, pelvis-rooted inverse kinematics,
//!   angular velocity.
//! - [`imu_sim`] — tri-axial accelerometer/gyroscope simulation with a
//!   seeded noise model, trace resampling.
//! - [`augment`] — sensor-level window augmentation (fixed z-rotation,
//!   Gaussian noise, per-channel bias) and 4x training-set expansion.
//! - [`pipeline`] — column-mapped ingestion, sliding-window segmentation,
//!   training-set composition, stratified subsampling, dataset persistence.
//! - [`features`] — inverse-ECDF window features for the classical model.
//! - [`classifier`] — a deterministic, seeded random forest.
//! - [`eval`] — LOSO and stratified k-fold cross-validation, macro F1,
//!   the experiment matrix over training configurations, report emission.

// `!(x > 0.0)` guards reject NaN as well as non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod classifier;
pub mod eval;
pub mod features;
pub mod imu_sim;
pub mod kinematics;
pub mod math;
pub mod motion_io;
pub mod pipeline;
pub mod rng;
