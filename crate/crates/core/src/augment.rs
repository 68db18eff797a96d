//! Sensor-level window augmentation: fixed rotation about each sensor's z
//! channel, element-wise Gaussian noise, and per-channel constant bias, plus
//! the 4x training-set expansion that concatenates the original windows with
//! all three transformed copies.

use crate::math::Axis3;
use crate::motion_io::Provenance;
use crate::pipeline::{Dataset, LabeledWindow};
use crate::rng::{sub_seed, substream};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("channel layout is not grouped into (x, y, z) triples: {0}")]
    NotTripleGrouped(String),
    #[error("invalid segment: {0}")]
    InvalidSegment(String),
    #[error("{param} must be >= 0, got {value}")]
    NegativeParam { param: &'static str, value: f64 },
    #[error("dataset is empty")]
    EmptyDataset,
}

/// One channel of a segment: which tri-axial sensor it belongs to and which
/// axis it carries.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelDesc {
    pub sensor: String,
    pub axis: Axis3,
}

impl ChannelDesc {
    pub fn name(&self) -> String {
        format!("{}_{}", self.sensor, self.axis.label())
    }
}

/// Ordered (sensor, axis) pairs describing a segment's columns.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ChannelLayout(Vec<ChannelDesc>);

impl ChannelLayout {
    pub fn new(channels: Vec<ChannelDesc>) -> Self {
        ChannelLayout(channels)
    }

    /// Layout of one (x, y, z) triple per sensor name, in the given order.
    pub fn from_sensors<S: AsRef<str>>(sensors: &[S]) -> Self {
        ChannelLayout(
            sensors
                .iter()
                .flat_map(|s| {
                    Axis3::ALL.map(|axis| ChannelDesc { sensor: s.as_ref().to_string(), axis })
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn channels(&self) -> &[ChannelDesc] {
        &self.0
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.0.iter().map(ChannelDesc::name).collect()
    }

    /// Column index triples per sensor, verifying the contiguous (x, y, z)
    /// grouping the rotation transform relies on.
    pub fn sensor_triples(&self) -> Result<Vec<(String, [usize; 3])>, AugmentError> {
        if !self.0.len().is_multiple_of(3) {
            return Err(AugmentError::NotTripleGrouped(format!(
                "{} channels is not a multiple of 3",
                self.0.len()
            )));
        }
        let mut triples = Vec::with_capacity(self.0.len() / 3);
        for (t, chunk) in self.0.chunks(3).enumerate() {
            let base = t * 3;
            let sensor = &chunk[0].sensor;
            let grouped = chunk.iter().all(|c| c.sensor == *sensor)
                && chunk[0].axis == Axis3::X
                && chunk[1].axis == Axis3::Y
                && chunk[2].axis == Axis3::Z;
            if !grouped {
                return Err(AugmentError::NotTripleGrouped(format!(
                    "channels {base}..{} are {:?}",
                    base + 2,
                    chunk.iter().map(ChannelDesc::name).collect::<Vec<_>>()
                )));
            }
            triples.push((sensor.clone(), [base, base + 1, base + 2]));
        }
        Ok(triples)
    }

    /// For each channel of `target`, its column index in `self`, or `None`
    /// if some target channel is missing here.
    pub fn projection_onto(&self, target: &ChannelLayout) -> Option<Vec<usize>> {
        target
            .channels()
            .iter()
            .map(|c| self.0.iter().position(|mine| mine == c))
            .collect()
    }
}

/// The unit of augmentation, featurization and classification: a window of
/// T samples by C channels, C = 3S over S tri-axial sensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentMatrix {
    values: Vec<f64>, // row-major, T x C
    rows: usize,
    layout: ChannelLayout,
}

impl SegmentMatrix {
    pub fn new(values: Vec<f64>, rows: usize, layout: ChannelLayout) -> Result<Self, AugmentError> {
        let cols = layout.len();
        if cols == 0 || rows == 0 {
            return Err(AugmentError::InvalidSegment("empty segment".into()));
        }
        if values.len() != rows * cols {
            return Err(AugmentError::InvalidSegment(format!(
                "{} values for {rows} x {cols}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AugmentError::InvalidSegment("non-finite value".into()));
        }
        Ok(SegmentMatrix { values, rows, layout })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.layout.len()
    }

    pub fn layout(&self) -> &ChannelLayout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let c = self.cols();
        &self.values[row * c..(row + 1) * c]
    }

    pub fn channel(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|t| self.get(t, col)).collect()
    }

    /// Reorder/select columns to match `target`; errors if a target channel
    /// is missing from this segment.
    pub fn project_onto(&self, target: &ChannelLayout) -> Result<SegmentMatrix, AugmentError> {
        let indices = self.layout.projection_onto(target).ok_or_else(|| {
            AugmentError::InvalidSegment(format!(
                "segment lacks channels required by target layout {:?}",
                target.channel_names()
            ))
        })?;
        let mut values = Vec::with_capacity(self.rows * indices.len());
        for t in 0..self.rows {
            let row = self.row(t);
            values.extend(indices.iter().map(|&i| row[i]));
        }
        SegmentMatrix::new(values, self.rows, target.clone())
    }

    /// Stable byte serialization of the contents, for hashing.
    pub fn content_bytes(&self) -> Vec<u8> {
        let mut bytes = Vec::with_capacity(self.values.len() * 8 + 64);
        bytes.extend_from_slice(&(self.rows as u64).to_le_bytes());
        for c in self.layout.channels() {
            bytes.extend_from_slice(c.sensor.as_bytes());
            bytes.push(c.axis.label().as_bytes()[0]);
            bytes.push(0);
        }
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes
    }
}

/// Parameters of the three augmentation transforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentParams {
    /// Rotation angle about each sensor's z channel, radians.
    pub theta: f64,
    /// Std of the element-wise Gaussian noise.
    pub noise_std: f64,
    /// Half-width of the uniform per-channel bias.
    pub bias_halfwidth: f64,
    pub seed: u64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            theta: std::f64::consts::FRAC_PI_6,
            noise_std: 0.05,
            bias_halfwidth: 0.1,
            seed: 0,
        }
    }
}

impl AugmentParams {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if self.noise_std < 0.0 {
            return Err(AugmentError::NegativeParam { param: "noise_std", value: self.noise_std });
        }
        if self.bias_halfwidth < 0.0 {
            return Err(AugmentError::NegativeParam {
                param: "bias_halfwidth",
                value: self.bias_halfwidth,
            });
        }
        Ok(())
    }
}

/// Rotate each sensor's (x, y) channels by `theta` about its z channel:
/// per sensor, rows map through the transpose of the z rotation matrix, so
/// x' = x cos - y sin, y' = x sin + y cos, z' = z.
pub fn rotate_z(segment: &SegmentMatrix, theta: f64) -> Result<SegmentMatrix, AugmentError> {
    let triples = segment.layout().sensor_triples()?;
    let (sin, cos) = theta.sin_cos();
    let cols = segment.cols();
    let mut values = segment.values().to_vec();
    for t in 0..segment.rows() {
        let base = t * cols;
        for (_, [ix, iy, _]) in &triples {
            let x = values[base + ix];
            let y = values[base + iy];
            values[base + ix] = x * cos - y * sin;
            values[base + iy] = x * sin + y * cos;
        }
    }
    SegmentMatrix::new(values, segment.rows(), segment.layout().clone())
}

/// Add element-wise Gaussian noise of the given std.
pub fn add_gaussian_noise<R: Rng>(
    segment: &SegmentMatrix,
    sigma: f64,
    rng: &mut R,
) -> Result<SegmentMatrix, AugmentError> {
    if sigma < 0.0 {
        return Err(AugmentError::NegativeParam { param: "sigma", value: sigma });
    }
    let values = segment
        .values()
        .iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(rng);
            v + sigma * z
        })
        .collect();
    SegmentMatrix::new(values, segment.rows(), segment.layout().clone())
}

/// Add one constant offset per channel, drawn uniformly from
/// [-halfwidth, +halfwidth] and broadcast over all rows.
pub fn add_bias<R: Rng>(
    segment: &SegmentMatrix,
    halfwidth: f64,
    rng: &mut R,
) -> Result<SegmentMatrix, AugmentError> {
    if halfwidth < 0.0 {
        return Err(AugmentError::NegativeParam { param: "halfwidth", value: halfwidth });
    }
    let cols = segment.cols();
    let offsets: Vec<f64> =
        (0..cols).map(|_| halfwidth * (2.0 * rng.gen::<f64>() - 1.0)).collect();
    let values = segment
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| v + offsets[i % cols])
        .collect();
    SegmentMatrix::new(values, segment.rows(), segment.layout().clone())
}

fn augmented_copy(
    window: &LabeledWindow,
    segment: SegmentMatrix,
) -> LabeledWindow {
    LabeledWindow::new(
        segment,
        window.label.clone(),
        window.subject_id.clone(),
        Provenance::Augmented,
        Some(window.id),
    )
}

/// Expand a window set 4x: the originals followed by their rotated, noised
/// and biased copies, in that order. Labels, subjects and (for originals)
/// provenance are preserved; copies are tagged augmented with their origin
/// window id. Noise and bias use independent per-window substreams of
/// `params.seed`, so parallel order never changes results.
pub fn augment_dataset(dataset: &Dataset, params: &AugmentParams) -> Result<Dataset, AugmentError> {
    params.validate()?;
    if dataset.windows.is_empty() {
        return Err(AugmentError::EmptyDataset);
    }

    let rotated: Vec<LabeledWindow> = dataset
        .windows
        .par_iter()
        .map(|w| Ok(augmented_copy(w, rotate_z(&w.segment, params.theta)?)))
        .collect::<Result<_, AugmentError>>()?;
    let noised: Vec<LabeledWindow> = dataset
        .windows
        .par_iter()
        .map(|w| {
            let mut rng = substream(sub_seed(params.seed, w.id), 0);
            Ok(augmented_copy(w, add_gaussian_noise(&w.segment, params.noise_std, &mut rng)?))
        })
        .collect::<Result<_, AugmentError>>()?;
    let biased: Vec<LabeledWindow> = dataset
        .windows
        .par_iter()
        .map(|w| {
            let mut rng = substream(sub_seed(params.seed, w.id), 1);
            Ok(augmented_copy(w, add_bias(&w.segment, params.bias_halfwidth, &mut rng)?))
        })
        .collect::<Result<_, AugmentError>>()?;

    let mut windows = dataset.windows.clone();
    windows.extend(rotated);
    windows.extend(noised);
    windows.extend(biased);
    let mut meta = dataset.meta.clone();
    meta.seeds.push(params.seed);
    Ok(Dataset { windows, meta })
}
