//! Inverse-ECDF window features for the classical classifier path.
//!
//! Each channel contributes `n_components` samples of its empirical
//! quantile function at the midpoints (i - 0.5) / m, linearly interpolated
//! between order statistics, optionally followed by the channel mean.

use crate::augment::SegmentMatrix;
use crate::motion_io::Provenance;
use crate::pipeline::Dataset;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("n_components must be >= 1")]
    BadComponentCount,
    #[error("empty window")]
    EmptyWindow,
}

/// Feature layout: quantile count per channel and whether the per-channel
/// mean is appended. The default (15 + mean) follows the ECDF representation
/// convention; set `include_mean: false` to read "15 components" as
/// mean-inclusive instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EcdfSpec {
    pub n_components: usize,
    pub include_mean: bool,
}

impl Default for EcdfSpec {
    fn default() -> Self {
        EcdfSpec { n_components: 15, include_mean: true }
    }
}

impl EcdfSpec {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.n_components < 1 {
            return Err(FeatureError::BadComponentCount);
        }
        Ok(())
    }

    /// Feature values per channel.
    pub fn per_channel(&self) -> usize {
        self.n_components + usize::from(self.include_mean)
    }
}

/// One window's feature values plus the labels the classifier needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Stable id inherited from the source window.
    pub id: u64,
    pub values: Vec<f64>,
    pub label: String,
    pub subject_id: Option<String>,
    pub provenance: Provenance,
}

/// Sample the empirical quantile function of a channel at the m midpoints
/// (i - 0.5) / m. The output is non-decreasing.
pub fn inverse_ecdf(channel: &[f64], m: usize) -> Vec<f64> {
    assert!(!channel.is_empty(), "inverse_ecdf needs at least one sample");
    assert!(m >= 1, "inverse_ecdf needs at least one component");
    let mut sorted = channel.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let t = sorted.len();
    (1..=m)
        .map(|i| {
            let p = (i as f64 - 0.5) / m as f64;
            let pos = p * (t - 1) as f64;
            let lo = pos.floor() as usize;
            let frac = pos - lo as f64;
            if lo + 1 >= t {
                sorted[t - 1]
            } else {
                sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
            }
        })
        .collect()
}

/// Featurize one window: per channel, `n_components` inverse-ECDF values
/// then (optionally) the channel mean, channels concatenated in layout order.
pub fn ecdf_features(
    window: &SegmentMatrix,
    spec: &EcdfSpec,
    id: u64,
    label: String,
    subject_id: Option<String>,
    provenance: Provenance,
) -> Result<FeatureVector, FeatureError> {
    spec.validate()?;
    if window.rows() == 0 || window.cols() == 0 {
        return Err(FeatureError::EmptyWindow);
    }
    let mut values = Vec::with_capacity(window.cols() * spec.per_channel());
    for c in 0..window.cols() {
        let channel = window.channel(c);
        values.extend(inverse_ecdf(&channel, spec.n_components));
        if spec.include_mean {
            values.push(channel.iter().sum::<f64>() / channel.len() as f64);
        }
    }
    Ok(FeatureVector { id, values, label, subject_id, provenance })
}

/// Featurize every window of a dataset (a pure map, parallel over windows).
pub fn featurize_dataset(ds: &Dataset, spec: &EcdfSpec) -> Result<Vec<FeatureVector>, FeatureError> {
    spec.validate()?;
    ds.windows
        .par_iter()
        .map(|w| {
            ecdf_features(
                &w.segment,
                spec,
                w.id,
                w.label.clone(),
                w.subject_id.clone(),
                w.provenance,
            )
        })
        .collect()
}

/// Feature export CSV: `ch<k>_q<i>` and `ch<k>_mean` columns, then
/// label/subject/provenance.
pub fn write_features_csv(features: &[FeatureVector], spec: &EcdfSpec, channels: usize) -> String {
    let mut header = Vec::new();
    for k in 0..channels {
        for i in 1..=spec.n_components {
            header.push(format!("ch{k}_q{i}"));
        }
        if spec.include_mean {
            header.push(format!("ch{k}_mean"));
        }
    }
    header.extend(["label".into(), "subject".into(), "provenance".into()]);
    let mut out = header.join(",");
    out.push('\n');
    for f in features {
        let mut row: Vec<String> = f.values.iter().map(f64::to_string).collect();
        row.push(f.label.clone());
        row.push(f.subject_id.clone().unwrap_or_default());
        row.push(f.provenance.label().to_string());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::ChannelLayout;

    fn segment(rows: &[&[f64]]) -> SegmentMatrix {
        let layout = ChannelLayout::from_sensors(&["s"]);
        let values: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        SegmentMatrix::new(values, rows.len(), layout).unwrap()
    }

    #[test]
    fn constant_channel_gives_constant_quantiles() {
        let out = inverse_ecdf(&[2.0; 9], 15);
        assert_eq!(out, vec![2.0; 15]);
    }

    #[test]
    fn two_sample_channel_interpolates_midpoint_quantiles() {
        // Sorted (0, 1), m = 2: p = (0.25, 0.75), positions p * (T-1).
        let out = inverse_ecdf(&[1.0, 0.0], 2);
        assert!((out[0] - 0.25).abs() < 1e-15);
        assert!((out[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn quantiles_are_sorted_ascending() {
        let channel = [3.0, -1.0, 0.5, 9.0, 2.0, 2.0, -4.0];
        let out = inverse_ecdf(&channel, 15);
        for pair in out.windows(2) {
            assert!(pair[0] <= pair[1]);
        }
    }

    #[test]
    fn constant_window_yields_all_equal_features() {
        let rows: Vec<&[f64]> = vec![&[2.0, 2.0, 2.0]; 5];
        let seg = segment(&rows);
        let f = ecdf_features(&seg, &EcdfSpec::default(), 0, "a".into(), None, Provenance::Real)
            .unwrap();
        assert_eq!(f.values.len(), 3 * 16);
        assert!(f.values.iter().all(|v| (v - 2.0).abs() < 1e-15));
    }

    #[test]
    fn feature_length_is_channels_times_sixteen_by_default() {
        let seg = segment(&[&[0.0, 1.0, 2.0], &[3.0, 4.0, 5.0]]);
        let f = ecdf_features(&seg, &EcdfSpec::default(), 0, "a".into(), None, Provenance::Real)
            .unwrap();
        assert_eq!(f.values.len(), 48);
        let no_mean = EcdfSpec { n_components: 15, include_mean: false };
        let f = ecdf_features(&seg, &no_mean, 0, "a".into(), None, Provenance::Real).unwrap();
        assert_eq!(f.values.len(), 45);
    }

    #[test]
    fn features_are_invariant_to_row_permutation() {
        let rows: Vec<Vec<f64>> =
            (0..10).map(|t| vec![t as f64, (t * t) as f64 * 0.1, -(t as f64)]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let seg = segment(&refs);
        let mut shuffled = rows.clone();
        shuffled.swap(0, 7);
        shuffled.swap(3, 9);
        shuffled.swap(2, 5);
        let refs2: Vec<&[f64]> = shuffled.iter().map(Vec::as_slice).collect();
        let seg2 = segment(&refs2);
        let spec = EcdfSpec::default();
        let a = ecdf_features(&seg, &spec, 0, "a".into(), None, Provenance::Real).unwrap();
        let b = ecdf_features(&seg2, &spec, 0, "a".into(), None, Provenance::Real).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn constant_shift_moves_every_feature_by_the_shift() {
        let rows: Vec<Vec<f64>> = (0..8).map(|t| vec![(t as f64).sin(), t as f64, 0.5]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let seg = segment(&refs);
        let shifted_rows: Vec<Vec<f64>> =
            rows.iter().map(|r| r.iter().map(|v| v + 3.25).collect()).collect();
        let refs2: Vec<&[f64]> = shifted_rows.iter().map(Vec::as_slice).collect();
        let seg2 = segment(&refs2);
        let spec = EcdfSpec::default();
        let a = ecdf_features(&seg, &spec, 0, "a".into(), None, Provenance::Real).unwrap();
        let b = ecdf_features(&seg2, &spec, 0, "a".into(), None, Provenance::Real).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((y - x - 3.25).abs() < 1e-12);
        }
    }

    #[test]
    fn export_header_shape() {
        let spec = EcdfSpec { n_components: 2, include_mean: true };
        let f = FeatureVector {
            id: 1,
            values: vec![0.0; 6],
            label: "walk".into(),
            subject_id: Some("s1".into()),
            provenance: Provenance::Real,
        };
        let csv = write_features_csv(&[f], &spec, 2);
        let header = csv.lines().next().unwrap();
        assert_eq!(header, "ch0_q1,ch0_q2,ch0_mean,ch1_q1,ch1_q2,ch1_mean,label,subject,provenance");
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // Quantile-function samples are non-decreasing and bounded by
            // the channel's extremes.
            #[test]
            fn quantiles_sorted_and_bounded(
                channel in proptest::collection::vec(-1e6f64..1e6, 1..60),
                m in 1usize..40,
            ) {
                let out = inverse_ecdf(&channel, m);
                prop_assert_eq!(out.len(), m);
                let lo = channel.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = channel.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                for pair in out.windows(2) {
                    prop_assert!(pair[0] <= pair[1]);
                }
                for v in &out {
                    prop_assert!(*v >= lo - 1e-9 && *v <= hi + 1e-9);
                }
            }
        }
    }
}
