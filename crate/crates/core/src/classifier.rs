//! Seeded, deterministic random forest over feature vectors.
//!
//! Trees train on bootstrap resamples drawn from per-tree substreams of the
//! master seed, with samples keyed by their stable ids first, so results do
//! not depend on input order, scheduling, or thread count. Splits maximize
//! Gini impurity decrease over a random feature subset per node, with
//! thresholds at midpoints between consecutive distinct values and ties
//! broken toward the lowest feature index and threshold.

use crate::features::FeatureVector;
use crate::rng::substream;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training needs at least 2 classes, found {0}")]
    SingleClass(usize),
    #[error("feature vector has {found} values, expected {expected}")]
    InconsistentLength { expected: usize, found: usize },
    #[error("no training samples")]
    EmptyInput,
    #[error("class counts sum to zero")]
    ZeroTotal,
    #[error("model file corrupt: {0}")]
    CorruptModel(String),
}

/// How many candidate features each split draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSubset {
    /// Square root of the feature count, rounded, at least one.
    Sqrt,
    Exact(usize),
}

impl FeatureSubset {
    fn count(self, n_features: usize) -> usize {
        match self {
            FeatureSubset::Sqrt => ((n_features as f64).sqrt().round() as usize).max(1),
            FeatureSubset::Exact(k) => k.clamp(1, n_features),
        }
    }
}

impl Serialize for FeatureSubset {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            FeatureSubset::Sqrt => serializer.serialize_str("sqrt"),
            FeatureSubset::Exact(n) => serializer.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for FeatureSubset {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Str(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(n) => Ok(FeatureSubset::Exact(n as usize)),
            Raw::Str(s) if s == "sqrt" => Ok(FeatureSubset::Sqrt),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "features_per_split must be \"sqrt\" or an integer, got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub features_per_split: FeatureSubset,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            n_trees: 100,
            max_depth: 20,
            min_samples_leaf: 2,
            features_per_split: FeatureSubset::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.n_trees < 1 || self.max_depth < 1 || self.min_samples_leaf < 1 {
            return Err(TrainError::CorruptModel(
                "n_trees, max_depth and min_samples_leaf must all be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Gini impurity `1 - sum((n_i / n)^2)` of a class-count vector.
pub fn gini_impurity(counts: &[usize]) -> Result<f64, TrainError> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(TrainError::ZeroTotal);
    }
    Ok(gini_from_counts(counts, total as f64))
}

fn gini_from_counts(counts: &[usize], total: f64) -> f64 {
    1.0 - counts.iter().map(|&c| (c as f64 / total).powi(2)).sum::<f64>()
}

/// Array-encoded tree node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { counts: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    /// Class index this tree votes for: the leaf's argmax, ties toward the
    /// lowest class index.
    pub fn vote(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split { feature, threshold, left, right } => {
                    at = if x[*feature] < *threshold { *left } else { *right };
                }
                Node::Leaf { counts } => {
                    let mut best = 0;
                    for (i, &c) in counts.iter().enumerate() {
                        if c > counts[best] {
                            best = i;
                        }
                    }
                    return best;
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Reproducibility record stored inside the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub params: TrainParams,
    /// Hash over (id, label, values) of the training inputs.
    pub data_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<DecisionTree>,
    /// Class dictionary in sorted order; votes and predictions index it.
    pub classes: Vec<String>,
    pub feature_len: usize,
    pub manifest: TrainingManifest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class_index: usize,
    pub class: String,
    /// Per-class fraction of tree votes; sums to one.
    pub vote_fractions: Vec<f64>,
}

struct TreeBuilder<'a> {
    rows: &'a [(&'a [f64], usize)],
    n_classes: usize,
    n_features: usize,
    params: &'a TrainParams,
    rng: rand_chacha::ChaCha8Rng,
    feature_pool: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> TreeBuilder<'a> {
    fn class_counts(&self, indices: &[usize]) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes];
        for &i in indices {
            counts[self.rows[i].1] += 1;
        }
        counts
    }

    /// Best (feature, threshold, gain) over a fresh random feature subset.
    fn best_split(&mut self, indices: &[usize], parent_gini: f64) -> Option<(usize, f64)> {
        let k = self.params.features_per_split.count(self.n_features);
        // Partial Fisher-Yates over the feature pool, then sort the chosen
        // subset so tie-breaking lands on the lowest feature index.
        for i in 0..k {
            let j = self.rng.gen_range(i..self.feature_pool.len());
            self.feature_pool.swap(i, j);
        }
        let mut subset: Vec<usize> = self.feature_pool[..k].to_vec();
        subset.sort_unstable();

        let n = indices.len();
        let msl = self.params.min_samples_leaf;
        let mut best: Option<(f64, usize, f64)> = None; // (gain, feature, threshold)
        let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(n);
        for feature in subset {
            sorted.clear();
            sorted.extend(indices.iter().map(|&i| (self.rows[i].0[feature], self.rows[i].1)));
            sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
            let mut left = vec![0usize; self.n_classes];
            let mut right = self.class_counts(indices);
            for split_at in 1..n {
                let (prev_value, prev_class) = sorted[split_at - 1];
                left[prev_class] += 1;
                right[prev_class] -= 1;
                let value = sorted[split_at].0;
                if value == prev_value {
                    continue;
                }
                if split_at < msl || n - split_at < msl {
                    continue;
                }
                let threshold = prev_value + (value - prev_value) / 2.0;
                let nl = split_at as f64;
                let nr = (n - split_at) as f64;
                let gain = parent_gini
                    - nl / n as f64 * gini_from_counts(&left, nl)
                    - nr / n as f64 * gini_from_counts(&right, nr);
                // Strictly-greater keeps the first (lowest feature, lowest
                // threshold) candidate on ties.
                if gain > best.map_or(0.0, |(g, _, _)| g) {
                    best = Some((gain, feature, threshold));
                }
            }
        }
        best.map(|(_, feature, threshold)| (feature, threshold))
    }

    fn build(&mut self, indices: &mut Vec<usize>, depth: usize) -> usize {
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { counts: Vec::new() });

        let counts = self.class_counts(indices);
        let n = indices.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let splittable =
            depth < self.params.max_depth && !pure && n >= 2 * self.params.min_samples_leaf;
        let split = if splittable {
            self.best_split(indices, gini_from_counts(&counts, n as f64))
        } else {
            None
        };

        match split {
            None => {
                self.nodes[at] = Node::Leaf { counts };
                at
            }
            Some((feature, threshold)) => {
                let (mut left_idx, mut right_idx): (Vec<usize>, Vec<usize>) =
                    indices.drain(..).partition(|&i| self.rows[i].0[feature] < threshold);
                let left = self.build(&mut left_idx, depth + 1);
                let right = self.build(&mut right_idx, depth + 1);
                self.nodes[at] = Node::Split { feature, threshold, left, right };
                at
            }
        }
    }
}

fn data_hash(rows: &[(&FeatureVector, usize)]) -> String {
    let mut hasher = Sha256::new();
    for (f, class) in rows {
        hasher.update(f.id.to_le_bytes());
        hasher.update((*class as u64).to_le_bytes());
        for v in &f.values {
            hasher.update(v.to_le_bytes());
        }
    }
    hex::encode(hasher.finalize())
}

/// Train a forest. Deterministic for a fixed seed and independent of input
/// order (samples are keyed by id before bootstrapping) and of thread count
/// (each tree owns a substream).
pub fn train_forest(
    features: &[FeatureVector],
    params: &TrainParams,
) -> Result<ForestModel, TrainError> {
    params.validate()?;
    if features.is_empty() {
        return Err(TrainError::EmptyInput);
    }
    let feature_len = features[0].values.len();
    for f in features {
        if f.values.len() != feature_len {
            return Err(TrainError::InconsistentLength {
                expected: feature_len,
                found: f.values.len(),
            });
        }
    }
    let classes: Vec<String> = features
        .iter()
        .map(|f| f.label.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if classes.len() < 2 {
        return Err(TrainError::SingleClass(classes.len()));
    }

    // Stable ordering before any randomness.
    let mut keyed: Vec<(&FeatureVector, usize)> = features
        .iter()
        .map(|f| {
            let class = classes.binary_search(&f.label).expect("built from labels");
            (f, class)
        })
        .collect();
    keyed.sort_by_key(|(f, _)| (f.id, f.label.clone()));
    let manifest = TrainingManifest { params: *params, data_hash: data_hash(&keyed) };
    let rows: Vec<(&[f64], usize)> =
        keyed.iter().map(|(f, class)| (f.values.as_slice(), *class)).collect();

    let n = rows.len();
    let n_classes = classes.len();
    let trees: Vec<DecisionTree> = (0..params.n_trees)
        .into_par_iter()
        .map(|tree_index| {
            let mut rng = substream(params.seed, tree_index as u64);
            let mut indices: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut builder = TreeBuilder {
                rows: &rows,
                n_classes,
                n_features: feature_len,
                params,
                rng,
                feature_pool: (0..feature_len).collect(),
                nodes: Vec::new(),
            };
            builder.build(&mut indices, 0);
            DecisionTree { nodes: builder.nodes }
        })
        .collect();

    Ok(ForestModel { trees, classes, feature_len, manifest })
}

impl ForestModel {
    /// Majority vote over the trees; ties break toward the lowest class
    /// index in dictionary order.
    pub fn predict(&self, values: &[f64]) -> Result<Prediction, TrainError> {
        if values.len() != self.feature_len {
            return Err(TrainError::InconsistentLength {
                expected: self.feature_len,
                found: values.len(),
            });
        }
        let mut votes = vec![0usize; self.classes.len()];
        for tree in &self.trees {
            votes[tree.vote(values)] += 1;
        }
        let mut best = 0;
        for (i, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = i;
            }
        }
        let total = self.trees.len() as f64;
        Ok(Prediction {
            class_index: best,
            class: self.classes[best].clone(),
            vote_fractions: votes.into_iter().map(|v| v as f64 / total).collect(),
        })
    }

    /// Hex digest of the serialized model; equal hashes mean equal models.
    pub fn model_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("model serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<ForestModel, TrainError> {
        serde_json::from_str(text).map_err(|e| TrainError::CorruptModel(e.to_string()))
    }
}
