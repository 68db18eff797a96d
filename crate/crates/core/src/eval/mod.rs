//! Cross-validation protocols, macro F1, and the experiment matrix over
//! training configurations.
//!
//! Folds always partition the real windows; virtual and augmented windows
//! have no test subject and stay in every training split. Test splits are
//! pure real data and are never subsampled. Per repeat, confusion is
//! accumulated across folds and macro F1 is computed from the accumulated
//! matrix (per-fold scores are also kept for inspection); the report carries
//! mean and population std over the repeat seeds.

mod report;

pub use report::{emit_report, ClassF1, ConfigEntry, EvalReport, FoldScore, ReportMetadata, RepeatResult};

use crate::augment::AugmentParams;
use crate::classifier::{train_forest, TrainError, TrainParams};
use crate::features::{featurize_dataset, EcdfSpec, FeatureError, FeatureVector};
use crate::motion_io::Provenance;
use crate::pipeline::{
    compose_configuration, subsample_fraction, Dataset, PipelineError, TrainingConfig,
};
use crate::rng::{hash_str, sub_seed, substream_tagged};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("leave-one-subject-out needs at least 2 distinct real subjects, found {0}")]
    TooFewSubjects(usize),
    #[error("stratified k-fold needs k >= 2, got {0}")]
    BadK(usize),
    #[error("class '{class}' has {count} real windows, fewer than k = {k}")]
    ClassTooSmall { class: String, count: usize, k: usize },
    #[error("confusion matrix is empty")]
    EmptyConfusion,
    #[error("unknown label '{0}'")]
    UnknownLabel(String),
    #[error("test split contains non-real window {0}")]
    TestContamination(u64),
    #[error("report has no entries")]
    EmptyReport,
    #[error("experiment matrix needs at least one {0}")]
    EmptyMatrixAxis(&'static str),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which cross-validation protocol to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FoldKind {
    Loso,
    Stratified { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    #[serde(flatten)]
    pub kind: FoldKind,
    #[serde(default)]
    pub seed: u64,
}

impl FoldSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        if let FoldKind::Stratified { k } = self.kind {
            if k < 2 {
                return Err(EvalError::BadK(k));
            }
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        match self.kind {
            FoldKind::Loso => "loso".to_string(),
            FoldKind::Stratified { k } => format!("stratified-{k}"),
        }
    }
}

/// One train/test partition, as indices into the dataset's windows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub name: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn is_real_subject_window(ds: &Dataset, i: usize) -> Option<&str> {
    let w = &ds.windows[i];
    if w.provenance == Provenance::Real {
        w.subject_id.as_deref()
    } else {
        None
    }
}

/// One fold per distinct real subject: that subject's windows are the test
/// set, everything else (other subjects plus any virtual/augmented windows)
/// trains.
pub fn loso_folds(ds: &Dataset) -> Result<Vec<Fold>, EvalError> {
    let subjects: BTreeSet<&str> =
        (0..ds.len()).filter_map(|i| is_real_subject_window(ds, i)).collect();
    if subjects.len() < 2 {
        return Err(EvalError::TooFewSubjects(subjects.len()));
    }
    Ok(subjects
        .into_iter()
        .map(|subject| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..ds.len()).partition(|&i| is_real_subject_window(ds, i) == Some(subject));
            Fold { name: subject.to_string(), train, test }
        })
        .collect())
}

/// Per-class round-robin assignment of the real windows to k folds after a
/// seeded shuffle; per-class fold counts differ by at most one. Non-real
/// windows stay in every training split.
pub fn stratified_kfold(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<Fold>, EvalError> {
    if k < 2 {
        return Err(EvalError::BadK(k));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut always_train = Vec::new();
    for (i, w) in ds.windows.iter().enumerate() {
        if w.provenance == Provenance::Real {
            by_class.entry(w.label.as_str()).or_default().push(i);
        } else {
            always_train.push(i);
        }
    }
    let mut assignment = vec![0usize; ds.len()];
    for (class, mut indices) in by_class {
        if indices.len() < k {
            return Err(EvalError::ClassTooSmall {
                class: class.to_string(),
                count: indices.len(),
                k,
            });
        }
        // Sort by stable id so the shuffle outcome does not depend on the
        // dataset's window order.
        indices.sort_by_key(|&i| ds.windows[i].id);
        let mut rng = substream_tagged(seed, class);
        indices.shuffle(&mut rng);
        for (pos, &i) in indices.iter().enumerate() {
            assignment[i] = pos % k;
        }
    }
    Ok((0..k)
        .map(|fold| {
            let mut train: Vec<usize> = (0..ds.len())
                .filter(|&i| {
                    ds.windows[i].provenance == Provenance::Real && assignment[i] != fold
                })
                .collect();
            let test: Vec<usize> = (0..ds.len())
                .filter(|&i| {
                    ds.windows[i].provenance == Provenance::Real && assignment[i] == fold
                })
                .collect();
            train.extend(always_train.iter().copied());
            train.sort_unstable();
            Fold { name: format!("fold{fold}"), train, test }
        })
        .collect())
}

/// Multiclass confusion counts; rows are truth, columns predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> Self {
        let k = classes.len();
        ConfusionMatrix { classes, counts: vec![0; k * k] }
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        let k = self.classes.len();
        self.counts[truth * k + predicted] += 1;
    }

    pub fn add_labels(&mut self, truth: &str, predicted: &str) -> Result<(), EvalError> {
        let t = self
            .classes
            .iter()
            .position(|c| c == truth)
            .ok_or_else(|| EvalError::UnknownLabel(truth.to_string()))?;
        let p = self
            .classes
            .iter()
            .position(|c| c == predicted)
            .ok_or_else(|| EvalError::UnknownLabel(predicted.to_string()))?;
        self.add(t, p);
        Ok(())
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes.len() + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn row_sum(&self, class: usize) -> u64 {
        (0..self.classes.len()).map(|p| self.get(class, p)).sum()
    }

    fn col_sum(&self, class: usize) -> u64 {
        (0..self.classes.len()).map(|t| self.get(t, class)).sum()
    }
}

/// Macro F1 plus the per-class vector. Classes that never occur as truth or
/// prediction are `None` and excluded from the macro average.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroScores {
    pub macro_f1: f64,
    pub per_class: Vec<Option<f64>>,
}

/// Per class: P = TP/(TP+FP), R = TP/(TP+FN), F1 = 2PR/(P+R), with zero
/// denominators scoring zero; the macro average is the unweighted mean over
/// classes present as truth or prediction.
pub fn macro_f1(cm: &ConfusionMatrix) -> Result<MacroScores, EvalError> {
    if cm.total() == 0 {
        return Err(EvalError::EmptyConfusion);
    }
    let k = cm.class_count();
    let mut per_class = Vec::with_capacity(k);
    let mut sum = 0.0;
    let mut included = 0usize;
    for c in 0..k {
        let tp = cm.get(c, c) as f64;
        let truth_total = cm.row_sum(c) as f64;
        let predicted_total = cm.col_sum(c) as f64;
        if truth_total == 0.0 && predicted_total == 0.0 {
            per_class.push(None);
            continue;
        }
        let precision = if predicted_total > 0.0 { tp / predicted_total } else { 0.0 };
        let recall = if truth_total > 0.0 { tp / truth_total } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(Some(f1));
        sum += f1;
        included += 1;
    }
    Ok(MacroScores { macro_f1: sum / included as f64, per_class })
}

/// The windowed datasets an experiment draws from.
#[derive(Debug, Clone, Default)]
pub struct ExperimentSources {
    pub real: Dataset,
    pub virtual_text: Dataset,
    pub virtual_video: Dataset,
}

/// Everything the matrix needs beyond the sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatrixParams {
    pub augment: AugmentParams,
    pub features: EcdfSpec,
    pub forest: TrainParams,
    /// One cross-validation repeat per seed.
    pub repeat_seeds: Vec<u64>,
    /// Real-training-data fractions to evaluate, e.g. [1.0, 0.1].
    pub fractions: Vec<f64>,
}

impl Default for MatrixParams {
    fn default() -> Self {
        MatrixParams {
            augment: AugmentParams::default(),
            features: EcdfSpec::default(),
            forest: TrainParams::default(),
            repeat_seeds: vec![17, 29, 43],
            fractions: vec![1.0, 0.1],
        }
    }
}

fn subset(ds: &Dataset, indices: &[usize]) -> Dataset {
    Dataset {
        windows: indices.iter().map(|&i| ds.windows[i].clone()).collect(),
        meta: ds.meta.clone(),
    }
}

fn population_std(values: &[f64], mean: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Run every (configuration, fraction) cell of the experiment matrix.
///
/// Per repeat seed: build folds on the real dataset, subsample the real
/// training split only, compose the configured training set, train the
/// forest, and accumulate confusion across folds. Test splits are always
/// unmodified real windows.
pub fn run_experiment_matrix(
    sources: &ExperimentSources,
    configs: &[TrainingConfig],
    fold: &FoldSpec,
    params: &MatrixParams,
) -> Result<EvalReport, EvalError> {
    fold.validate()?;
    if configs.is_empty() {
        return Err(EvalError::EmptyMatrixAxis("configuration"));
    }
    if params.fractions.is_empty() {
        return Err(EvalError::EmptyMatrixAxis("fraction"));
    }
    if params.repeat_seeds.is_empty() {
        return Err(EvalError::EmptyMatrixAxis("repeat seed"));
    }
    if sources.real.is_empty() {
        return Err(EvalError::Pipeline(PipelineError::EmptyRealDataset));
    }

    let classes: Vec<String> =
        sources.real.labels().into_iter().map(str::to_string).collect();
    // Test features never change; compute them once, parallel to windows.
    let real_features: Vec<FeatureVector> =
        featurize_dataset(&sources.real, &params.features)?;

    let mut entries = Vec::new();
    for &config in configs {
        for &fraction in &params.fractions {
            let mut repeats = Vec::with_capacity(params.repeat_seeds.len());
            for &seed in &params.repeat_seeds {
                let folds = match fold.kind {
                    FoldKind::Loso => loso_folds(&sources.real)?,
                    FoldKind::Stratified { k } => stratified_kfold(&sources.real, k, seed)?,
                };
                let mut accumulated = ConfusionMatrix::new(classes.clone());
                let mut fold_scores = Vec::with_capacity(folds.len());
                for (fi, f) in folds.iter().enumerate() {
                    for &i in &f.test {
                        if sources.real.windows[i].provenance != Provenance::Real {
                            return Err(EvalError::TestContamination(sources.real.windows[i].id));
                        }
                    }
                    let real_train = subset(&sources.real, &f.train);
                    let real_train = if fraction < 1.0 {
                        let subsample_seed =
                            sub_seed(sub_seed(seed, hash_str("subsample")), fi as u64);
                        subsample_fraction(&real_train, fraction, subsample_seed)?
                    } else {
                        real_train
                    };
                    let composed = compose_configuration(
                        &real_train,
                        &sources.virtual_text,
                        &sources.virtual_video,
                        config,
                        &params.augment,
                    )?;
                    let train_features = featurize_dataset(&composed, &params.features)?;
                    let forest_params = TrainParams {
                        seed: sub_seed(sub_seed(seed, hash_str("forest")), fi as u64),
                        ..params.forest
                    };
                    let model = train_forest(&train_features, &forest_params)?;
                    let mut fold_cm = ConfusionMatrix::new(classes.clone());
                    for &i in &f.test {
                        let truth = &sources.real.windows[i].label;
                        let predicted = model.predict(&real_features[i].values)?.class;
                        fold_cm.add_labels(truth, &predicted)?;
                        accumulated.add_labels(truth, &predicted)?;
                    }
                    fold_scores.push(FoldScore {
                        fold: f.name.clone(),
                        macro_f1: macro_f1(&fold_cm)?.macro_f1,
                    });
                }
                let scores = macro_f1(&accumulated)?;
                repeats.push(RepeatResult {
                    seed,
                    macro_f1: scores.macro_f1,
                    fold_scores,
                    per_class: classes
                        .iter()
                        .zip(&scores.per_class)
                        .map(|(class, f1)| ClassF1 { class: class.clone(), f1: *f1 })
                        .collect(),
                });
            }
            let values: Vec<f64> = repeats.iter().map(|r| r.macro_f1).collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let std = population_std(&values, mean);
            let per_class_mean = classes
                .iter()
                .enumerate()
                .map(|(c, class)| {
                    let observed: Vec<f64> =
                        repeats.iter().filter_map(|r| r.per_class[c].f1).collect();
                    ClassF1 {
                        class: class.clone(),
                        f1: (!observed.is_empty())
                            .then(|| observed.iter().sum::<f64>() / observed.len() as f64),
                    }
                })
                .collect();
            entries.push(ConfigEntry {
                config,
                fraction,
                mean_macro_f1: mean,
                std_macro_f1: std,
                repeats,
                per_class_mean,
            });
        }
    }

    Ok(EvalReport {
        fold_kind: fold.describe(),
        entries,
        metadata: ReportMetadata {
            repeat_seeds: params.repeat_seeds.clone(),
            fractions: params.fractions.clone(),
            real_hash: sources.real.content_hash(),
            virtual_text_hash: sources.virtual_text.content_hash(),
            virtual_video_hash: sources.virtual_video.content_hash(),
            forest: params.forest,
            features: params.features,
            augment: params.augment.clone(),
        },
    })
}
