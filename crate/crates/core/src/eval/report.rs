//! Evaluation report structure and file emission.
//!
//! `emit_report` writes three artifacts with stable ordering and formatting,
//! so re-running on the same report produces byte-identical files:
//!
//! - `results.csv` — long format `config,fraction,repeat,fold,macro_f1`,
//!   one row per fold plus an `all` row for the confusion accumulated
//!   across folds (the headline number).
//! - `summary.md` — one mean ± std row per (configuration, fraction).
//! - `per_class.csv` — per-configuration per-class mean F1.

use super::EvalError;
use crate::augment::AugmentParams;
use crate::classifier::TrainParams;
use crate::features::EcdfSpec;
use crate::pipeline::TrainingConfig;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub fold: String,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassF1 {
    pub class: String,
    /// `None` when the class never appeared as truth or prediction.
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub seed: u64,
    /// Macro F1 of the confusion accumulated across folds.
    pub macro_f1: f64,
    pub fold_scores: Vec<FoldScore>,
    pub per_class: Vec<ClassF1>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEntry {
    pub config: TrainingConfig,
    pub fraction: f64,
    pub mean_macro_f1: f64,
    pub std_macro_f1: f64,
    pub repeats: Vec<RepeatResult>,
    pub per_class_mean: Vec<ClassF1>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub repeat_seeds: Vec<u64>,
    pub fractions: Vec<f64>,
    pub real_hash: String,
    pub virtual_text_hash: String,
    pub virtual_video_hash: String,
    pub forest: TrainParams,
    pub features: EcdfSpec,
    pub augment: AugmentParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fold_kind: String,
    pub entries: Vec<ConfigEntry>,
    pub metadata: ReportMetadata,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<EvalReport, EvalError> {
        serde_json::from_str(text)
            .map_err(|e| EvalError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
    }
}

/// Render `results.csv` (long format, per-fold rows plus the accumulated
/// `all` row per repeat).
pub fn render_results_csv(report: &EvalReport) -> String {
    let mut out = String::from("config,fraction,repeat,fold,macro_f1\n");
    for entry in &report.entries {
        for (ri, repeat) in entry.repeats.iter().enumerate() {
            for fs in &repeat.fold_scores {
                out.push_str(&format!(
                    "{},{},{},{},{:.6}\n",
                    entry.config, entry.fraction, ri, fs.fold, fs.macro_f1
                ));
            }
            out.push_str(&format!(
                "{},{},{},all,{:.6}\n",
                entry.config, entry.fraction, ri, repeat.macro_f1
            ));
        }
    }
    out
}

/// Render `summary.md` (mean ± std per configuration and fraction).
pub fn render_summary_md(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str("# Evaluation summary\n\n");
    out.push_str(&format!(
        "Cross-validation: {} over repeat seeds {:?}.\n\n",
        report.fold_kind, report.metadata.repeat_seeds
    ));
    out.push_str("| configuration | fraction | macro F1 (mean ± std) |\n");
    out.push_str("|---|---|---|\n");
    for entry in &report.entries {
        out.push_str(&format!(
            "| {} | {} | {:.4} ± {:.4} |\n",
            entry.config, entry.fraction, entry.mean_macro_f1, entry.std_macro_f1
        ));
    }
    out
}

/// Render `per_class.csv` (mean per-class F1 per configuration cell).
pub fn render_per_class_csv(report: &EvalReport) -> String {
    let mut out = String::from("config,fraction,class,f1\n");
    for entry in &report.entries {
        for c in &entry.per_class_mean {
            match c.f1 {
                Some(f1) => out.push_str(&format!(
                    "{},{},{},{:.6}\n",
                    entry.config, entry.fraction, c.class, f1
                )),
                None => out.push_str(&format!("{},{},{},\n", entry.config, entry.fraction, c.class)),
            }
        }
    }
    out
}

/// Write `results.csv`, `summary.md` and `per_class.csv` into `dir`.
/// An empty report is an error; no files are written in that case.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<(), EvalError> {
    if report.entries.is_empty() {
        return Err(EvalError::EmptyReport);
    }
    fs::create_dir_all(dir)?;
    fs::write(dir.join("results.csv"), render_results_csv(report))?;
    fs::write(dir.join("summary.md"), render_summary_md(report))?;
    fs::write(dir.join("per_class.csv"), render_per_class_csv(report))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn toy_report() -> EvalReport {
        let repeat = |seed: u64, f1: f64| RepeatResult {
            seed,
            macro_f1: f1,
            fold_scores: vec![
                FoldScore { fold: "s1".into(), macro_f1: f1 - 0.01 },
                FoldScore { fold: "s2".into(), macro_f1: f1 + 0.01 },
            ],
            per_class: vec![
                ClassF1 { class: "a".into(), f1: Some(f1) },
                ClassF1 { class: "b".into(), f1: None },
            ],
        };
        EvalReport {
            fold_kind: "loso".into(),
            entries: vec![ConfigEntry {
                config: TrainingConfig::RealOnly,
                fraction: 0.1,
                mean_macro_f1: 0.5,
                std_macro_f1: 0.01,
                repeats: vec![repeat(17, 0.49), repeat(29, 0.51)],
                per_class_mean: vec![
                    ClassF1 { class: "a".into(), f1: Some(0.5) },
                    ClassF1 { class: "b".into(), f1: None },
                ],
            }],
            metadata: ReportMetadata {
                repeat_seeds: vec![17, 29],
                fractions: vec![0.1],
                real_hash: "00".into(),
                virtual_text_hash: "11".into(),
                virtual_video_hash: "22".into(),
                forest: TrainParams::default(),
                features: EcdfSpec::default(),
                augment: AugmentParams::default(),
            },
        }
    }

    #[test]
    fn empty_report_is_rejected_before_writing() {
        let dir = tempdir().unwrap();
        let mut report = toy_report();
        report.entries.clear();
        assert!(matches!(emit_report(&report, dir.path()), Err(EvalError::EmptyReport)));
        assert!(!dir.path().join("results.csv").exists());
    }

    #[test]
    fn results_rows_cover_folds_plus_accumulated() {
        let csv = render_results_csv(&toy_report());
        let lines: Vec<&str> = csv.lines().collect();
        // Header + 2 repeats x (2 folds + all).
        assert_eq!(lines.len(), 1 + 2 * 3);
        assert_eq!(lines[0], "config,fraction,repeat,fold,macro_f1");
        assert_eq!(lines[1], "real-only,0.1,0,s1,0.480000");
        assert!(lines[3].ends_with(",all,0.490000"));
    }

    #[test]
    fn summary_row_count_is_entry_count() {
        let md = render_summary_md(&toy_report());
        let data_rows =
            md.lines().filter(|l| l.starts_with("| real")).count();
        assert_eq!(data_rows, 1);
        assert!(md.contains("| real-only | 0.1 | 0.5000 ± 0.0100 |"));
    }

    #[test]
    fn emission_is_byte_deterministic() {
        let report = toy_report();
        let a = tempdir().unwrap();
        let b = tempdir().unwrap();
        emit_report(&report, a.path()).unwrap();
        emit_report(&report, b.path()).unwrap();
        for file in ["results.csv", "summary.md", "per_class.csv"] {
            assert_eq!(
                fs::read(a.path().join(file)).unwrap(),
                fs::read(b.path().join(file)).unwrap(),
                "{file}"
            );
        }
    }

    #[test]
    fn report_json_round_trips() {
        let report = toy_report();
        let back = EvalReport::from_json(&report.to_json()).unwrap();
        assert_eq!(report, back);
    }

    #[test]
    fn absent_class_renders_an_empty_cell() {
        let csv = render_per_class_csv(&toy_report());
        assert!(csv.contains("real-only,0.1,b,\n"));
    }
}
