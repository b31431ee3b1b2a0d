//! File-level evaluation and the plain-text report table.

use std::fmt::Write;
use std::path::Path;

use densecap_core::eval::{evaluate_corpus, EvalReport, GroundTruth, Predictions, UnigramF1};

use crate::data_io::{load_ground_truth, load_predictions};
use crate::error::Result;

/// Scores predictions against ground truth with the in-repo metrics (CIDEr
/// and the SODA-style score with unigram F1 as the sentence score).
pub fn evaluate(ground_truth: &GroundTruth, predictions: &Predictions) -> Result<EvalReport> {
    Ok(evaluate_corpus(ground_truth, predictions, &UnigramF1, None)?)
}

pub fn evaluate_files(predictions: &Path, ground_truth: &Path) -> Result<EvalReport> {
    let gt = load_ground_truth(ground_truth)?;
    let preds = load_predictions(predictions)?;
    evaluate(&gt, &preds)
}

pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:>9}  {:>7}  {:>9}  {:>7}  {:>7}", "tIoU", "matched", "precision", "recall", "CIDEr");
    for t in &report.thresholds {
        let _ = writeln!(
            out,
            "{:>9.1}  {:>7}  {:>9.4}  {:>7.4}  {:>7.4}",
            t.threshold, t.matched, t.precision, t.recall, t.cider
        );
    }
    let _ = writeln!(
        out,
        "{:>9}  {:>7}  {:>9.4}  {:>7.4}  {:>7.4}",
        "mean", "", report.precision, report.recall, report.cider
    );
    let _ = writeln!(out, "SODA-style: {:.4}", report.soda);
    if let Some((name, value)) = &report.external {
        let _ = writeln!(out, "{name}: {value:.4}");
    }
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}
