use std::path::Path;

use serde::{Deserialize, Serialize};

use super::edit::{align, edit_distance, l_similarity, Alignment};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateResult {
    pub truth: String,
    pub predicted: String,
    pub distance: usize,
}

/// Recognition scores over a set of plates.
///
/// `cer` and `wer` are total edit distance over total reference length, so they
/// can exceed 1 when predictions contain many insertions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecognitionReport {
    pub ema: f64,
    pub l_sim: f64,
    pub cer: f64,
    pub wer: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_plate: Vec<PlateResult>,
    /// Plates dropped because their ground truth was empty.
    pub skipped_empty_truth: usize,
    /// Plates the adapter failed on; scored with an empty prediction.
    pub unrecognized: usize,
    pub adapter: Option<String>,
}

impl RecognitionReport {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores `(truth, predicted)` pairs. Both sides are trimmed; case is kept.
pub fn evaluate_plates<S: AsRef<str>, P: AsRef<str>>(pairs: &[(S, P)]) -> Result<RecognitionReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("evaluate_plates needs at least one plate".into()));
    }
    let mut per_plate = Vec::with_capacity(pairs.len());
    let mut skipped = 0;
    let (mut exact, mut lsim) = (0usize, 0.0);
    let (mut char_dist, mut char_len) = (0usize, 0usize);
    let (mut word_dist, mut word_len) = (0usize, 0usize);
    let mut total = Alignment::default();
    for (t, p) in pairs {
        let (truth, pred) = (t.as_ref().trim(), p.as_ref().trim());
        if truth.is_empty() {
            log::warn!("skipping plate with empty ground truth (prediction {pred:?})");
            skipped += 1;
            continue;
        }
        let tc: Vec<char> = truth.chars().collect();
        let pc: Vec<char> = pred.chars().collect();
        let a = align(&tc, &pc);
        total.matches += a.matches;
        total.substitutions += a.substitutions;
        total.insertions += a.insertions;
        total.deletions += a.deletions;
        let tw: Vec<&str> = truth.split_whitespace().collect();
        let pw: Vec<&str> = pred.split_whitespace().collect();
        word_dist += edit_distance(&tw, &pw);
        word_len += tw.len();
        char_dist += a.distance();
        char_len += tc.len();
        exact += usize::from(truth == pred);
        lsim += l_similarity(truth, pred);
        per_plate.push(PlateResult {
            truth: truth.to_string(),
            predicted: pred.to_string(),
            distance: a.distance(),
        });
    }
    if per_plate.is_empty() {
        return Err(Error::InvalidArgument("every plate has an empty ground truth".into()));
    }
    let n = per_plate.len() as f64;
    let precision = ratio(total.matches, total.matches + total.substitutions + total.insertions);
    let recall = ratio(total.matches, total.matches + total.substitutions + total.deletions);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(RecognitionReport {
        ema: exact as f64 / n,
        l_sim: lsim / n,
        cer: ratio(char_dist, char_len),
        wer: ratio(word_dist, word_len),
        precision,
        recall,
        f1,
        per_plate,
        skipped_empty_truth: skipped,
        unrecognized: 0,
        adapter: None,
    })
}
