//! Stratified fold assignment and error counting shared by the model
//! selection routines.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;

/// Attempts at drawing folds whose training parts all contain both classes.
pub const FOLD_ATTEMPTS: u64 = 5;

/// Fraction of positions where the two label vectors differ.
pub fn misclassification_rate(predicted: &[u8], actual: &[u8]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::validation(format!(
            "{} predictions for {} labels",
            predicted.len(),
            actual.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::validation("no labels to compare"));
    }
    let wrong = predicted.iter().zip(actual).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / actual.len() as f64)
}

/// Fold index of every sample. Each class is shuffled and dealt round-robin,
/// so class proportions are preserved per fold.
pub fn stratified_folds(labels: &[u8], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::validation("cross-validation needs at least 2 folds"));
    }
    if labels.len() < folds {
        return Err(Error::validation(format!(
            "{} samples cannot fill {folds} folds",
            labels.len()
        )));
    }
    for attempt in 0..FOLD_ATTEMPTS {
        let mut rng = seed::rng(seed::derive(seed, attempt));
        let mut assignment = vec![0usize; labels.len()];
        let mut next = 0usize;
        for class in [0u8, 1] {
            let mut idx: Vec<usize> = (0..labels.len()).filter(|i| labels[*i] == class).collect();
            idx.shuffle(&mut rng);
            for i in idx {
                assignment[i] = next % folds;
                next += 1;
            }
        }
        let ok = (0..folds).all(|f| {
            let mut seen = [false; 2];
            for (i, y) in labels.iter().enumerate() {
                if assignment[i] != f {
                    seen[*y as usize] = true;
                }
            }
            seen[0] && seen[1]
        });
        if ok {
            return Ok(assignment);
        }
    }
    Err(Error::validation(format!(
        "no fold assignment with two classes in every training part after {FOLD_ATTEMPTS} attempts"
    )))
}

/// `(train, test)` row indices of fold `f`.
pub fn fold_split(assignment: &[usize], f: usize) -> (Vec<usize>, Vec<usize>) {
    (0..assignment.len()).partition(|i| assignment[*i] != f)
}
