//! Stratified k-fold cross-validation.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::eval::{confusion_from_probs, metrics};
use crate::learn::{fit_classifier, ClassifierConfig};
use crate::seed;

/// Mean and per-fold F1.
#[derive(Debug, Clone, PartialEq)]
pub struct CvScore {
    pub mean: f64,
    pub folds: Vec<f64>,
}

/// Fold index per sample. Each class is shuffled on its own and dealt
/// round-robin, so fold sizes per class differ by at most one.
pub fn stratified_folds(y: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidParam(format!("need at least 2 folds, got {k}")));
    }
    let mut fold_of = vec![0; y.len()];
    for (class, label) in [(false, "cv-legit"), (true, "cv-fake")] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if idx.len() < k {
            return Err(Error::FoldMissingClass(idx.len()));
        }
        idx.shuffle(&mut seed::rng(seed::derive(seed, label)));
        for (pos, i) in idx.into_iter().enumerate() {
            fold_of[i] = pos % k;
        }
    }
    Ok(fold_of)
}

/// Cross-validate an arbitrary fit-and-predict routine. `fit_predict`
/// receives the training rows and labels plus the held-out rows and returns
/// `p_fake` for each held-out row.
pub fn cross_validate<F>(x: &[Vec<f64>], y: &[bool], k: usize, seed: u64, mut fit_predict: F) -> Result<CvScore>
where
    F: FnMut(&[&[f64]], &[bool], &[&[f64]]) -> Result<Vec<f64>>,
{
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let fold_of = stratified_folds(y, k, seed)?;
    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let (mut tx, mut ty, mut vx, mut vy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for i in 0..x.len() {
            if fold_of[i] == f {
                vx.push(x[i].as_slice());
                vy.push(y[i]);
            } else {
                tx.push(x[i].as_slice());
                ty.push(y[i]);
            }
        }
        let probs = fit_predict(&tx, &ty, &vx)?;
        let c = confusion_from_probs(&probs, &vy, 0.5)?;
        folds.push(metrics("fold", c).f1.unwrap_or(0.0));
    }
    let mean = folds.iter().sum::<f64>() / k as f64;
    Ok(CvScore { mean, folds })
}

/// Mean F1 of a classifier configuration over `k` stratified folds.
pub fn cv_objective(x: &[Vec<f64>], y: &[bool], config: &ClassifierConfig, k: usize, seed: u64) -> Result<CvScore> {
    cross_validate(x, y, k, seed::derive(seed, "cv-folds"), |tx, ty, vx| {
        let model = fit_classifier(config, tx, ty)?;
        Ok(vx.iter().map(|r| model.predict_proba(r)).collect())
    })
}
