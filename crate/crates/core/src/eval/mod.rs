//! Classification metrics, calibration, and correlation.
//!
//! Fake is the positive class everywhere. A false accept (a fake profile
//! passed as legitimate) is therefore a false negative:
//!
//! * FAR = fn / (tp + fn)
//! * FRR = fp / (fp + tn)
//! * F1  = 2tp / (2tp + fp + fn)
//!
//! Rates with an empty denominator are `None` and print as `NA`.

pub mod report;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::Prediction;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

/// Count outcomes; `p_fake >= threshold` counts as a fake verdict.
pub fn confusion(preds: &[Prediction], truth: &[bool], threshold: f64) -> Result<ConfusionCounts> {
    let probs: Vec<f64> = preds.iter().map(|p| p.p_fake).collect();
    confusion_from_probs(&probs, truth, threshold)
}

pub fn confusion_from_probs(probs: &[f64], truth: &[bool], threshold: f64) -> Result<ConfusionCounts> {
    if probs.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: probs.len(),
            found: truth.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in probs.iter().zip(truth) {
        match (p >= threshold, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub subset: String,
    pub n: usize,
    pub counts: ConfusionCounts,
    pub f1: Option<f64>,
    pub far: Option<f64>,
    pub frr: Option<f64>,
    pub brier: Option<f64>,
}

pub fn metrics(subset: &str, c: ConfusionCounts) -> MetricReport {
    MetricReport {
        subset: subset.to_string(),
        n: c.total(),
        counts: c,
        f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
        far: ratio(c.fn_, c.tp + c.fn_),
        frr: ratio(c.fp, c.fp + c.tn),
        brier: None,
    }
}

/// Counts, rates and Brier score for one prediction set.
pub fn evaluate(subset: &str, probs: &[f64], truth: &[bool]) -> Result<MetricReport> {
    let c = confusion_from_probs(probs, truth, 0.5)?;
    let mut r = metrics(subset, c);
    r.brier = Some(brier(probs, truth)?);
    Ok(r)
}

/// Mean squared error between `p_fake` and the 0/1 truth.
pub fn brier(probs: &[f64], truth: &[bool]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::Empty("prediction set"));
    }
    if probs.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: probs.len(),
            found: truth.len(),
        });
    }
    let sse: f64 = probs
        .iter()
        .zip(truth)
        .map(|(&p, &t)| {
            let d = p - if t { 1.0 } else { 0.0 };
            d * d
        })
        .sum();
    Ok(sse / probs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    /// Position among the equal-width bins; empty bins are omitted, so
    /// indices may skip.
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
    pub mean_p: f64,
    pub emp_freq: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub n_bins: usize,
    pub bins: Vec<CalibrationBin>,
}

impl CalibrationCurve {
    pub fn max_gap(&self) -> f64 {
        self.bins
            .iter()
            .map(|b| (b.mean_p - b.emp_freq).abs())
            .fold(0.0, f64::max)
    }
}

/// Bin index for `p` under the `[lo, hi)` rule with the last bin closed.
pub fn bin_index(p: f64, n_bins: usize) -> usize {
    ((p * n_bins as f64).floor() as usize).min(n_bins - 1)
}

/// Equal-width reliability curve on [0, 1].
pub fn reliability(probs: &[f64], truth: &[bool], n_bins: usize) -> Result<CalibrationCurve> {
    if n_bins < 2 {
        return Err(Error::InvalidParam(format!("need at least 2 bins, got {n_bins}")));
    }
    if probs.is_empty() {
        return Err(Error::Empty("prediction set"));
    }
    if probs.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: probs.len(),
            found: truth.len(),
        });
    }
    let mut sum_p = vec![0.0; n_bins];
    let mut pos = vec![0usize; n_bins];
    let mut count = vec![0usize; n_bins];
    for (&p, &t) in probs.iter().zip(truth) {
        let b = bin_index(p.clamp(0.0, 1.0), n_bins);
        sum_p[b] += p;
        pos[b] += usize::from(t);
        count[b] += 1;
    }
    let width = 1.0 / n_bins as f64;
    let bins = (0..n_bins)
        .filter(|&b| count[b] > 0)
        .map(|b| CalibrationBin {
            index: b,
            lo: b as f64 * width,
            hi: (b + 1) as f64 * width,
            mean_p: sum_p[b] / count[b] as f64,
            emp_freq: pos[b] as f64 / count[b] as f64,
            count: count[b],
        })
        .collect();
    Ok(CalibrationCurve { n_bins, bins })
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Option<f64>> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(Error::InvalidParam(format!(
            "pearson needs at least 3 pairs, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}
