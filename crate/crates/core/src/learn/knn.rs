//! Brute-force k-nearest-neighbours with Euclidean distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    #[serde(rename = "classifier_params")]
    pub params: KnnParams,
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

pub fn train_knn<R: AsRef<[f64]>>(x: &[R], y: &[bool], params: &KnnParams) -> Result<KnnModel> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if params.k == 0 || params.k > x.len() {
        return Err(Error::InvalidParam(format!(
            "k = {} must be in 1..={}",
            params.k,
            x.len()
        )));
    }
    Ok(KnnModel {
        params: params.clone(),
        points: x.iter().map(|r| r.as_ref().to_vec()).collect(),
        labels: y.to_vec(),
    })
}

impl KnnModel {
    /// Indices of the k nearest stored points; equal distances go to the
    /// lower index.
    pub fn neighbours(&self, x: &[f64]) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        let k = self.params.k;
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, cmp);
            d.truncate(k);
        }
        d.sort_by(cmp);
        d.into_iter().map(|(_, i)| i).collect()
    }

    /// Fraction of fake labels among the k nearest.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let fakes = self.neighbours(x).into_iter().filter(|&i| self.labels[i]).count();
        fakes as f64 / self.params.k as f64
    }
}
