//! Structural features, z-score normalization, PCA, and feature fusion.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::corpus::{Profile, Tag};
use crate::embedding::SteVector;
use crate::error::{Error, Result};

pub const NUM_NUMERIC: usize = 17;
pub const DEFAULT_PCA_COMPONENTS: usize = 150;
pub const STD_FLOOR: f64 = 1e-12;

/// Canonical order of the structural features.
pub const NUMERIC_FEATURE_NAMES: [&str; NUM_NUMERIC] = [
    "job_count",
    "education_count",
    "skills_count",
    "recommendations_count",
    "followers",
    "connections",
    "summary_word_count",
    "summary_char_count",
    "name_token_count",
    "location_token_count",
    "total_experience_word_count",
    "total_education_word_count",
    "mean_words_per_job",
    "mean_words_per_education",
    "follower_connection_ratio",
    "sections_present_count",
    "has_summary_flag",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericFeatures {
    pub values: [f64; NUM_NUMERIC],
}

fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

fn safe_div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

pub fn extract_numeric(p: &Profile) -> NumericFeatures {
    let jobs = p.entries(Tag::Experience);
    let edu = p.entries(Tag::Education);
    let exp_words: usize = jobs.iter().map(|e| word_count(e)).sum();
    let edu_words: usize = edu.iter().map(|e| word_count(e)).sum();
    let followers = p.numeric("followers") as f64;
    let connections = p.numeric("connections") as f64;
    NumericFeatures {
        values: [
            jobs.len() as f64,
            edu.len() as f64,
            p.entries(Tag::Skills).len() as f64,
            p.entries(Tag::Recommendations).len() as f64,
            followers,
            connections,
            word_count(&p.summary) as f64,
            p.summary.chars().count() as f64,
            word_count(&p.name) as f64,
            word_count(&p.location) as f64,
            exp_words as f64,
            edu_words as f64,
            safe_div(exp_words as f64, jobs.len() as f64),
            safe_div(edu_words as f64, edu.len() as f64),
            safe_div(followers, connections),
            p.sections.len() as f64,
            if p.summary.is_empty() { 0.0 } else { 1.0 },
        ],
    }
}

/// Per-dimension z-score fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    /// Population standard deviation, floored at [`STD_FLOOR`].
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("normalizer training set"))?;
        let d = first.as_ref().len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: r.len(),
                });
            }
            mean.iter_mut().zip(r).for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mean, std })
    }

    /// Constant training columns (std at the floor) map to 0 for every input.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: x.len(),
            });
        }
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| if *s <= STD_FLOOR { 0.0 } else { (v - m) / s })
            .collect())
    }
}

/// Principal components of mean-centered training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// k rows of length d, orthonormal.
    pub components: Vec<Vec<f64>>,
    /// Variance along each component (sample variance, n − 1 denominator).
    pub explained_variance: Vec<f64>,
    /// Share of total variance per component.
    pub explained_variance_ratio: Vec<f64>,
}

/// One row of the variance-curve report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariancePoint {
    pub component_index: usize,
    pub ratio: f64,
    pub cumulative: f64,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: x.len(),
            });
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(&centered).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Map reduced coordinates back into input space.
    pub fn inverse_transform(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (c, w) in self.components.iter().zip(z) {
            x.iter_mut().zip(c).for_each(|(xi, ci)| *xi += w * ci);
        }
        x
    }

    pub fn variance_curve(&self) -> Vec<VariancePoint> {
        let mut cumulative = 0.0;
        self.explained_variance_ratio
            .iter()
            .enumerate()
            .map(|(i, &ratio)| {
                cumulative += ratio;
                VariancePoint {
                    component_index: i + 1,
                    ratio,
                    cumulative,
                }
            })
            .collect()
    }
}

/// Fit PCA by SVD of the centered data matrix, keeping `min(k, d, n − 1)`
/// components. Each component's largest-magnitude entry is made positive.
pub fn fit_pca<R: AsRef<[f64]>>(rows: &[R], k: usize) -> Result<PcaModel> {
    if rows.len() < 2 {
        return Err(Error::InvalidParam(format!(
            "PCA needs at least 2 training rows, got {}",
            rows.len()
        )));
    }
    let n = rows.len();
    let d = rows[0].as_ref().len();
    if d == 0 {
        return Err(Error::Empty("PCA input dimension"));
    }
    let mut mean = vec![0.0; d];
    for r in rows {
        let r = r.as_ref();
        if r.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: r.len(),
            });
        }
        mean.iter_mut().zip(r).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| rows[i].as_ref()[j] - mean[j]);
    let total_ss: f64 = centered.iter().map(|x| x * x).sum();

    let svd = centered.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::InvalidParam("SVD did not produce right singular vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });

    let k = k.min(d).min(n - 1).min(order.len());
    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    let mut explained_variance_ratio = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let mut c: Vec<f64> = v_t.row(idx).iter().copied().collect();
        // Magnitudes within 1e-12 of the maximum count as tied; first wins.
        let max_abs = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let pivot = c.iter().position(|v| v.abs() >= max_abs - 1e-12).unwrap_or(0);
        if c[pivot] < 0.0 {
            c.iter_mut().for_each(|x| *x = -*x);
        }
        let s2 = svd.singular_values[idx].powi(2);
        components.push(c);
        explained_variance.push(s2 / (n - 1) as f64);
        explained_variance_ratio.push(if total_ss > 0.0 { s2 / total_ss } else { 0.0 });
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        explained_variance_ratio,
    })
}

/// Which feature block feeds the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// PCA-reduced STE followed by the normalized structural features.
    Fused,
    /// PCA-reduced STE only.
    Text,
    /// Normalized structural features only.
    Numeric,
}

impl Layout {
    pub const ALL: [Layout; 3] = [Layout::Fused, Layout::Text, Layout::Numeric];

    pub fn as_str(self) -> &'static str {
        match self {
            Layout::Fused => "fused",
            Layout::Text => "text",
            Layout::Numeric => "numeric",
        }
    }

    /// Feature count for a given reduced text dimension (150 by default,
    /// giving 167 / 150 / 17).
    pub fn dim(self, text_dim: usize) -> usize {
        match self {
            Layout::Fused => text_dim + NUM_NUMERIC,
            Layout::Text => text_dim,
            Layout::Numeric => NUM_NUMERIC,
        }
    }

    pub fn uses_text(self) -> bool {
        self != Layout::Numeric
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fused" => Ok(Layout::Fused),
            "text" => Ok(Layout::Text),
            "numeric" => Ok(Layout::Numeric),
            other => Err(Error::Config(format!("unknown layout {other:?} (fused|text|numeric)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub profile_id: String,
    pub values: Vec<f64>,
    pub layout: Layout,
}

/// Concatenate text then numeric parts, or pass one through.
pub fn fuse(profile_id: &str, text: &[f64], numeric: &[f64], layout: Layout, text_dim: usize) -> Result<FeatureVector> {
    if numeric.len() != NUM_NUMERIC && layout != Layout::Text {
        return Err(Error::DimensionMismatch {
            expected: NUM_NUMERIC,
            found: numeric.len(),
        });
    }
    if text.len() != text_dim && layout != Layout::Numeric {
        return Err(Error::DimensionMismatch {
            expected: text_dim,
            found: text.len(),
        });
    }
    let values = match layout {
        Layout::Fused => text.iter().chain(numeric).copied().collect(),
        Layout::Text => text.to_vec(),
        Layout::Numeric => numeric.to_vec(),
    };
    Ok(FeatureVector {
        profile_id: profile_id.to_string(),
        values,
        layout,
    })
}

/// Fitted preprocessing: numeric normalizer plus text PCA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub layout: Layout,
    pub normalizer: Normalizer,
    /// Absent for the numeric-only layout.
    pub pca: Option<PcaModel>,
}

impl FeaturePipeline {
    /// Fit on training profiles and their STE vectors (aligned slices).
    pub fn fit(profiles: &[&Profile], ste: &[&SteVector], layout: Layout, k: usize) -> Result<Self> {
        if profiles.len() != ste.len() {
            return Err(Error::DimensionMismatch {
                expected: profiles.len(),
                found: ste.len(),
            });
        }
        let numeric: Vec<[f64; NUM_NUMERIC]> = profiles.iter().map(|p| extract_numeric(p).values).collect();
        let normalizer = Normalizer::fit(&numeric)?;
        let pca = if layout.uses_text() {
            let rows: Vec<&[f64]> = ste.iter().map(|s| s.values.as_slice()).collect();
            Some(fit_pca(&rows, k)?)
        } else {
            None
        };
        Ok(Self {
            layout,
            normalizer,
            pca,
        })
    }

    pub fn text_dim(&self) -> usize {
        self.pca.as_ref().map_or(0, PcaModel::n_components)
    }

    pub fn dim(&self) -> usize {
        self.layout.dim(self.text_dim())
    }

    pub fn transform(&self, profile: &Profile, ste: &SteVector) -> Result<FeatureVector> {
        let numeric = self.normalizer.apply(&extract_numeric(profile).values)?;
        let text = match &self.pca {
            Some(pca) => pca.transform(&ste.values)?,
            None => Vec::new(),
        };
        fuse(&profile.id, &text, &numeric, self.layout, self.text_dim())
    }
}
