//! Binary classifiers (fake = positive) and the versioned model file.

pub mod gbdt;
pub mod knn;
pub mod logreg;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Profile;
use crate::embedding::SteVector;
use crate::error::{Error, Result};
use crate::featurize::FeaturePipeline;

pub use gbdt::{train_gbdt, GbdtModel, GbdtParams};
pub use knn::{train_knn, KnnModel, KnnParams};
pub use logreg::{train_logreg, LogRegModel, LogRegParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Classifier families available to scenarios and the CLI. The two boosted
/// configurations differ only in defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Gbdt,
    GbdtReg,
    Logreg,
    Knn,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] = [
        ClassifierKind::Gbdt,
        ClassifierKind::GbdtReg,
        ClassifierKind::Logreg,
        ClassifierKind::Knn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Gbdt => "gbdt",
            ClassifierKind::GbdtReg => "gbdt_reg",
            ClassifierKind::Logreg => "logreg",
            ClassifierKind::Knn => "knn",
        }
    }

    pub fn default_config(self) -> ClassifierConfig {
        match self {
            ClassifierKind::Gbdt => ClassifierConfig::Gbdt(GbdtParams::default()),
            ClassifierKind::GbdtReg => ClassifierConfig::Gbdt(GbdtParams::regularized()),
            ClassifierKind::Logreg => ClassifierConfig::Logreg(LogRegParams::default()),
            ClassifierKind::Knn => ClassifierConfig::Knn(KnnParams::default()),
        }
    }

    pub fn is_boosted(self) -> bool {
        matches!(self, ClassifierKind::Gbdt | ClassifierKind::GbdtReg)
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gbdt" => Ok(ClassifierKind::Gbdt),
            "gbdt_reg" | "gbdt-reg" => Ok(ClassifierKind::GbdtReg),
            "logreg" => Ok(ClassifierKind::Logreg),
            "knn" => Ok(ClassifierKind::Knn),
            other => Err(Error::Config(format!(
                "unknown classifier {other:?} (gbdt|gbdt_reg|logreg|knn)"
            ))),
        }
    }
}

/// Hyperparameters for one classifier family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ClassifierConfig {
    Gbdt(GbdtParams),
    Logreg(LogRegParams),
    Knn(KnnParams),
}

/// A trained classifier of any family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Classifier {
    Gbdt(GbdtModel),
    Logreg(LogRegModel),
    Knn(KnnModel),
}

impl Classifier {
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        match self {
            Classifier::Gbdt(m) => m.predict_proba(x),
            Classifier::Logreg(m) => m.predict_proba(x),
            Classifier::Knn(m) => m.predict_proba(x),
        }
    }
}

/// Train the family named by `config`.
pub fn fit_classifier<R: AsRef<[f64]>>(config: &ClassifierConfig, x: &[R], y: &[bool]) -> Result<Classifier> {
    Ok(match config {
        ClassifierConfig::Gbdt(p) => Classifier::Gbdt(train_gbdt(x, y, p)?),
        ClassifierConfig::Logreg(p) => Classifier::Logreg(train_logreg(x, y, p)?),
        ClassifierConfig::Knn(p) => {
            if y.iter().all(|&t| t) || !y.iter().any(|&t| t) {
                return Err(Error::SingleClass);
            }
            Classifier::Knn(train_knn(x, y, p)?)
        }
    })
}

/// Scored profile. `is_fake` applies the 0.5 threshold (inclusive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub profile_id: String,
    pub p_fake: f64,
    pub is_fake: bool,
}

impl Prediction {
    pub fn new(profile_id: impl Into<String>, p_fake: f64) -> Self {
        let p_fake = p_fake.clamp(0.0, 1.0);
        Self {
            profile_id: profile_id.into(),
            p_fake,
            is_fake: p_fake >= 0.5,
        }
    }
}

/// Classifier plus the preprocessing fitted alongside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub version: u32,
    pub encoder: String,
    pub classifier_kind: ClassifierKind,
    #[serde(flatten)]
    pub pipeline: FeaturePipeline,
    #[serde(flatten)]
    pub classifier: Classifier,
}

impl TrainedModel {
    pub fn new(encoder: &str, kind: ClassifierKind, pipeline: FeaturePipeline, classifier: Classifier) -> Self {
        Self {
            version: MODEL_FORMAT_VERSION,
            encoder: encoder.to_string(),
            classifier_kind: kind,
            pipeline,
            classifier,
        }
    }

    pub fn predict(&self, profile: &Profile, ste: &SteVector) -> Result<Prediction> {
        let fv = self.pipeline.transform(profile, ste)?;
        Ok(Prediction::new(&profile.id, self.classifier.predict_proba(&fv.values)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parse a model document, checking the version before the body.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Corrupt(e.to_string()))?;
        let version = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Corrupt("missing version field".into()))?;
        if version != u64::from(MODEL_FORMAT_VERSION) {
            return Err(Error::Version {
                found: u32::try_from(version).unwrap_or(u32::MAX),
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let model: TrainedModel = serde_json::from_value(value).map_err(|e| Error::Corrupt(e.to_string()))?;
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        let boosted = matches!(self.classifier, Classifier::Gbdt(_));
        if boosted != self.classifier_kind.is_boosted() {
            return Err(Error::Corrupt(format!(
                "classifier body does not match kind {}",
                self.classifier_kind
            )));
        }
        if let Classifier::Gbdt(m) = &self.classifier {
            for t in &m.trees {
                let n = t.nodes.len();
                let bad = t.nodes.iter().any(|node| match *node {
                    gbdt::Node::Split { left, right, .. } => left >= n || right >= n,
                    gbdt::Node::Leaf { value } => !value.is_finite(),
                });
                if n == 0 || bad {
                    return Err(Error::Corrupt("malformed tree".into()));
                }
            }
        }
        Ok(())
    }
}

pub fn save_model(path: impl AsRef<Path>, model: &TrainedModel) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TrainedModel::from_json(&text)
}
