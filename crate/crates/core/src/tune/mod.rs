//! Hyperparameter search: a two-stage TPE-style Bayesian optimizer and a
//! genetic algorithm, both maximizing an [`Objective`].
//!
//! Every numeric parameter is searched in a unit coordinate `u ∈ [0, 1]`
//! (log-scaled where the domain asks for it); categorical parameters are
//! searched by index.

pub mod bo;
pub mod cv;
pub mod ga;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::{fit_classifier, ClassifierConfig, ClassifierKind};

pub use bo::tune_bo;
pub use cv::{cv_objective, stratified_folds};
pub use ga::{tune_ga, GaOperators};

/// Objective value recorded for a trial whose evaluation failed.
pub const WORST_OBJECTIVE: f64 = f64::MIN;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    Float { lo: f64, hi: f64, log: bool },
    Int { lo: i64, hi: i64 },
    Categorical { choices: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Str(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(v) => Some(*v as f64),
            ParamValue::Float(v) => Some(*v),
            ParamValue::Str(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Str(s) => Some(s),
            _ => None,
        }
    }
}

pub type Params = BTreeMap<String, ParamValue>;

/// Encoded coordinate of one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Gene {
    Unit(f64),
    Cat(usize),
}

impl Domain {
    fn validate(&self, name: &str) -> Result<()> {
        let bad = |why: &str| Err(Error::InvalidParam(format!("domain {name}: {why}")));
        match self {
            Domain::Float { lo, hi, log } => {
                if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                    return bad("bounds must be finite with lo <= hi");
                }
                if *log && *lo <= 0.0 {
                    return bad("log domain needs lo > 0");
                }
            }
            Domain::Int { lo, hi } if lo > hi => return bad("lo > hi"),
            Domain::Categorical { choices } if choices.is_empty() => return bad("no choices"),
            _ => {}
        }
        Ok(())
    }

    pub(crate) fn decode(&self, gene: Gene) -> ParamValue {
        match (self, gene) {
            (Domain::Float { lo, hi, log }, Gene::Unit(u)) => {
                let u = u.clamp(0.0, 1.0);
                let v = if *log {
                    (lo.ln() + u * (hi.ln() - lo.ln())).exp()
                } else {
                    lo + u * (hi - lo)
                };
                ParamValue::Float(v.clamp(*lo, *hi))
            }
            (Domain::Int { lo, hi }, Gene::Unit(u)) => {
                let span = (hi - lo + 1) as f64;
                let v = lo + (u.clamp(0.0, 1.0) * span).floor() as i64;
                ParamValue::Int(v.min(*hi))
            }
            (Domain::Categorical { choices }, Gene::Cat(i)) => {
                ParamValue::Str(choices[i.min(choices.len() - 1)].clone())
            }
            (d, g) => unreachable!("gene {g:?} does not fit domain {d:?}"),
        }
    }

    pub(crate) fn sample<R: rand::Rng>(&self, rng: &mut R) -> Gene {
        match self {
            Domain::Categorical { choices } => Gene::Cat(rng.gen_range(0..choices.len())),
            _ => Gene::Unit(rng.gen::<f64>()),
        }
    }

    pub(crate) fn cardinality(&self) -> Option<usize> {
        match self {
            Domain::Categorical { choices } => Some(choices.len()),
            _ => None,
        }
    }
}

/// Named parameter domains, searched in name order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: BTreeMap<String, Domain>,
}

impl SearchSpace {
    pub fn new(params: impl IntoIterator<Item = (String, Domain)>) -> Result<Self> {
        let params: BTreeMap<String, Domain> = params.into_iter().collect();
        if params.is_empty() {
            return Err(Error::Empty("search space"));
        }
        for (name, d) in &params {
            d.validate(name)?;
        }
        Ok(Self { params })
    }

    /// Boosted-tree space.
    pub fn gbdt() -> Self {
        Self::new([
            ("n_trees".into(), Domain::Int { lo: 50, hi: 400 }),
            (
                "learning_rate".into(),
                Domain::Float {
                    lo: 0.01,
                    hi: 0.3,
                    log: true,
                },
            ),
            ("max_depth".into(), Domain::Int { lo: 2, hi: 8 }),
            (
                "lambda_l2".into(),
                Domain::Float {
                    lo: 0.1,
                    hi: 10.0,
                    log: true,
                },
            ),
            ("min_samples_leaf".into(), Domain::Int { lo: 1, hi: 20 }),
        ])
        .expect("static space is valid")
    }

    pub fn logreg() -> Self {
        Self::new([
            (
                "l2".into(),
                Domain::Float {
                    lo: 1e-5,
                    hi: 1.0,
                    log: true,
                },
            ),
            (
                "learning_rate".into(),
                Domain::Float {
                    lo: 0.01,
                    hi: 1.0,
                    log: true,
                },
            ),
            ("epochs".into(), Domain::Int { lo: 50, hi: 500 }),
        ])
        .expect("static space is valid")
    }

    pub fn knn() -> Self {
        Self::new([("k".into(), Domain::Int { lo: 1, hi: 25 })]).expect("static space is valid")
    }

    pub fn for_classifier(kind: ClassifierKind) -> Self {
        match kind {
            ClassifierKind::Gbdt | ClassifierKind::GbdtReg => Self::gbdt(),
            ClassifierKind::Logreg => Self::logreg(),
            ClassifierKind::Knn => Self::knn(),
        }
    }

    pub(crate) fn domains(&self) -> impl Iterator<Item = &Domain> {
        self.params.values()
    }

    pub(crate) fn decode(&self, genes: &[Gene]) -> Params {
        self.params
            .iter()
            .zip(genes)
            .map(|((name, d), g)| (name.clone(), d.decode(*g)))
            .collect()
    }

    pub(crate) fn sample<R: rand::Rng>(&self, rng: &mut R) -> Vec<Gene> {
        self.domains().map(|d| d.sample(rng)).collect()
    }

    /// Inverse of `decode` for values inside the domain.
    pub(crate) fn encode(&self, params: &Params) -> Result<Vec<Gene>> {
        self.params
            .iter()
            .map(|(name, d)| {
                let v = params
                    .get(name)
                    .ok_or_else(|| Error::InvalidParam(format!("missing parameter {name}")))?;
                Ok(match d {
                    Domain::Float { lo, hi, log } => {
                        let x = v
                            .as_f64()
                            .ok_or_else(|| Error::InvalidParam(format!("{name} is not numeric")))?;
                        let u = if hi == lo {
                            0.0
                        } else if *log {
                            (x.ln() - lo.ln()) / (hi.ln() - lo.ln())
                        } else {
                            (x - lo) / (hi - lo)
                        };
                        Gene::Unit(u.clamp(0.0, 1.0))
                    }
                    Domain::Int { lo, hi } => {
                        let x = v
                            .as_f64()
                            .ok_or_else(|| Error::InvalidParam(format!("{name} is not numeric")))?;
                        Gene::Unit(((x - *lo as f64 + 0.5) / (hi - lo + 1) as f64).clamp(0.0, 1.0))
                    }
                    Domain::Categorical { choices } => {
                        let s = v
                            .as_str()
                            .ok_or_else(|| Error::InvalidParam(format!("{name} is not a string")))?;
                        Gene::Cat(
                            choices
                                .iter()
                                .position(|c| c == s)
                                .ok_or_else(|| Error::InvalidParam(format!("{name}: unknown choice {s}")))?,
                        )
                    }
                })
            })
            .collect()
    }
}

/// The full-scale budgets of both tuners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneBudget {
    pub bo_stage1_trials: usize,
    pub bo_stage2_trials: usize,
    pub ga_population: usize,
    pub ga_generations: usize,
    pub ga_finetune_generations: usize,
}

impl Default for TuneBudget {
    fn default() -> Self {
        Self {
            bo_stage1_trials: 30,
            bo_stage2_trials: 20,
            ga_population: 50,
            ga_generations: 3,
            ga_finetune_generations: 2,
        }
    }
}

impl TuneBudget {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.bo_stage1_trials,
            self.bo_stage2_trials,
            self.ga_population,
            self.ga_generations,
            self.ga_finetune_generations,
        ];
        if all.contains(&0) {
            return Err(Error::InvalidParam(format!(
                "budget entries must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Score on a fixed validation split.
    Validation,
    /// Mean score over stratified folds.
    CrossValidation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub fold_scores: Vec<f64>,
}

/// Maximized by the tuners. Must be deterministic in `(params, mode, seed)`.
pub trait Objective {
    fn evaluate(&self, params: &Params, mode: EvalMode, seed: u64) -> Result<Evaluation>;
}

/// Wraps a plain function that ignores the evaluation mode.
pub struct FnObjective<F>(pub F);

impl<F: Fn(&Params) -> Result<f64>> Objective for FnObjective<F> {
    fn evaluate(&self, params: &Params, _mode: EvalMode, _seed: u64) -> Result<Evaluation> {
        Ok(Evaluation {
            value: (self.0)(params)?,
            fold_scores: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub stage: String,
    pub params: Params,
    pub objective: f64,
    pub fold_scores: Vec<f64>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: Trial,
    pub trials: Vec<Trial>,
}

pub(crate) fn run_trial<O: Objective + ?Sized>(
    objective: &O,
    params: Params,
    mode: EvalMode,
    index: usize,
    stage: &str,
    seed: u64,
) -> Trial {
    let (objective, fold_scores, error) = match objective.evaluate(&params, mode, seed) {
        Ok(e) if e.value.is_finite() => (e.value, e.fold_scores, None),
        Ok(e) => (
            WORST_OBJECTIVE,
            Vec::new(),
            Some(format!("non-finite objective {}", e.value)),
        ),
        Err(err) => (WORST_OBJECTIVE, Vec::new(), Some(err.to_string())),
    };
    if let Some(e) = &error {
        log::warn!("trial {index} ({stage}) failed: {e}");
    }
    Trial {
        index,
        stage: stage.to_string(),
        params,
        objective,
        fold_scores,
        seed,
        error,
    }
}

/// Highest objective; ties go to the earliest trial.
pub(crate) fn best_of<'a>(trials: impl IntoIterator<Item = &'a Trial>) -> Option<&'a Trial> {
    trials.into_iter().fold(None, |best: Option<&Trial>, t| match best {
        Some(b) if b.objective >= t.objective => Some(b),
        _ => Some(t),
    })
}

/// Apply tuned values on top of a family's defaults.
pub fn config_from_params(kind: ClassifierKind, params: &Params) -> Result<ClassifierConfig> {
    let num = |name: &str| params.get(name).and_then(ParamValue::as_f64);
    let count = |name: &str| num(name).map(|v| v.round().max(0.0) as usize);
    let mut config = kind.default_config();
    match &mut config {
        ClassifierConfig::Gbdt(p) => {
            p.n_trees = count("n_trees").unwrap_or(p.n_trees);
            p.learning_rate = num("learning_rate").unwrap_or(p.learning_rate);
            p.max_depth = count("max_depth").unwrap_or(p.max_depth);
            p.lambda_l2 = num("lambda_l2").unwrap_or(p.lambda_l2);
            p.min_samples_leaf = count("min_samples_leaf").unwrap_or(p.min_samples_leaf);
        }
        ClassifierConfig::Logreg(p) => {
            p.l2 = num("l2").unwrap_or(p.l2);
            p.learning_rate = num("learning_rate").unwrap_or(p.learning_rate);
            p.epochs = count("epochs").unwrap_or(p.epochs);
        }
        ClassifierConfig::Knn(p) => p.k = count("k").unwrap_or(p.k),
    }
    Ok(config)
}

/// Tuning objective over a training set: validation mode fits on a fixed
/// stratified 80/20 split of it, cross-validation mode uses stratified
/// folds over all of it. Score is F1 with fake as the positive class.
pub struct ClassifierObjective<'a> {
    pub kind: ClassifierKind,
    pub x: &'a [Vec<f64>],
    pub y: &'a [bool],
    pub folds: usize,
}

impl Objective for ClassifierObjective<'_> {
    fn evaluate(&self, params: &Params, mode: EvalMode, seed: u64) -> Result<Evaluation> {
        let config = config_from_params(self.kind, params)?;
        match mode {
            EvalMode::CrossValidation => {
                let s = cv_objective(self.x, self.y, &config, self.folds, seed)?;
                Ok(Evaluation {
                    value: s.mean,
                    fold_scores: s.folds,
                })
            }
            EvalMode::Validation => {
                let fold_of = stratified_folds(self.y, 5, crate::seed::derive(seed, "validation-split"))?;
                let (mut tx, mut ty, mut vx, mut vy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
                for (i, f) in fold_of.iter().enumerate() {
                    if *f == 0 {
                        vx.push(self.x[i].as_slice());
                        vy.push(self.y[i]);
                    } else {
                        tx.push(self.x[i].as_slice());
                        ty.push(self.y[i]);
                    }
                }
                let model = fit_classifier(&config, &tx, &ty)?;
                let probs: Vec<f64> = vx.iter().map(|r| model.predict_proba(r)).collect();
                let c = crate::eval::confusion_from_probs(&probs, &vy, 0.5)?;
                Ok(Evaluation {
                    value: crate::eval::metrics("validation", c).f1.unwrap_or(0.0),
                    fold_scores: Vec::new(),
                })
            }
        }
    }
}

/// Tuning log CSV: trial_index, params-as-JSON, objective, stage.
pub fn write_tuning_log(path: impl AsRef<Path>, trials: &[Trial]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["trial_index", "params", "objective", "stage"])?;
    for t in trials {
        w.write_record([
            t.index.to_string(),
            serde_json::to_string(&t.params)?,
            crate::eval::report::fmt_value(Some(t.objective).filter(|v| *v > WORST_OBJECTIVE)),
            t.stage.clone(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_round_trip() {
        let space = SearchSpace::gbdt();
        let mut rng = crate::seed::rng(3);
        for _ in 0..50 {
            let genes = space.sample(&mut rng);
            let params = space.decode(&genes);
            let again = space.decode(&space.encode(&params).unwrap());
            for (name, v) in &params {
                let (a, b) = (v.as_f64().unwrap(), again[name].as_f64().unwrap());
                assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{name}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn int_domain_covers_both_ends() {
        let d = Domain::Int { lo: 2, hi: 8 };
        assert_eq!(d.decode(Gene::Unit(0.0)), ParamValue::Int(2));
        assert_eq!(d.decode(Gene::Unit(1.0)), ParamValue::Int(8));
    }

    #[test]
    fn invalid_domains_rejected() {
        assert!(SearchSpace::new([(
            "a".to_string(),
            Domain::Float {
                lo: 0.0,
                hi: 1.0,
                log: true
            }
        )])
        .is_err());
        assert!(SearchSpace::new([("a".to_string(), Domain::Int { lo: 3, hi: 1 })]).is_err());
        assert!(SearchSpace::new([("a".to_string(), Domain::Categorical { choices: vec![] })]).is_err());
        assert!(SearchSpace::new(Vec::<(String, Domain)>::new()).is_err());
    }

    #[test]
    fn config_overrides_defaults() {
        let params: Params = [
            ("n_trees".to_string(), ParamValue::Int(77)),
            ("learning_rate".to_string(), ParamValue::Float(0.2)),
        ]
        .into();
        match config_from_params(ClassifierKind::Gbdt, &params).unwrap() {
            ClassifierConfig::Gbdt(p) => {
                assert_eq!((p.n_trees, p.learning_rate, p.max_depth), (77, 0.2, 4));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tuning_log_columns() {
        let t = Trial {
            index: 0,
            stage: "bo_stage1".into(),
            params: [("k".to_string(), ParamValue::Int(3))].into(),
            objective: 0.5,
            fold_scores: vec![],
            seed: 1,
            error: None,
        };
        let f = tempfile::NamedTempFile::new().unwrap();
        write_tuning_log(f.path(), &[t]).unwrap();
        let text = fs::read_to_string(f.path()).unwrap();
        assert_eq!(
            text,
            "trial_index,params,objective,stage\n0,\"{\"\"k\"\":3}\",0.500000,bo_stage1\n"
        );
    }
}
