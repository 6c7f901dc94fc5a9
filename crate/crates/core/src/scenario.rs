//! Training scenarios, attack evaluation and the scenario grid.
//!
//! The corpus is partitioned once per seed: every label gets a fixed test
//! slice and a fixed training slice. A scenario draws its training profiles
//! from the training slices of its labels, so the legit test subset is the
//! same in every scenario.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::corpus::{stratified_split, Label, Profile, SplitCounts};
use crate::embedding::{
    embed_profile, ste_aggregate, SectionEmbeddingSet, SteVector, WordVectorTable, BUILTIN_ENCODER,
};
use crate::error::{Error, Result};
use crate::eval::report::{GridRow, NamedCalibration, NamedVariance, ReportBundle};
use crate::eval::{evaluate, reliability, MetricReport};
use crate::featurize::{FeaturePipeline, Layout, DEFAULT_PCA_COMPONENTS};
use crate::learn::{fit_classifier, ClassifierKind, TrainedModel};
use crate::seed;
use crate::tune::{
    config_from_params, tune_bo, tune_ga, ClassifierObjective, GaOperators, Params, SearchSpace, TuneBudget, TuneResult,
};

pub const CALIBRATION_BINS: usize = 10;
pub const CV_FOLDS: usize = 5;

/// Canonical per-label training counts of the largest scenario.
pub const CANONICAL_TRAIN: [(Label, usize); 4] = [
    (Label::Llp, 1260),
    (Label::Flp, 420),
    (Label::Gpt35p, 840),
    (Label::Gpt4p, 420),
];
/// Canonical per-label test counts.
pub const CANONICAL_TEST: [(Label, usize); 4] = [
    (Label::Llp, 540),
    (Label::Flp, 180),
    (Label::Gpt35p, 360),
    (Label::Gpt4p, 180),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    Baseline,
    Gpt35Retrain,
    Gpt4Retrain,
    Gpt35And4Retrain,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 4] = [
        ScenarioName::Baseline,
        ScenarioName::Gpt35Retrain,
        ScenarioName::Gpt4Retrain,
        ScenarioName::Gpt35And4Retrain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::Baseline => "baseline",
            ScenarioName::Gpt35Retrain => "gpt35_retrain",
            ScenarioName::Gpt4Retrain => "gpt4_retrain",
            ScenarioName::Gpt35And4Retrain => "gpt35_and4_retrain",
        }
    }

    /// Labels present in this scenario's training and test compositions.
    pub fn labels(self) -> &'static [Label] {
        match self {
            ScenarioName::Baseline => &[Label::Llp, Label::Flp],
            ScenarioName::Gpt35Retrain => &[Label::Llp, Label::Flp, Label::Gpt35p],
            ScenarioName::Gpt4Retrain => &[Label::Llp, Label::Flp, Label::Gpt4p],
            ScenarioName::Gpt35And4Retrain => &Label::ALL,
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ScenarioName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| format!("unknown scenario {s:?}"))
    }
}

fn scaled(canonical: &[(Label, usize)], scale: f64) -> BTreeMap<Label, usize> {
    canonical
        .iter()
        .map(|&(l, n)| (l, (n as f64 * scale).round() as usize))
        .collect()
}

/// Tuner run on the training set before the final fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum TuneDirective {
    Bo {
        #[serde(default)]
        budget: TuneBudget,
    },
    Ga {
        #[serde(default)]
        budget: TuneBudget,
        #[serde(default)]
        operators: GaOperators,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: ScenarioName,
    pub train: BTreeMap<Label, usize>,
    pub test: BTreeMap<Label, usize>,
    pub layout: Layout,
    pub encoder: String,
    pub classifier: ClassifierKind,
    /// Fixed hyperparameters applied over the family defaults.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Params>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tune: Option<TuneDirective>,
    #[serde(default = "default_components")]
    pub pca_components: usize,
    pub seed: u64,
}

fn default_components() -> usize {
    DEFAULT_PCA_COMPONENTS
}

impl ScenarioSpec {
    /// Canonical compositions times `scale`.
    pub fn canonical(name: ScenarioName, scale: f64, layout: Layout, classifier: ClassifierKind, seed: u64) -> Self {
        let keep = |m: BTreeMap<Label, usize>| -> BTreeMap<Label, usize> {
            m.into_iter().filter(|(l, _)| name.labels().contains(l)).collect()
        };
        Self {
            name,
            train: keep(scaled(&CANONICAL_TRAIN, scale)),
            test: keep(scaled(&CANONICAL_TEST, scale)),
            layout,
            encoder: BUILTIN_ENCODER.to_string(),
            classifier,
            params: None,
            tune: None,
            pca_components: DEFAULT_PCA_COMPONENTS,
            seed,
        }
    }

    pub fn train_total(&self) -> usize {
        self.train.values().sum()
    }

    pub fn test_total(&self) -> usize {
        self.test.values().sum()
    }
}

/// Profiles with their STE vectors under one encoder.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub encoder: String,
    profiles: Vec<Profile>,
    ste: HashMap<String, SteVector>,
    index: HashMap<String, usize>,
}

impl Dataset {
    /// Pair profiles with precomputed embedding sets. Every profile needs a
    /// set and all sets must share one encoder.
    pub fn new(profiles: Vec<Profile>, sets: &[SectionEmbeddingSet]) -> Result<Self> {
        let encoder = sets
            .first()
            .map(|s| s.encoder.clone())
            .ok_or(Error::Empty("embedding sets"))?;
        let mut ste = HashMap::new();
        for s in sets {
            if s.encoder != encoder {
                return Err(Error::EncoderMismatch {
                    model: encoder,
                    data: s.encoder.clone(),
                });
            }
            ste.insert(s.profile_id.clone(), ste_aggregate(s)?);
        }
        if let Some(p) = profiles.iter().find(|p| !ste.contains_key(&p.id)) {
            return Err(Error::MissingEmbedding(p.id.clone()));
        }
        let index = profiles.iter().enumerate().map(|(i, p)| (p.id.clone(), i)).collect();
        Ok(Self {
            encoder,
            profiles,
            ste,
            index,
        })
    }

    /// Embed with the built-in encoder.
    pub fn with_word_vectors(profiles: Vec<Profile>, table: &WordVectorTable) -> Result<Self> {
        let sets: Vec<SectionEmbeddingSet> = profiles.iter().map(|p| embed_profile(p, table)).collect();
        Self::new(profiles, &sets)
    }

    pub fn profiles(&self) -> &[Profile] {
        &self.profiles
    }

    fn get(&self, id: &str) -> Result<(&Profile, &SteVector)> {
        let i = *self
            .index
            .get(id)
            .ok_or_else(|| Error::InvalidParam(format!("unknown profile id {id:?}")))?;
        let p = &self.profiles[i];
        Ok((p, &self.ste[&p.id]))
    }
}

/// Fixed per-label train and test id slices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub train: BTreeMap<Label, Vec<String>>,
    pub test: BTreeMap<Label, Vec<String>>,
}

impl Partition {
    pub fn test_ids(&self) -> impl Iterator<Item = &String> {
        self.test.values().flatten()
    }
}

/// Split the dataset into canonical-times-`scale` train and test slices
/// for every label.
pub fn partition(data: &Dataset, scale: f64, seed: u64) -> Result<Partition> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidParam(format!("scale must be positive, got {scale}")));
    }
    let train = scaled(&CANONICAL_TRAIN, scale);
    let test = scaled(&CANONICAL_TEST, scale);
    let counts: SplitCounts = Label::ALL.iter().map(|l| (*l, (train[l], test[l]))).collect();
    let split = stratified_split(&data.profiles, &counts, seed::derive(seed, "partition"))?;
    let mut out = Partition {
        train: BTreeMap::new(),
        test: BTreeMap::new(),
    };
    for (ids, side) in [(&split.train, &mut out.train), (&split.test, &mut out.test)] {
        for id in ids {
            let (p, _) = data.get(id)?;
            side.entry(p.label).or_default().push(id.clone());
        }
    }
    Ok(out)
}

/// A spec bound to concrete id lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPlan {
    pub spec: ScenarioSpec,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

fn take(slices: &BTreeMap<Label, Vec<String>>, counts: &BTreeMap<Label, usize>) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (label, &n) in counts {
        let ids = slices.get(label).map(Vec::as_slice).unwrap_or(&[]);
        if ids.len() < n {
            return Err(Error::InsufficientClass {
                class: label.to_string(),
                requested: n,
                available: ids.len(),
            });
        }
        out.extend_from_slice(&ids[..n]);
    }
    Ok(out)
}

pub fn plan(spec: &ScenarioSpec, part: &Partition) -> Result<ScenarioPlan> {
    Ok(ScenarioPlan {
        spec: spec.clone(),
        train_ids: take(&part.train, &spec.train)?,
        test_ids: take(&part.test, &spec.test)?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioResult {
    pub spec: ScenarioSpec,
    /// Per-label test subsets, keyed by label.
    pub subsets: BTreeMap<Label, MetricReport>,
    pub pooled: MetricReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuning: Option<TuneResult>,
    #[serde(skip)]
    pub model: TrainedModel,
}

/// Fail if any id of `forbidden` appears in `train_ids`.
pub fn leakage_guard<'a>(train_ids: &[String], forbidden: impl IntoIterator<Item = &'a String>) -> Result<()> {
    let train: HashSet<&str> = train_ids.iter().map(String::as_str).collect();
    let leaked: Vec<&str> = forbidden
        .into_iter()
        .map(String::as_str)
        .filter(|id| train.contains(id))
        .collect();
    if leaked.is_empty() {
        Ok(())
    } else {
        Err(Error::Leakage(format!(
            "test ids in training input: {}",
            leaked.join(", ")
        )))
    }
}

fn labels_of(data: &Dataset, ids: &[String]) -> Result<Vec<bool>> {
    ids.iter().map(|id| Ok(data.get(id)?.0.is_fake())).collect()
}

/// Fit the feature pipeline on the training ids and return it with the
/// training matrix and labels.
pub fn training_matrix(
    spec: &ScenarioSpec,
    data: &Dataset,
    train_ids: &[String],
) -> Result<(FeaturePipeline, Vec<Vec<f64>>, Vec<bool>)> {
    if spec.encoder != data.encoder {
        return Err(Error::EncoderMismatch {
            model: spec.encoder.clone(),
            data: data.encoder.clone(),
        });
    }
    let rows: Vec<(&Profile, &SteVector)> = train_ids.iter().map(|id| data.get(id)).collect::<Result<_>>()?;
    let profiles: Vec<&Profile> = rows.iter().map(|r| r.0).collect();
    let stes: Vec<&SteVector> = rows.iter().map(|r| r.1).collect();
    let pipeline = FeaturePipeline::fit(&profiles, &stes, spec.layout, spec.pca_components)?;
    let x: Vec<Vec<f64>> = rows
        .iter()
        .map(|(p, s)| pipeline.transform(p, s).map(|f| f.values))
        .collect::<Result<_>>()?;
    let y = labels_of(data, train_ids)?;
    Ok((pipeline, x, y))
}

/// Fit normalizer, PCA, optional tuner and classifier on the training ids.
pub fn fit_model(
    spec: &ScenarioSpec,
    data: &Dataset,
    train_ids: &[String],
) -> Result<(TrainedModel, Option<TuneResult>)> {
    let (pipeline, x, y) = training_matrix(spec, data, train_ids)?;
    let mut params = spec.params.clone().unwrap_or_default();
    let tuning = match &spec.tune {
        None => None,
        Some(directive) => {
            let space = SearchSpace::for_classifier(spec.classifier);
            let objective = ClassifierObjective {
                kind: spec.classifier,
                x: &x,
                y: &y,
                folds: CV_FOLDS,
            };
            let tune_seed = seed::derive(spec.seed, "tune");
            let result = match directive {
                TuneDirective::Bo { budget } => tune_bo(&space, &objective, budget, tune_seed)?,
                TuneDirective::Ga { budget, operators } => {
                    tune_ga(&space, &objective, budget, operators, tune_seed, None)?
                }
            };
            params.extend(result.best.params.clone());
            Some(result)
        }
    };
    let config = config_from_params(spec.classifier, &params)?;
    let classifier = fit_classifier(&config, &x, &y)?;
    Ok((
        TrainedModel::new(&spec.encoder, spec.classifier, pipeline, classifier),
        tuning,
    ))
}

/// `p_fake` for each id plus its truth.
pub fn predict_ids(model: &TrainedModel, data: &Dataset, ids: &[String]) -> Result<(Vec<f64>, Vec<bool>)> {
    if model.encoder != data.encoder {
        return Err(Error::EncoderMismatch {
            model: model.encoder.clone(),
            data: data.encoder.clone(),
        });
    }
    let mut probs = Vec::with_capacity(ids.len());
    let mut truth = Vec::with_capacity(ids.len());
    for id in ids {
        let (p, s) = data.get(id)?;
        probs.push(model.predict(p, s)?.p_fake);
        truth.push(p.is_fake());
    }
    Ok((probs, truth))
}

/// Evaluate a trained model on a subset without refitting.
pub fn run_attack(model: &TrainedModel, data: &Dataset, ids: &[String], subset: &str) -> Result<MetricReport> {
    if model.encoder != data.encoder {
        return Err(Error::EncoderMismatch {
            model: model.encoder.clone(),
            data: data.encoder.clone(),
        });
    }
    if ids.is_empty() {
        return Err(Error::Empty("test subset"));
    }
    let (probs, truth) = predict_ids(model, data, ids)?;
    evaluate(subset, &probs, &truth)
}

/// Train on the plan's training ids and evaluate on each test label and
/// pooled.
pub fn run_scenario(plan: &ScenarioPlan, data: &Dataset) -> Result<ScenarioResult> {
    leakage_guard(&plan.train_ids, &plan.test_ids)?;
    let (model, tuning) = fit_model(&plan.spec, data, &plan.train_ids)?;
    let mut by_label: BTreeMap<Label, Vec<String>> = BTreeMap::new();
    for id in &plan.test_ids {
        by_label.entry(data.get(id)?.0.label).or_default().push(id.clone());
    }
    let subsets = by_label
        .iter()
        .map(|(l, ids)| Ok((*l, run_attack(&model, data, ids, l.as_str())?)))
        .collect::<Result<_>>()?;
    let pooled = run_attack(&model, data, &plan.test_ids, "pooled")?;
    Ok(ScenarioResult {
        spec: plan.spec.clone(),
        subsets,
        pooled,
        tuning,
        model,
    })
}

/// Grid configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub scenarios: Vec<ScenarioName>,
    pub layouts: Vec<Layout>,
    pub classifiers: Vec<ClassifierKind>,
    #[serde(default = "default_encoder")]
    pub encoder: String,
    pub seed: u64,
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tune: Option<TuneDirective>,
    #[serde(default = "default_components")]
    pub pca_components: usize,
}

fn default_encoder() -> String {
    BUILTIN_ENCODER.to_string()
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() || self.layouts.is_empty() || self.classifiers.is_empty() {
            return Err(Error::Config(
                "scenarios, layouts and classifiers must be non-empty".into(),
            ));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::Config(format!("scale must be positive, got {}", self.scale)));
        }
        Ok(())
    }

    pub fn spec(&self, name: ScenarioName, layout: Layout, classifier: ClassifierKind) -> ScenarioSpec {
        ScenarioSpec {
            encoder: self.encoder.clone(),
            tune: self.tune.clone(),
            pca_components: self.pca_components,
            ..ScenarioSpec::canonical(name, self.scale, layout, classifier, self.seed)
        }
    }
}

/// One (scenario, layout, classifier) cell evaluated on every test label.
#[derive(Debug, Clone, Serialize)]
pub struct GridCell {
    pub scenario: ScenarioName,
    pub layout: Layout,
    pub classifier: ClassifierKind,
    pub subsets: BTreeMap<Label, MetricReport>,
    /// All test labels together.
    pub pooled: Option<MetricReport>,
    /// Both LLM-like labels together.
    pub llm: Option<MetricReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    calibration: Option<crate::eval::CalibrationCurve>,
    #[serde(skip)]
    variance: Option<Vec<crate::featurize::VariancePoint>>,
}

impl GridCell {
    pub fn key(&self) -> String {
        format!("{}_{}_{}", self.scenario, self.layout.as_str(), self.classifier)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GridOutcome {
    pub cells: Vec<GridCell>,
    pub rows: Vec<GridRow>,
}

impl GridOutcome {
    pub fn cell(&self, scenario: ScenarioName, layout: Layout, classifier: ClassifierKind) -> Option<&GridCell> {
        self.cells
            .iter()
            .find(|c| c.scenario == scenario && c.layout == layout && c.classifier == classifier)
    }

    pub fn bundle(&self) -> ReportBundle {
        let mut variance: Vec<NamedVariance> = Vec::new();
        for c in &self.cells {
            if let Some(points) = &c.variance {
                let key = format!("{}_{}", c.scenario, c.layout.as_str());
                if !variance.iter().any(|v| v.key == key) {
                    variance.push(NamedVariance {
                        key,
                        points: points.clone(),
                    });
                }
            }
        }
        ReportBundle {
            grid: self.rows.clone(),
            calibration: self
                .cells
                .iter()
                .filter_map(|c| {
                    c.calibration.as_ref().map(|curve| NamedCalibration {
                        key: c.key(),
                        curve: curve.clone(),
                    })
                })
                .collect(),
            variance,
        }
    }
}

fn run_cell(
    config: &GridConfig,
    data: &Dataset,
    part: &Partition,
    key: (ScenarioName, Layout, ClassifierKind),
) -> GridCell {
    let (scenario, layout, classifier) = key;
    let mut cell = GridCell {
        scenario,
        layout,
        classifier,
        subsets: BTreeMap::new(),
        pooled: None,
        llm: None,
        error: None,
        calibration: None,
        variance: None,
    };
    let result = (|| -> Result<()> {
        let spec = config.spec(scenario, layout, classifier);
        let p = plan(&spec, part)?;
        leakage_guard(&p.train_ids, part.test_ids())?;
        let (model, _) = fit_model(&spec, data, &p.train_ids)?;
        let mut all_p = Vec::new();
        let mut all_t = Vec::new();
        let mut llm_p = Vec::new();
        let mut llm_t = Vec::new();
        for (label, ids) in &part.test {
            if ids.is_empty() {
                continue;
            }
            let (probs, truth) = predict_ids(&model, data, ids)?;
            cell.subsets.insert(*label, evaluate(label.as_str(), &probs, &truth)?);
            if label.is_llm() {
                llm_p.extend_from_slice(&probs);
                llm_t.extend_from_slice(&truth);
            }
            all_p.extend(probs);
            all_t.extend(truth);
        }
        cell.pooled = Some(evaluate("pooled", &all_p, &all_t)?);
        if !llm_p.is_empty() {
            cell.llm = Some(evaluate("llm", &llm_p, &llm_t)?);
        }
        cell.calibration = Some(reliability(&all_p, &all_t, CALIBRATION_BINS)?);
        cell.variance = model.pipeline.pca.as_ref().map(|pca| pca.variance_curve());
        Ok(())
    })();
    if let Err(e) = result {
        log::warn!("grid cell {} failed: {e}", cell.key());
        cell.error = Some(e.to_string());
    }
    cell
}

/// Run the Cartesian product of the config. Failed cells are kept with
/// their error; rows come out in config order whatever `jobs` is.
pub fn run_grid(config: &GridConfig, data: &Dataset, jobs: usize) -> Result<GridOutcome> {
    config.validate()?;
    let part = partition(data, config.scale, config.seed)?;
    let mut keys = Vec::new();
    for &s in &config.scenarios {
        for &l in &config.layouts {
            for &c in &config.classifiers {
                keys.push((s, l, c));
            }
        }
    }
    let slots: Mutex<Vec<Option<GridCell>>> = Mutex::new(vec![None; keys.len()]);
    let next = AtomicUsize::new(0);
    let workers = jobs.clamp(1, keys.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&key) = keys.get(i) else { break };
                let cell = run_cell(config, data, &part, key);
                slots.lock().expect("no worker panicked")[i] = Some(cell);
            });
        }
    });
    let cells: Vec<GridCell> = slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|c| c.expect("every cell ran"))
        .collect();
    let rows = cells.iter().flat_map(|c| grid_rows(c, &config.encoder)).collect();
    Ok(GridOutcome { cells, rows })
}

fn grid_rows(cell: &GridCell, encoder: &str) -> Vec<GridRow> {
    let row = |subset: &str, r: Option<&MetricReport>| GridRow {
        train_scenario: cell.scenario.to_string(),
        test_subset: subset.to_string(),
        encoder: encoder.to_string(),
        classifier: cell.classifier.to_string(),
        layout: cell.layout.as_str().to_string(),
        f1: r.and_then(|r| r.f1),
        far: r.and_then(|r| r.far),
        frr: r.and_then(|r| r.frr),
        brier: r.and_then(|r| r.brier),
        n: r.map_or(0, |r| r.n),
        error: cell.error.clone(),
    };
    Label::ALL
        .iter()
        .map(|l| row(l.as_str(), cell.subsets.get(l)))
        .collect()
}
