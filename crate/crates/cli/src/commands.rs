use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use sentinel_core::corpus::{
    load_corpus, stratified_split, write_raw_corpus, CorpusFormat, Label, Profile, SplitCounts,
};
use sentinel_core::embedding::{embed_profile, ingest_external_embeddings, load_word_vectors, write_embeddings};
use sentinel_core::eval::report::{emit_reports, grid_csv, GridRow, NamedCalibration, NamedVariance, ReportBundle};
use sentinel_core::eval::{reliability, MetricReport};
use sentinel_core::featurize::DEFAULT_PCA_COMPONENTS;
use sentinel_core::learn::save_model;
use sentinel_core::scenario::{
    predict_ids, run_grid, run_scenario, training_matrix, Dataset, GridConfig, ScenarioName, ScenarioPlan,
    ScenarioSpec, TuneDirective, CALIBRATION_BINS, CV_FOLDS,
};
use sentinel_core::seed;
use sentinel_core::synthgen::{generate as synth, validate_corpus, GenConfig};
use sentinel_core::tune::{tune_bo, tune_ga, write_tuning_log, ClassifierObjective, Params, SearchSpace, TuneBudget};

use crate::{AllArgs, EmbedArgs, GenerateArgs, ReportArgs, ScenarioArgs, TrainArgs, ValidateArgs};

pub const BUNDLE_FILE: &str = "bundle.json";
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const WORD_VECTORS_FILE: &str = "word_vectors.txt";
pub const EMBEDDINGS_FILE: &str = "embeddings.jsonl";

/// A check the user asked for did not pass.
#[derive(Debug)]
pub struct ValidationFailed(pub String);

impl std::fmt::Display for ValidationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ValidationFailed {}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize + ?Sized>(path: PathBuf, value: &T, outputs: &mut Vec<PathBuf>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    outputs.push(path);
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn jobs(requested: Option<usize>) -> usize {
    requested.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn load_profiles(corpus: &Path) -> Result<Vec<Profile>> {
    let loaded = load_corpus(corpus, CorpusFormat::JsonLines)?;
    if !loaded.rejections.is_empty() {
        log::warn!("{} records rejected from {}", loaded.rejections.len(), corpus.display());
    }
    if loaded.profiles.is_empty() {
        return Err(sentinel_core::Error::Empty("corpus").into());
    }
    Ok(loaded.profiles)
}

fn load_dataset(corpus: &Path, embeddings: Option<&Path>, word_vectors: Option<&Path>) -> Result<Dataset> {
    let profiles = load_profiles(corpus)?;
    match (embeddings, word_vectors) {
        (Some(path), _) => {
            let ingested = ingest_external_embeddings(path)?;
            Ok(Dataset::new(profiles, &ingested.sets)?)
        }
        (None, Some(path)) => Ok(Dataset::with_word_vectors(profiles, &load_word_vectors(path)?)?),
        (None, None) => bail!("either --embeddings or --word-vectors is required"),
    }
}

pub fn generate(args: &GenerateArgs) -> Result<Vec<PathBuf>> {
    let mut config: GenConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => GenConfig::default(),
    };
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(scale) = args.scale {
        if !(scale.is_finite() && scale > 0.0) {
            bail!(sentinel_core::Error::Config(format!(
                "scale must be positive, got {scale}"
            )));
        }
        config.counts = GenConfig::scaled_counts(scale);
    }
    generate_into(&config, &args.out.out)
}

fn generate_into(config: &GenConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let generated = synth(config)?;
    create_dir(out)?;
    let mut outputs = Vec::new();
    let corpus = out.join(CORPUS_FILE);
    write_raw_corpus(&corpus, &generated.records)?;
    outputs.push(corpus);
    let vectors = out.join(WORD_VECTORS_FILE);
    generated.word_vectors.save(&vectors)?;
    outputs.push(vectors);
    write_json(out.join("gen_config.json"), config, &mut outputs)?;
    write_json(out.join("gen_report.json"), &generated.report, &mut outputs)?;
    log::info!("generated {} profiles into {}", generated.records.len(), out.display());
    Ok(outputs)
}

pub fn validate(args: &ValidateArgs) -> Result<Vec<PathBuf>> {
    let diagnostics = validate_corpus(&args.corpus)?;
    create_dir(&args.out.out)?;
    let mut outputs = Vec::new();
    write_json(args.out.out.join("diagnostics.json"), &diagnostics, &mut outputs)?;
    println!("{}", serde_json::to_string_pretty(&diagnostics)?);
    if !diagnostics.is_clean() {
        return Err(ValidationFailed(format!(
            "{} problem(s) in {}",
            diagnostics.diagnostics.len(),
            args.corpus.display()
        ))
        .into());
    }
    Ok(outputs)
}

pub fn embed(args: &EmbedArgs) -> Result<Vec<PathBuf>> {
    embed_into(&args.corpus, &args.word_vectors, &args.out.out.join(EMBEDDINGS_FILE))
}

fn embed_into(corpus: &Path, word_vectors: &Path, target: &Path) -> Result<Vec<PathBuf>> {
    let profiles = load_profiles(corpus)?;
    let table = load_word_vectors(word_vectors)?;
    let sets: Vec<_> = profiles.iter().map(|p| embed_profile(p, &table)).collect();
    if let Some(dir) = target.parent() {
        create_dir(dir)?;
    }
    write_embeddings(target, &sets)?;
    Ok(vec![target.to_path_buf()])
}

/// `--config` document of `train` and `tune`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub params: Option<Params>,
    #[serde(default)]
    pub tune: Option<TuneDirective>,
    /// Share of each class held out for evaluation.
    #[serde(default = "default_holdout")]
    pub holdout: f64,
    #[serde(default = "default_components")]
    pub pca_components: usize,
}

fn default_holdout() -> f64 {
    0.3
}

fn default_components() -> usize {
    DEFAULT_PCA_COMPONENTS
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            params: None,
            tune: None,
            holdout: default_holdout(),
            pca_components: default_components(),
        }
    }
}

/// Training spec and holdout plan for a corpus.
fn holdout_plan(args: &TrainArgs, config: &TrainConfig, data: &Dataset) -> Result<ScenarioPlan> {
    if !(config.holdout > 0.0 && config.holdout < 1.0) {
        bail!(sentinel_core::Error::Config(format!(
            "holdout must lie in (0, 1), got {}",
            config.holdout
        )));
    }
    let mut totals: BTreeMap<Label, usize> = BTreeMap::new();
    for p in data.profiles() {
        *totals.entry(p.label).or_default() += 1;
    }
    let present: Vec<Label> = totals.keys().copied().collect();
    let name = ScenarioName::ALL
        .into_iter()
        .find(|n| n.labels() == present.as_slice())
        .ok_or_else(|| {
            sentinel_core::Error::Config(format!("no training scenario has exactly the labels {present:?}"))
        })?;
    let counts: SplitCounts = totals
        .iter()
        .map(|(&l, &n)| {
            let test = ((n as f64 * config.holdout).round() as usize).clamp(1, n.saturating_sub(1));
            (l, (n - test, test))
        })
        .collect();
    let split = stratified_split(data.profiles(), &counts, seed::derive(args.seed, "holdout"))?;
    let spec = ScenarioSpec {
        name,
        train: counts.iter().map(|(&l, &(tr, _))| (l, tr)).collect(),
        test: counts.iter().map(|(&l, &(_, te))| (l, te)).collect(),
        layout: args.layout.into(),
        encoder: data.encoder.clone(),
        classifier: args.classifier.into(),
        params: config.params.clone(),
        tune: config.tune.clone(),
        pca_components: config.pca_components,
        seed: args.seed,
    };
    Ok(ScenarioPlan {
        spec,
        train_ids: split.train,
        test_ids: split.test,
    })
}

fn prepare(args: &TrainArgs) -> Result<(TrainConfig, Dataset, ScenarioPlan)> {
    let config: TrainConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    let data = load_dataset(
        &args.data.corpus,
        args.data.embeddings.as_deref(),
        args.data.word_vectors.as_deref(),
    )?;
    let plan = holdout_plan(args, &config, &data)?;
    Ok((config, data, plan))
}

fn row(spec: &ScenarioSpec, r: &MetricReport) -> GridRow {
    GridRow {
        train_scenario: spec.name.to_string(),
        test_subset: r.subset.clone(),
        encoder: spec.encoder.clone(),
        classifier: spec.classifier.to_string(),
        layout: spec.layout.as_str().to_string(),
        f1: r.f1,
        far: r.far,
        frr: r.frr,
        brier: r.brier,
        n: r.n,
        error: None,
    }
}

pub fn train(args: &TrainArgs) -> Result<Vec<PathBuf>> {
    let (_, data, plan) = prepare(args)?;
    let result = run_scenario(&plan, &data)?;
    let out = &args.out.out;
    create_dir(out)?;
    let mut outputs = Vec::new();

    let model_path = out.join("model.json");
    save_model(&model_path, &result.model)?;
    outputs.push(model_path);

    let (probs, truth) = predict_ids(&result.model, &data, &plan.test_ids)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["profile_id", "is_fake", "p_fake"])?;
    for ((id, p), t) in plan.test_ids.iter().zip(&probs).zip(&truth) {
        w.write_record([id.as_str(), if *t { "1" } else { "0" }, &format!("{p:.6}")])?;
    }
    let predictions = out.join("predictions.csv");
    fs::write(&predictions, w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)?;
    outputs.push(predictions);

    write_json(
        out.join("split.json"),
        &serde_json::json!({"train": plan.train_ids, "test": plan.test_ids}),
        &mut outputs,
    )?;
    write_json(
        out.join("metrics.json"),
        &serde_json::json!({"subsets": result.subsets, "pooled": result.pooled}),
        &mut outputs,
    )?;
    if let Some(tuning) = &result.tuning {
        let log = out.join("tuning_log.csv");
        write_tuning_log(&log, &tuning.trials)?;
        outputs.push(log);
    }

    let spec = &plan.spec;
    let mut grid: Vec<GridRow> = result.subsets.values().map(|r| row(spec, r)).collect();
    grid.push(row(spec, &result.pooled));
    let key = format!("train_{}_{}", spec.layout.as_str(), spec.classifier);
    let bundle = ReportBundle {
        grid,
        calibration: vec![NamedCalibration {
            key: key.clone(),
            curve: reliability(&probs, &truth, CALIBRATION_BINS)?,
        }],
        variance: result
            .model
            .pipeline
            .pca
            .as_ref()
            .map(|pca| NamedVariance {
                key,
                points: pca.variance_curve(),
            })
            .into_iter()
            .collect(),
    };
    write_json(out.join(BUNDLE_FILE), &bundle, &mut outputs)?;
    log::info!("pooled holdout F1 {:?}", result.pooled.f1);
    Ok(outputs)
}

pub fn tune(args: &TrainArgs) -> Result<Vec<PathBuf>> {
    let (config, data, plan) = prepare(args)?;
    let directive = config.tune.unwrap_or(TuneDirective::Bo {
        budget: TuneBudget::default(),
    });
    let (_, x, y) = training_matrix(&plan.spec, &data, &plan.train_ids)?;
    let kind = plan.spec.classifier;
    let objective = ClassifierObjective {
        kind,
        x: &x,
        y: &y,
        folds: CV_FOLDS,
    };
    let space = SearchSpace::for_classifier(kind);
    let tune_seed = seed::derive(args.seed, "tune");
    let result = match &directive {
        TuneDirective::Bo { budget } => tune_bo(&space, &objective, budget, tune_seed)?,
        TuneDirective::Ga { budget, operators } => tune_ga(&space, &objective, budget, operators, tune_seed, None)?,
    };
    let out = &args.out.out;
    create_dir(out)?;
    let mut outputs = Vec::new();
    let log = out.join("tuning_log.csv");
    write_tuning_log(&log, &result.trials)?;
    outputs.push(log);
    write_json(out.join("best_params.json"), &result.best, &mut outputs)?;
    Ok(outputs)
}

fn synthetic_dataset(seed: u64, scale: f64) -> Result<Dataset> {
    let generated = synth(&GenConfig {
        counts: GenConfig::scaled_counts(scale),
        seed,
        ..GenConfig::default()
    })?;
    let profiles = generated
        .records
        .iter()
        .map(|r| sentinel_core::corpus::clean_profile(r).map_err(|e| anyhow::anyhow!("{}", e.detail)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::with_word_vectors(profiles, &generated.word_vectors)?)
}

fn run_grid_into(config: &GridConfig, data: &Dataset, jobs: usize, out: &Path) -> Result<Vec<PathBuf>> {
    let outcome = run_grid(config, data, jobs)?;
    create_dir(out)?;
    let mut outputs = Vec::new();
    let grid = out.join("grid.csv");
    fs::write(&grid, grid_csv(&outcome.rows)?).with_context(|| format!("writing {}", grid.display()))?;
    outputs.push(grid);
    write_json(out.join("grid_config.json"), config, &mut outputs)?;
    write_json(out.join("cells.json"), &outcome.cells, &mut outputs)?;
    write_json(out.join(BUNDLE_FILE), &outcome.bundle(), &mut outputs)?;
    let failed = outcome.cells.iter().filter(|c| c.error.is_some()).count();
    if failed > 0 {
        log::warn!("{failed} of {} grid cells failed", outcome.cells.len());
    }
    Ok(outputs)
}

pub fn scenario(args: &ScenarioArgs) -> Result<Vec<PathBuf>> {
    let mut config: GridConfig = read_json(&args.config)?;
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(s) = args.scale {
        config.scale = s;
    }
    config.validate()?;
    let data = match &args.corpus {
        Some(corpus) => load_dataset(corpus, args.embeddings.as_deref(), args.word_vectors.as_deref())?,
        None => synthetic_dataset(config.seed, config.scale)?,
    };
    run_grid_into(&config, &data, jobs(args.jobs), &args.out.out)
}

pub fn report(args: &ReportArgs) -> Result<Vec<PathBuf>> {
    let bundle: ReportBundle = read_json(&args.from.join(BUNDLE_FILE))?;
    Ok(emit_reports(&bundle, &args.out.out)?)
}

pub fn default_grid(seed: u64, scale: f64) -> GridConfig {
    GridConfig {
        scenarios: ScenarioName::ALL.to_vec(),
        layouts: vec![sentinel_core::featurize::Layout::Fused],
        classifiers: vec![sentinel_core::learn::ClassifierKind::Gbdt],
        encoder: sentinel_core::embedding::BUILTIN_ENCODER.to_string(),
        seed,
        scale,
        tune: None,
        pca_components: DEFAULT_PCA_COMPONENTS,
    }
}

pub fn all(args: &AllArgs) -> Result<Vec<PathBuf>> {
    let mut grid = match &args.config {
        Some(p) => read_json(p)?,
        None => default_grid(args.seed, args.scale),
    };
    grid.seed = args.seed;
    grid.scale = args.scale;
    grid.validate()?;

    let out = &args.out.out;
    let data_dir = out.join("data");
    let gen = GenConfig {
        counts: GenConfig::scaled_counts(args.scale),
        seed: args.seed,
        ..GenConfig::default()
    };
    let mut outputs = generate_into(&gen, &data_dir)?;
    let embeddings = data_dir.join(EMBEDDINGS_FILE);
    outputs.extend(embed_into(
        &data_dir.join(CORPUS_FILE),
        &data_dir.join(WORD_VECTORS_FILE),
        &embeddings,
    )?);
    let data = load_dataset(&data_dir.join(CORPUS_FILE), Some(&embeddings), None)?;
    let results = out.join("results");
    outputs.extend(run_grid_into(&grid, &data, jobs(args.jobs), &results)?);
    let bundle: ReportBundle = read_json(&results.join(BUNDLE_FILE))?;
    outputs.extend(emit_reports(&bundle, out.join("reports"))?);
    Ok(outputs)
}
