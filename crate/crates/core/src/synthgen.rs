//! Seeded generator of desk-scale corpora.
//!
//! Three generating processes stand in for the four labels:
//!
//! * legit-like (`LLP`): coherent templates with every section present and
//!   follower counts consistent with connection counts;
//! * manual-fake-like (`FLP`): a distinct spam vocabulary, sections dropped
//!   with probability `flp_missing_rate`, truncated summaries and inflated
//!   follower counts;
//! * LLM-like (`GPT35P`, `GPT4P`): a legit template with synonym
//!   substitution at rate `1 - similarity` and numeric attributes from their
//!   own distribution, placed between the manual-fake and legit ones.
//!
//! The generator also builds the word-vector table the built-in encoder
//! needs: every token of a vocabulary pool is its pool's centroid plus
//! noise, so text from one pool embeds close to other text from it.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{clean_profile, load_corpus, CorpusFormat, Label, Profile, RawProfile, RejectReason, Tag};
use crate::embedding::{embed_section, tokenize, WordVectorTable, BUILTIN_ENCODER};
use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_WORD_DIM: usize = 200;
/// Per-word noise relative to a unit-norm pool centroid.
const WORD_NOISE: f64 = 0.8;
/// A follower count above this multiple of connections is inconsistent.
pub const MAX_FOLLOWER_RATIO: f64 = 3.0;

const POOL_FILES: [(&str, &str); 12] = [
    ("first_names", include_str!("../assets/first_names.txt")),
    ("last_names", include_str!("../assets/last_names.txt")),
    ("locations", include_str!("../assets/locations.txt")),
    ("job_titles", include_str!("../assets/job_titles.txt")),
    ("companies", include_str!("../assets/companies.txt")),
    ("institutions", include_str!("../assets/institutions.txt")),
    ("degrees", include_str!("../assets/degrees.txt")),
    ("skills", include_str!("../assets/skills.txt")),
    ("summary_sentences", include_str!("../assets/summary_sentences.txt")),
    (
        "recommendation_sentences",
        include_str!("../assets/recommendation_sentences.txt"),
    ),
    ("fake_phrases", include_str!("../assets/fake_phrases.txt")),
    ("synonyms", include_str!("../assets/synonyms.txt")),
];

/// Vocabulary pools, one item per line in `<name>.txt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabularyPools {
    pub first_names: Vec<String>,
    pub last_names: Vec<String>,
    pub locations: Vec<String>,
    pub job_titles: Vec<String>,
    pub companies: Vec<String>,
    pub institutions: Vec<String>,
    pub degrees: Vec<String>,
    pub skills: Vec<String>,
    pub summary_sentences: Vec<String>,
    pub recommendation_sentences: Vec<String>,
    pub fake_phrases: Vec<String>,
    /// Legit word → LLM-style replacement, from `word=replacement` lines.
    pub synonyms: BTreeMap<String, String>,
}

fn parse_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

fn parse_synonyms(text: &str) -> Result<BTreeMap<String, String>> {
    parse_lines(text)
        .into_iter()
        .map(|l| match l.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() && !v.trim().is_empty() => {
                Ok((k.trim().to_lowercase(), v.trim().to_lowercase()))
            }
            _ => Err(Error::Config(format!("synonym line {l:?} is not word=replacement"))),
        })
        .collect()
}

impl VocabularyPools {
    fn from_texts(get: impl Fn(&str) -> Result<String>) -> Result<Self> {
        let list = |name: &str| get(name).map(|t| parse_lines(&t));
        let pools = Self {
            first_names: list("first_names")?,
            last_names: list("last_names")?,
            locations: list("locations")?,
            job_titles: list("job_titles")?,
            companies: list("companies")?,
            institutions: list("institutions")?,
            degrees: list("degrees")?,
            skills: list("skills")?,
            summary_sentences: list("summary_sentences")?,
            recommendation_sentences: list("recommendation_sentences")?,
            fake_phrases: list("fake_phrases")?,
            synonyms: parse_synonyms(&get("synonyms")?)?,
        };
        pools.validate()?;
        Ok(pools)
    }

    /// Pools shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_texts(|name| Ok(builtin_text(name).to_string())).expect("shipped pools are valid")
    }

    /// Read `<dir>/<name>.txt` for every pool; absent files fall back to the
    /// shipped pool.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        Self::from_texts(|name| {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
            } else {
                Ok(builtin_text(name).to_string())
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        let lists: [(&str, &Vec<String>); 11] = [
            ("first_names", &self.first_names),
            ("last_names", &self.last_names),
            ("locations", &self.locations),
            ("job_titles", &self.job_titles),
            ("companies", &self.companies),
            ("institutions", &self.institutions),
            ("degrees", &self.degrees),
            ("skills", &self.skills),
            ("summary_sentences", &self.summary_sentences),
            ("recommendation_sentences", &self.recommendation_sentences),
            ("fake_phrases", &self.fake_phrases),
        ];
        for (name, list) in lists {
            if list.is_empty() {
                return Err(Error::Config(format!("vocabulary pool {name} is empty")));
            }
        }
        if self.synonyms.is_empty() {
            return Err(Error::Config("vocabulary pool synonyms is empty".into()));
        }
        Ok(())
    }

    /// Token groups that share a centroid in the word-vector table.
    fn groups(&self) -> Vec<Vec<String>> {
        let words = |lists: &[&Vec<String>]| -> Vec<String> {
            lists.iter().flat_map(|l| l.iter()).flat_map(|s| tokenize(s)).collect()
        };
        vec![
            words(&[&self.first_names, &self.last_names]),
            words(&[&self.locations]),
            words(&[&self.job_titles, &self.companies]),
            words(&[&self.degrees, &self.institutions]),
            words(&[&self.skills]),
            words(&[&self.summary_sentences, &self.recommendation_sentences])
                .into_iter()
                .chain(self.synonyms.keys().flat_map(|k| tokenize(k)))
                .collect(),
            words(&[&self.fake_phrases]),
            self.synonyms.values().flat_map(|v| tokenize(v)).collect(),
            Tag::ALL.iter().map(|t| t.word().to_string()).collect(),
        ]
    }
}

fn builtin_text(name: &str) -> &'static str {
    POOL_FILES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .expect("known pool name")
}

/// Log-normal connection counts and follower/connection ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericParams {
    pub connections_mu: f64,
    pub connections_sigma: f64,
    pub follower_ratio_mu: f64,
    pub follower_ratio_sigma: f64,
}

impl NumericParams {
    fn validate(&self, label: Label) -> Result<()> {
        let all = [
            self.connections_mu,
            self.connections_sigma,
            self.follower_ratio_mu,
            self.follower_ratio_sigma,
        ];
        if all.iter().any(|v| !v.is_finite()) || self.connections_sigma < 0.0 || self.follower_ratio_sigma < 0.0 {
            return Err(Error::Config(format!("invalid numeric params for {label}: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub counts: BTreeMap<Label, usize>,
    pub numeric: BTreeMap<Label, NumericParams>,
    /// Text similarity of `GPT4P` profiles to their legit template.
    pub llm_similarity: f64,
    /// Same for `GPT35P`.
    pub gpt35_similarity: f64,
    pub flp_missing_rate: f64,
    pub word_dim: usize,
    pub seed: u64,
    /// Directory of replacement pool files; shipped pools when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pools_dir: Option<PathBuf>,
}

/// Profiles per class before scaling.
pub const CANONICAL_COUNTS: [(Label, usize); 4] = [
    (Label::Llp, 1800),
    (Label::Flp, 600),
    (Label::Gpt35p, 1200),
    (Label::Gpt4p, 600),
];

impl Default for GenConfig {
    fn default() -> Self {
        let np = |connections_mu: f64, connections_sigma: f64, follower_ratio_sigma: f64| NumericParams {
            connections_mu,
            connections_sigma,
            follower_ratio_mu: 0.8f64.ln(),
            follower_ratio_sigma,
        };
        Self {
            counts: Self::scaled_counts(1.0 / 6.0),
            numeric: [
                (Label::Llp, np(350f64.ln(), 0.4, 0.4)),
                (Label::Flp, np(40f64.ln(), 0.8, 0.8)),
                (Label::Gpt35p, np(70f64.ln(), 0.4, 0.4)),
                (Label::Gpt4p, np(85f64.ln(), 0.4, 0.4)),
            ]
            .into_iter()
            .collect(),
            llm_similarity: 0.9,
            gpt35_similarity: 0.8,
            flp_missing_rate: 0.4,
            word_dim: DEFAULT_WORD_DIM,
            seed: 20_240_101,
            pools_dir: None,
        }
    }
}

impl GenConfig {
    /// Canonical class totals times `scale`, rounded.
    pub fn scaled_counts(scale: f64) -> BTreeMap<Label, usize> {
        CANONICAL_COUNTS
            .iter()
            .map(|&(l, n)| (l, (n as f64 * scale).round() as usize))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("llm_similarity", self.llm_similarity),
            ("gpt35_similarity", self.gpt35_similarity),
            ("flp_missing_rate", self.flp_missing_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.word_dim == 0 {
            return Err(Error::Config("word_dim must be positive".into()));
        }
        for (&label, &n) in &self.counts {
            if n == 0 {
                continue;
            }
            self.numeric
                .get(&label)
                .ok_or_else(|| Error::Config(format!("no numeric params for {label}")))?
                .validate(label)?;
        }
        Ok(())
    }

    pub fn pools(&self) -> Result<VocabularyPools> {
        match &self.pools_dir {
            Some(dir) => VocabularyPools::load_dir(dir),
            None => Ok(VocabularyPools::builtin()),
        }
    }

    fn similarity(&self, label: Label) -> f64 {
        match label {
            Label::Gpt35p => self.gpt35_similarity,
            _ => self.llm_similarity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenReport {
    pub counts: BTreeMap<Label, usize>,
    pub encoder: String,
    /// Mean cosine between section embeddings of each class and of legit
    /// profiles, over all profile pairs and shared content sections.
    pub similarity_to_legit: BTreeMap<Label, f64>,
    /// The same, pooled over both LLM-like classes.
    pub llm_vs_legit_similarity: f64,
    pub flp_vs_legit_similarity: f64,
    /// Share of manual-fake-like profiles with a structural anomaly.
    pub flp_anomaly_rate: f64,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub records: Vec<RawProfile>,
    pub word_vectors: WordVectorTable,
    pub report: GenReport,
}

/// Deviation from the structure every legit-like profile has.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anomaly {
    MissingSection,
    TruncatedSummary,
    InconsistentCounts,
}

pub fn structural_anomalies(r: &RawProfile) -> Vec<Anomaly> {
    let mut out = Vec::new();
    let empty = |tag: Tag| r.sections.get(tag.word()).is_none_or(Vec::is_empty);
    if empty(Tag::Skills) || empty(Tag::Recommendations) || r.summary.trim().is_empty() {
        out.push(Anomaly::MissingSection);
    }
    let s = r.summary.trim();
    if !s.is_empty() && !s.ends_with('.') {
        out.push(Anomaly::TruncatedSummary);
    }
    let count = |k: &str| r.numeric.get(k).copied().unwrap_or(0) as f64;
    if count("followers") > MAX_FOLLOWER_RATIO * count("connections") {
        out.push(Anomaly::InconsistentCounts);
    }
    out
}

/// Word vectors for every pool token and tag word.
pub fn build_word_vectors(pools: &VocabularyPools, dim: usize, seed: u64) -> Result<WordVectorTable> {
    let mut rng = seed::rng(seed::derive(seed, "word-vectors"));
    let unit = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).expect("finite");
    let mut table = WordVectorTable::new(dim);
    let mut seen = BTreeSet::new();
    for group in pools.groups() {
        let centroid: Vec<f64> = (0..dim).map(|_| unit.sample(&mut rng)).collect();
        for token in group {
            if !seen.insert(token.clone()) {
                continue;
            }
            let v = centroid
                .iter()
                .map(|c| c + WORD_NOISE * unit.sample(&mut rng))
                .collect();
            table.insert(token, v)?;
        }
    }
    Ok(table)
}

fn pick<'a>(rng: &mut ChaCha8Rng, list: &'a [String]) -> &'a str {
    list.choose(rng).expect("pools are non-empty")
}

fn pick_distinct(rng: &mut ChaCha8Rng, list: &[String], lo: usize, hi: usize) -> Vec<String> {
    let n = rng.gen_range(lo..=hi).min(list.len());
    list.choose_multiple(rng, n).cloned().collect()
}

fn lognormal(rng: &mut ChaCha8Rng, mu: f64, sigma: f64) -> f64 {
    LogNormal::new(mu, sigma).expect("validated params").sample(rng)
}

fn counts(rng: &mut ChaCha8Rng, p: &NumericParams) -> (i64, i64) {
    let connections = lognormal(rng, p.connections_mu, p.connections_sigma).round().max(1.0);
    let ratio = lognormal(rng, p.follower_ratio_mu, p.follower_ratio_sigma).min(MAX_FOLLOWER_RATIO);
    (connections as i64, (connections * ratio).floor() as i64)
}

fn record(
    id: String,
    label: Label,
    name: String,
    location: String,
    summary: String,
    lists: [(Tag, Vec<String>); 4],
    (connections, followers): (i64, i64),
) -> RawProfile {
    RawProfile {
        id,
        label: label.as_str().to_string(),
        name,
        location,
        summary,
        sections: lists.into_iter().map(|(t, v)| (t.word().to_string(), v)).collect(),
        numeric: [
            ("connections".to_string(), connections),
            ("followers".to_string(), followers),
        ]
        .into_iter()
        .collect(),
    }
}

struct Template {
    name: String,
    location: String,
    experience: Vec<String>,
    education: Vec<String>,
    skills: Vec<String>,
    recommendations: Vec<String>,
    summary: String,
}

fn legit_template(rng: &mut ChaCha8Rng, pools: &VocabularyPools, summary_len: (usize, usize)) -> Template {
    let name = format!("{} {}", pick(rng, &pools.first_names), pick(rng, &pools.last_names));
    let location = pick(rng, &pools.locations).to_string();
    let experience = (0..rng.gen_range(1..=4))
        .map(|_| format!("{} at {}", pick(rng, &pools.job_titles), pick(rng, &pools.companies)))
        .collect();
    let education = (0..rng.gen_range(1..=2))
        .map(|_| format!("{}, {}", pick(rng, &pools.degrees), pick(rng, &pools.institutions)))
        .collect();
    let skills = pick_distinct(rng, &pools.skills, 4, 10);
    let recommendations = pick_distinct(rng, &pools.recommendation_sentences, 1, 3);
    let summary = pick_distinct(rng, &pools.summary_sentences, summary_len.0, summary_len.1).join(" ");
    Template {
        name,
        location,
        experience,
        education,
        skills,
        recommendations,
        summary,
    }
}

/// Replace each word that has a synonym with probability `rate`. One draw
/// is made per replaceable word whatever the rate, so the stream does not
/// depend on it.
fn substitute(text: &str, synonyms: &BTreeMap<String, String>, rate: f64, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::with_capacity(text.len());
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut String, rng: &mut ChaCha8Rng| {
        if word.is_empty() {
            return;
        }
        match synonyms.get(&word.to_lowercase()) {
            Some(syn) if rng.gen::<f64>() < rate => out.push_str(syn),
            _ => out.push_str(word),
        }
        word.clear();
    };
    for c in text.chars() {
        if c.is_alphanumeric() {
            word.push(c);
        } else {
            flush(&mut word, &mut out, rng);
            out.push(c);
        }
    }
    flush(&mut word, &mut out, rng);
    out
}

fn legit(id: String, rng: &mut ChaCha8Rng, pools: &VocabularyPools, p: &NumericParams) -> RawProfile {
    let t = legit_template(rng, pools, (1, 3));
    record(
        id,
        Label::Llp,
        t.name,
        t.location,
        t.summary,
        [
            (Tag::Experience, t.experience),
            (Tag::Education, t.education),
            (Tag::Skills, t.skills),
            (Tag::Recommendations, t.recommendations),
        ],
        counts(rng, p),
    )
}

fn llm_like(
    id: String,
    label: Label,
    rng: &mut ChaCha8Rng,
    pools: &VocabularyPools,
    p: &NumericParams,
    similarity: f64,
) -> RawProfile {
    let t = legit_template(rng, pools, (3, 5));
    let rate = 1.0 - similarity;
    let mut sub =
        |v: Vec<String>| -> Vec<String> { v.iter().map(|s| substitute(s, &pools.synonyms, rate, rng)).collect() };
    let experience = sub(t.experience);
    let education = sub(t.education);
    let skills = sub(t.skills);
    let recommendations = sub(t.recommendations);
    let summary = substitute(&t.summary, &pools.synonyms, rate, rng);
    record(
        id,
        label,
        t.name,
        t.location,
        summary,
        [
            (Tag::Experience, experience),
            (Tag::Education, education),
            (Tag::Skills, skills),
            (Tag::Recommendations, recommendations),
        ],
        counts(rng, p),
    )
}

fn manual_fake(
    id: String,
    rng: &mut ChaCha8Rng,
    pools: &VocabularyPools,
    p: &NumericParams,
    missing_rate: f64,
) -> RawProfile {
    let name = format!("{} {}", pick(rng, &pools.first_names), pick(rng, &pools.last_names));
    let location = pick(rng, &pools.locations).to_string();
    let experience: Vec<String> = (0..rng.gen_range(1..=2))
        .map(|_| {
            if rng.gen_bool(0.5) {
                pick(rng, &pools.fake_phrases).to_string()
            } else {
                format!("{} at {}", pick(rng, &pools.job_titles), pick(rng, &pools.companies))
            }
        })
        .collect();
    let education = vec![if rng.gen_bool(0.3) {
        pick(rng, &pools.fake_phrases).to_string()
    } else {
        format!("{}, {}", pick(rng, &pools.degrees), pick(rng, &pools.institutions))
    }];
    let mut skills = pick_distinct(rng, &pools.skills, 1, 4);
    let mut recommendations = pick_distinct(rng, &pools.recommendation_sentences, 1, 1);
    let mut summary = format!(
        "{}. {}",
        pick(rng, &pools.fake_phrases),
        pick(rng, &pools.summary_sentences)
    );
    if rng.gen_bool(0.5) {
        let keep = rng.gen_range(3..=6);
        summary = summary.split_whitespace().take(keep).collect::<Vec<_>>().join(" ");
        summary = summary.trim_end_matches('.').to_string();
    }
    if rng.gen_bool(missing_rate) {
        // drop a non-empty subset of the optional sections
        let mask = rng.gen_range(1..8u8);
        if mask & 1 != 0 {
            skills.clear();
        }
        if mask & 2 != 0 {
            recommendations.clear();
        }
        if mask & 4 != 0 {
            summary.clear();
        }
    }
    let (connections, mut followers) = counts(rng, p);
    if rng.gen_bool(0.3) {
        followers = (connections as f64 * rng.gen_range(5.0..20.0)).round() as i64;
    }
    record(
        id,
        Label::Flp,
        name,
        location,
        summary,
        [
            (Tag::Experience, experience),
            (Tag::Education, education),
            (Tag::Skills, skills),
            (Tag::Recommendations, recommendations),
        ],
        (connections, followers),
    )
}

/// Generate the corpus, its word-vector table and the report. Output
/// depends only on the config.
pub fn generate(config: &GenConfig) -> Result<Generated> {
    config.validate()?;
    let pools = config.pools()?;
    let word_vectors = build_word_vectors(&pools, config.word_dim, config.seed)?;
    let mut rng = seed::rng(seed::derive(config.seed, "synthgen"));
    let mut records = Vec::new();
    for label in Label::ALL {
        let n = config.counts.get(&label).copied().unwrap_or(0);
        if n == 0 {
            continue;
        }
        let p = &config.numeric[&label];
        for i in 0..n {
            let id = format!("{}-{:05}", label.as_str().to_lowercase(), i + 1);
            records.push(match label {
                Label::Llp => legit(id, &mut rng, &pools, p),
                Label::Flp => manual_fake(id, &mut rng, &pools, p, config.flp_missing_rate),
                Label::Gpt35p | Label::Gpt4p => llm_like(id, label, &mut rng, &pools, p, config.similarity(label)),
            });
        }
    }
    let report = gen_report(&records, &word_vectors)?;
    Ok(Generated {
        records,
        word_vectors,
        report,
    })
}

const CONTENT_TAGS: [Tag; 5] = [
    Tag::Education,
    Tag::Experience,
    Tag::Skills,
    Tag::Recommendations,
    Tag::Summary,
];

/// Per content tag: sum of unit section embeddings and their count.
fn unit_sums(profiles: &[&Profile], table: &WordVectorTable) -> BTreeMap<Tag, (Vec<f64>, usize)> {
    let mut out: BTreeMap<Tag, (Vec<f64>, usize)> = BTreeMap::new();
    for p in profiles {
        for s in &p.sections {
            if !CONTENT_TAGS.contains(&s.tag) {
                continue;
            }
            let e = embed_section(&s.text(), table);
            let norm = e.values.iter().map(|v| v * v).sum::<f64>().sqrt();
            if e.all_oov || norm == 0.0 {
                continue;
            }
            let entry = out.entry(s.tag).or_insert_with(|| (vec![0.0; table.dim()], 0));
            entry.0.iter_mut().zip(&e.values).for_each(|(a, v)| *a += v / norm);
            entry.1 += 1;
        }
    }
    out
}

/// Mean pairwise cosine over shared content tags, computed exactly from
/// per-tag sums of unit vectors.
fn mean_pair_cosine(a: &BTreeMap<Tag, (Vec<f64>, usize)>, b: &BTreeMap<Tag, (Vec<f64>, usize)>) -> Option<f64> {
    let (mut num, mut pairs) = (0.0, 0usize);
    for (tag, (sa, na)) in a {
        if let Some((sb, nb)) = b.get(tag) {
            num += sa.iter().zip(sb).map(|(x, y)| x * y).sum::<f64>();
            pairs += na * nb;
        }
    }
    (pairs > 0).then(|| num / pairs as f64)
}

/// Mean cosine similarity of each class's sections to legit sections.
pub fn similarity_to_legit(profiles: &[Profile], table: &WordVectorTable) -> BTreeMap<Label, f64> {
    let of = |labels: &[Label]| -> Vec<&Profile> { profiles.iter().filter(|p| labels.contains(&p.label)).collect() };
    let legit = unit_sums(&of(&[Label::Llp]), table);
    Label::ALL
        .into_iter()
        .filter_map(|l| mean_pair_cosine(&unit_sums(&of(&[l]), table), &legit).map(|s| (l, s)))
        .collect()
}

fn gen_report(records: &[RawProfile], table: &WordVectorTable) -> Result<GenReport> {
    let profiles: Vec<Profile> = records
        .iter()
        .map(|r| clean_profile(r).map_err(|e| Error::Corrupt(format!("generated record {}: {}", r.id, e.detail))))
        .collect::<Result<_>>()?;
    let mut counts: BTreeMap<Label, usize> = BTreeMap::new();
    for p in &profiles {
        *counts.entry(p.label).or_default() += 1;
    }
    let of = |labels: &[Label]| -> Vec<&Profile> { profiles.iter().filter(|p| labels.contains(&p.label)).collect() };
    let legit = unit_sums(&of(&[Label::Llp]), table);
    let llm = mean_pair_cosine(&unit_sums(&of(&[Label::Gpt35p, Label::Gpt4p]), table), &legit);
    let flp = mean_pair_cosine(&unit_sums(&of(&[Label::Flp]), table), &legit);
    let flp_records: Vec<&RawProfile> = records.iter().filter(|r| r.label == Label::Flp.as_str()).collect();
    let anomalous = flp_records
        .iter()
        .filter(|r| !structural_anomalies(r).is_empty())
        .count();
    Ok(GenReport {
        counts,
        encoder: BUILTIN_ENCODER.to_string(),
        similarity_to_legit: similarity_to_legit(&profiles, table),
        llm_vs_legit_similarity: llm.unwrap_or(f64::NAN),
        flp_vs_legit_similarity: flp.unwrap_or(f64::NAN),
        flp_anomaly_rate: if flp_records.is_empty() {
            0.0
        } else {
            anomalous as f64 / flp_records.len() as f64
        },
    })
}

/// One problem found by [`validate_corpus`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: usize,
    pub id: Option<String>,
    pub reason: RejectReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDiagnostics {
    pub accepted: usize,
    pub counts: BTreeMap<Label, usize>,
    pub duplicate_ids: Vec<String>,
    pub diagnostics: Vec<Diagnostic>,
}

impl CorpusDiagnostics {
    pub fn is_clean(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

/// Schema conformance, class counts and duplicate ids of a JSONL corpus.
/// Only an unreadable file is an error.
pub fn validate_corpus(path: impl AsRef<Path>) -> Result<CorpusDiagnostics> {
    let loaded = load_corpus(path, CorpusFormat::JsonLines)?;
    let mut counts: BTreeMap<Label, usize> = BTreeMap::new();
    for p in &loaded.profiles {
        *counts.entry(p.label).or_default() += 1;
    }
    let duplicate_ids = loaded
        .rejections
        .iter()
        .filter(|r| r.reason == RejectReason::Duplicate)
        .filter_map(|r| r.id.clone())
        .collect();
    Ok(CorpusDiagnostics {
        accepted: loaded.profiles.len(),
        counts,
        duplicate_ids,
        diagnostics: loaded
            .rejections
            .into_iter()
            .map(|r| Diagnostic {
                line: r.line,
                id: r.id,
                reason: r.reason,
                detail: r.detail,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::write_raw_corpus;
    use crate::embedding::{embed_profile, ste_aggregate};
    use crate::learn::{train_logreg, LogRegParams};

    fn small(seed: u64) -> GenConfig {
        GenConfig {
            counts: [
                (Label::Llp, 60),
                (Label::Flp, 30),
                (Label::Gpt35p, 30),
                (Label::Gpt4p, 30),
            ]
            .into_iter()
            .collect(),
            seed,
            ..GenConfig::default()
        }
    }

    #[test]
    fn default_counts_follow_the_scale() {
        let c = GenConfig::default().counts;
        assert_eq!(c[&Label::Llp], 300);
        assert_eq!(c[&Label::Flp], 100);
        assert_eq!(c[&Label::Gpt35p], 200);
        assert_eq!(c[&Label::Gpt4p], 100);
    }

    #[test]
    fn exact_class_counts() {
        let mut cfg = small(1);
        cfg.counts = [
            (Label::Llp, 600),
            (Label::Flp, 200),
            (Label::Gpt35p, 200),
            (Label::Gpt4p, 100),
        ]
        .into_iter()
        .collect();
        let g = generate(&cfg).unwrap();
        assert_eq!(g.report.counts, cfg.counts);
        assert_eq!(g.records.len(), 1100);
    }

    #[test]
    fn byte_identical_for_same_seed() {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, seed: u64| {
            let g = generate(&small(seed)).unwrap();
            let path = dir.path().join(name);
            write_raw_corpus(&path, &g.records).unwrap();
            fs::read(path).unwrap()
        };
        assert_eq!(write("a.jsonl", 5), write("b.jsonl", 5));
        assert_ne!(write("a.jsonl", 5), write("c.jsonl", 6));
    }

    #[test]
    fn full_similarity_copies_the_template() {
        let pools = VocabularyPools::builtin();
        let p = GenConfig::default().numeric[&Label::Gpt4p];
        let mut a = seed::rng(3);
        let mut b = seed::rng(3);
        let llm = llm_like("x".into(), Label::Gpt4p, &mut a, &pools, &p, 1.0);
        let t = legit_template(&mut b, &pools, (3, 5));
        assert_eq!(llm.summary, t.summary);
        assert_eq!(llm.sections["experience"], t.experience);
        assert_eq!(llm.sections["skills"], t.skills);
        assert_eq!(llm.sections["recommendations"], t.recommendations);
    }

    #[test]
    fn substitution_rate_extremes() {
        let pools = VocabularyPools::builtin();
        let mut rng = seed::rng(0);
        let text = "I like building tools that help colleagues do their work faster.";
        assert_eq!(substitute(text, &pools.synonyms, 0.0, &mut rng), text);
        let all = substitute(text, &pools.synonyms, 1.0, &mut rng);
        assert_eq!(
            all,
            "I thrive architecting solutions that empower stakeholders do their collaborate seamlessly."
        );
    }

    #[test]
    fn llm_text_closer_to_legit_than_manual_fakes() {
        let g = generate(&GenConfig::default()).unwrap();
        let r = &g.report;
        assert!(r.llm_vs_legit_similarity > r.flp_vs_legit_similarity, "{r:?}");
        assert!(r.similarity_to_legit[&Label::Gpt4p] > r.similarity_to_legit[&Label::Gpt35p]);
    }

    #[test]
    fn manual_fakes_are_anomalous_and_legit_are_not() {
        let g = generate(&GenConfig::default()).unwrap();
        assert!(g.report.flp_anomaly_rate >= 0.4, "{}", g.report.flp_anomaly_rate);
        for r in &g.records {
            if r.label != "FLP" {
                assert!(
                    structural_anomalies(r).is_empty(),
                    "{} {:?}",
                    r.id,
                    structural_anomalies(r)
                );
            }
        }
    }

    #[test]
    fn every_generated_record_is_clean_and_in_vocabulary() {
        let g = generate(&small(9)).unwrap();
        for r in &g.records {
            let p = clean_profile(r).unwrap();
            let set = embed_profile(&p, &g.word_vectors);
            for item in &set.items {
                assert!(item.e.iter().any(|v| *v != 0.0), "{} {:?}", r.id, item.tag);
                assert!(item.em_tag.iter().any(|v| *v != 0.0));
            }
        }
    }

    /// Held-out Brier skill of a logistic probe separating one LLM-like
    /// class from legit on text-only features.
    fn text_separability(similarity: f64) -> f64 {
        let mut cfg = small(21);
        cfg.counts = [(Label::Llp, 120), (Label::Gpt4p, 120)].into_iter().collect();
        cfg.llm_similarity = similarity;
        let g = generate(&cfg).unwrap();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for r in &g.records {
            let p = clean_profile(r).unwrap();
            x.push(ste_aggregate(&embed_profile(&p, &g.word_vectors)).unwrap().values);
            y.push(p.is_fake());
        }
        let (train, test): (Vec<usize>, Vec<usize>) = (0..x.len()).partition(|i| i % 2 == 0);
        let tx: Vec<&[f64]> = train.iter().map(|&i| x[i].as_slice()).collect();
        let ty: Vec<bool> = train.iter().map(|&i| y[i]).collect();
        let model = train_logreg(&tx, &ty, &LogRegParams::default()).unwrap();
        let brier: f64 = test
            .iter()
            .map(|&i| {
                let d = model.predict_proba(&x[i]) - if y[i] { 1.0 } else { 0.0 };
                d * d
            })
            .sum::<f64>()
            / test.len() as f64;
        1.0 - brier / 0.25
    }

    #[test]
    fn separability_falls_as_similarity_rises() {
        let s: Vec<f64> = [0.5, 0.75, 1.0].iter().map(|&v| text_separability(v)).collect();
        assert!(s[0] > s[1] && s[1] > s[2], "{s:?}");
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = GenConfig::default();
        c.llm_similarity = 1.5;
        assert!(generate(&c).is_err());
        let mut c = GenConfig::default();
        c.numeric.get_mut(&Label::Flp).unwrap().connections_sigma = f64::NAN;
        assert!(generate(&c).is_err());
    }

    #[test]
    fn empty_pool_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("skills.txt"), "# nothing\n\n").unwrap();
        let err = VocabularyPools::load_dir(dir.path()).unwrap_err();
        assert!(err.to_string().contains("skills"), "{err}");
        let cfg = GenConfig {
            pools_dir: Some(dir.path().to_path_buf()),
            ..small(1)
        };
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn validation_diagnostics() {
        let g = generate(&small(2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        write_raw_corpus(&path, &g.records).unwrap();
        let d = validate_corpus(&path).unwrap();
        assert!(d.is_clean());
        assert_eq!(d.accepted, 150);

        let mut bad = g.records.clone();
        bad.push(g.records[0].clone());
        bad[1].numeric.insert("followers".into(), -4);
        write_raw_corpus(&path, &bad).unwrap();
        let d = validate_corpus(&path).unwrap();
        assert_eq!(d.duplicate_ids, vec![g.records[0].id.clone()]);
        assert!(d
            .diagnostics
            .iter()
            .any(|x| x.reason == RejectReason::NegativeCount && x.id.as_deref() == Some(g.records[1].id.as_str())));
    }
}
