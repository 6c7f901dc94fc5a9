//! Profile data model, corpus parsing and cleaning, and stratified splits.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Ground-truth profile class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    /// Legitimate profile.
    #[serde(rename = "LLP")]
    Llp,
    /// Manually crafted fake.
    #[serde(rename = "FLP")]
    Flp,
    /// Fake generated by a GPT-3.5-class model.
    #[serde(rename = "GPT35P")]
    Gpt35p,
    /// Fake generated by a GPT-4-class model.
    #[serde(rename = "GPT4P")]
    Gpt4p,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::Llp, Label::Flp, Label::Gpt35p, Label::Gpt4p];

    /// Binary projection: everything except LLP is fake.
    pub fn is_fake(self) -> bool {
        self != Label::Llp
    }

    /// LLM-generated classes.
    pub fn is_llm(self) -> bool {
        matches!(self, Label::Gpt35p | Label::Gpt4p)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Llp => "LLP",
            Label::Flp => "FLP",
            Label::Gpt35p => "GPT35P",
            Label::Gpt4p => "GPT4P",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "LLP" => Ok(Label::Llp),
            "FLP" => Ok(Label::Flp),
            "GPT35P" => Ok(Label::Gpt35p),
            "GPT4P" => Ok(Label::Gpt4p),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// Closed section-tag vocabulary, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tag {
    Education,
    Experience,
    Skills,
    Recommendations,
    Summary,
    Location,
    Name,
}

impl Tag {
    pub const ALL: [Tag; 7] = [
        Tag::Education,
        Tag::Experience,
        Tag::Skills,
        Tag::Recommendations,
        Tag::Summary,
        Tag::Location,
        Tag::Name,
    ];

    /// The lowercase tag word, also used as the key in corpus files and as
    /// the input text of the built-in tag embedding.
    pub fn word(self) -> &'static str {
        match self {
            Tag::Education => "education",
            Tag::Experience => "experience",
            Tag::Skills => "skills",
            Tag::Recommendations => "recommendations",
            Tag::Summary => "summary",
            Tag::Location => "location",
            Tag::Name => "name",
        }
    }

    pub fn from_word(word: &str) -> Option<Tag> {
        let lower = word.trim().to_lowercase();
        Tag::ALL.into_iter().find(|t| t.word() == lower)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.word())
    }
}

/// One tagged profile section. Multi-entry sections (jobs, degrees, skills)
/// keep their entries; `text()` is the concatenation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub tag: Tag,
    pub entries: Vec<String>,
}

impl Section {
    pub fn text(&self) -> String {
        self.entries.join(" ")
    }
}

/// A cleaned profile. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Profile {
    pub id: String,
    pub label: Label,
    pub name: String,
    pub location: String,
    pub summary: String,
    /// Present sections in canonical tag order, tags distinct.
    pub sections: Vec<Section>,
    pub numeric_raw: BTreeMap<String, u64>,
}

impl Profile {
    pub fn section(&self, tag: Tag) -> Option<&Section> {
        self.sections.iter().find(|s| s.tag == tag)
    }

    /// Entries of a section, empty when the section is absent.
    pub fn entries(&self, tag: Tag) -> &[String] {
        self.section(tag).map_or(&[], |s| s.entries.as_slice())
    }

    pub fn numeric(&self, key: &str) -> u64 {
        self.numeric_raw.get(key).copied().unwrap_or(0)
    }

    pub fn is_fake(&self) -> bool {
        self.label.is_fake()
    }

    /// Back to the on-disk record shape.
    pub fn to_raw(&self) -> RawProfile {
        let mut sections = BTreeMap::new();
        for tag in LIST_TAGS {
            sections.insert(tag.word().to_string(), self.entries(tag).to_vec());
        }
        RawProfile {
            id: self.id.clone(),
            label: self.label.as_str().to_string(),
            name: self.name.clone(),
            location: self.location.clone(),
            summary: self.summary.clone(),
            sections,
            numeric: self.numeric_raw.iter().map(|(k, v)| (k.clone(), *v as i64)).collect(),
        }
    }
}

/// Tags stored under the `sections` object of a corpus record.
const LIST_TAGS: [Tag; 4] = [Tag::Education, Tag::Experience, Tag::Skills, Tag::Recommendations];

/// One corpus record as it appears on disk (JSON Lines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawProfile {
    pub id: String,
    pub label: String,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub location: String,
    #[serde(default)]
    pub summary: String,
    #[serde(default)]
    pub sections: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub numeric: BTreeMap<String, i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Schema,
    UnknownLabel,
    UnknownTag,
    MissingEssential,
    NegativeCount,
    Duplicate,
}

/// Why a record did not make it into the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based line (JSON Lines) or element index (JSON array).
    pub line: usize,
    pub id: Option<String>,
    pub reason: RejectReason,
    pub detail: String,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "record {} ({}): {:?}: {}",
            self.line,
            self.id.as_deref().unwrap_or("?"),
            self.reason,
            self.detail
        )
    }
}

/// Cleaning failure for a single record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanError {
    pub reason: RejectReason,
    pub detail: String,
}

impl CleanError {
    fn new(reason: RejectReason, detail: impl Into<String>) -> Self {
        Self {
            reason,
            detail: detail.into(),
        }
    }
}

/// Delimiters that join several entries inside one field.
pub const ENTRY_DELIMITERS: [char; 4] = [';', '|', '\n', '\r'];

/// Drop control characters and collapse whitespace runs to single spaces.
pub fn normalize_text(s: &str) -> String {
    let cleaned: String = s
        .chars()
        .map(|c| if c.is_whitespace() { ' ' } else { c })
        .filter(|c| !c.is_control())
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Split composite entries and normalize each piece; empty pieces vanish.
pub fn split_entries<S: AsRef<str>>(raw: &[S]) -> Vec<String> {
    raw.iter()
        .flat_map(|e| e.as_ref().split(ENTRY_DELIMITERS).map(normalize_text))
        .filter(|e| !e.is_empty())
        .collect()
}

/// Repair and verify one parsed record.
pub fn clean_profile(raw: &RawProfile) -> std::result::Result<Profile, CleanError> {
    let id = normalize_text(&raw.id);
    if id.is_empty() {
        return Err(CleanError::new(RejectReason::Schema, "empty id"));
    }
    let label: Label = raw
        .label
        .trim()
        .parse()
        .map_err(|e: String| CleanError::new(RejectReason::UnknownLabel, e))?;

    let mut lists: BTreeMap<Tag, Vec<String>> = BTreeMap::new();
    for (key, entries) in &raw.sections {
        let tag = Tag::from_word(key)
            .filter(|t| LIST_TAGS.contains(t))
            .ok_or_else(|| CleanError::new(RejectReason::UnknownTag, format!("unknown section tag {key:?}")))?;
        lists.entry(tag).or_default().extend(split_entries(entries));
    }

    let name = normalize_text(&raw.name);
    let location = normalize_text(&raw.location);
    let summary = normalize_text(&raw.summary);

    let mut missing = Vec::new();
    if name.is_empty() {
        missing.push("Name");
    }
    if lists.get(&Tag::Experience).is_none_or(Vec::is_empty) {
        missing.push("Experience");
    }
    if lists.get(&Tag::Education).is_none_or(Vec::is_empty) {
        missing.push("Education");
    }
    if location.is_empty() {
        missing.push("Location");
    }
    if !missing.is_empty() {
        return Err(CleanError::new(
            RejectReason::MissingEssential,
            format!("missing essential field(s): {}", missing.join(", ")),
        ));
    }

    let mut numeric_raw = BTreeMap::new();
    for (key, &value) in &raw.numeric {
        let key = normalize_text(key).to_lowercase();
        if value < 0 {
            return Err(CleanError::new(
                RejectReason::NegativeCount,
                format!("numeric attribute {key} is negative ({value})"),
            ));
        }
        numeric_raw.insert(key, value as u64);
    }

    let mut sections = Vec::new();
    for tag in Tag::ALL {
        let entries = match tag {
            Tag::Summary => vec![summary.clone()],
            Tag::Location => vec![location.clone()],
            Tag::Name => vec![name.clone()],
            _ => lists.remove(&tag).unwrap_or_default(),
        };
        if entries.iter().any(|e| !e.is_empty()) {
            sections.push(Section { tag, entries });
        }
    }

    Ok(Profile {
        id,
        label,
        name,
        location,
        summary,
        sections,
        numeric_raw,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    /// One JSON object per line.
    #[default]
    JsonLines,
    /// A single JSON array of records.
    JsonArray,
}

/// Loader output: accepted profiles plus the rejection ledger.
#[derive(Debug, Clone, Default)]
pub struct LoadedCorpus {
    pub profiles: Vec<Profile>,
    pub rejections: Vec<Rejection>,
}

/// Parse and clean a corpus file. Unreadable files are fatal; bad records
/// land in the rejection ledger.
pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<LoadedCorpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records: Vec<(usize, std::result::Result<RawProfile, String>)> = match format {
        CorpusFormat::JsonLines => text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, serde_json::from_str(l).map_err(|e| e.to_string())))
            .collect(),
        CorpusFormat::JsonArray => {
            let values: Vec<serde_json::Value> = serde_json::from_str(&text)?;
            values
                .into_iter()
                .enumerate()
                .map(|(i, v)| (i + 1, serde_json::from_value(v).map_err(|e| e.to_string())))
                .collect()
        }
    };

    let mut out = LoadedCorpus::default();
    let mut seen = HashSet::new();
    for (line, record) in records {
        let raw = match record {
            Ok(raw) => raw,
            Err(detail) => {
                out.rejections.push(Rejection {
                    line,
                    id: None,
                    reason: RejectReason::Schema,
                    detail,
                });
                continue;
            }
        };
        match clean_profile(&raw) {
            Ok(p) if !seen.insert(p.id.clone()) => out.rejections.push(Rejection {
                line,
                id: Some(p.id),
                reason: RejectReason::Duplicate,
                detail: "duplicate profile id".into(),
            }),
            Ok(p) => out.profiles.push(p),
            Err(e) => out.rejections.push(Rejection {
                line,
                id: Some(raw.id.clone()),
                reason: e.reason,
                detail: e.detail,
            }),
        }
    }
    for r in &out.rejections {
        log::warn!("{}: rejected {r}", path.display());
    }
    Ok(out)
}

/// Write profiles as JSON Lines (LF endings, sorted keys inside maps).
pub fn write_corpus(path: impl AsRef<Path>, profiles: &[Profile]) -> Result<()> {
    let raws: Vec<RawProfile> = profiles.iter().map(Profile::to_raw).collect();
    write_raw_corpus(path, &raws)
}

pub fn write_raw_corpus(path: impl AsRef<Path>, records: &[RawProfile]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Requested (train, test) counts per class.
pub type SplitCounts = BTreeMap<Label, (usize, usize)>;

/// Disjoint train / test id lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

/// Draw exact per-class counts. Ids are sorted before the seeded shuffle, so
/// the result depends only on the set of profiles, the counts and the seed.
pub fn stratified_split(profiles: &[Profile], counts: &SplitCounts, seed: u64) -> Result<CorpusSplit> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (&label, &(n_train, n_test)) in counts {
        let mut ids: Vec<&str> = profiles
            .iter()
            .filter(|p| p.label == label)
            .map(|p| p.id.as_str())
            .collect();
        if ids.len() < n_train + n_test {
            return Err(Error::InsufficientClass {
                class: label.to_string(),
                requested: n_train + n_test,
                available: ids.len(),
            });
        }
        ids.sort_unstable();
        let mut rng = seed::rng(seed::derive(seed, label.as_str()));
        ids.shuffle(&mut rng);
        train.extend(ids[..n_train].iter().map(|s| s.to_string()));
        test.extend(ids[n_train..n_train + n_test].iter().map(|s| s.to_string()));
    }
    Ok(CorpusSplit { train, test, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(id: &str) -> RawProfile {
        let mut sections = BTreeMap::new();
        sections.insert("education".into(), vec!["BSc Physics, Leeds".into()]);
        sections.insert("experience".into(), vec!["Engineer at Acme".into()]);
        sections.insert("skills".into(), vec!["rust".into(), "sql".into()]);
        RawProfile {
            id: id.into(),
            label: "LLP".into(),
            name: "Ada Lovelace".into(),
            location: "London".into(),
            summary: "Builds things".into(),
            sections,
            numeric: [("connections".to_string(), 120), ("followers".to_string(), 80)]
                .into_iter()
                .collect(),
        }
    }

    fn write_lines(lines: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn loads_well_formed_records() {
        let lines: Vec<String> = ["a", "b", "c"]
            .iter()
            .map(|id| serde_json::to_string(&raw(id)).unwrap())
            .collect();
        let f = write_lines(&lines);
        let loaded = load_corpus(f.path(), CorpusFormat::JsonLines).unwrap();
        assert_eq!(loaded.profiles.len(), 3);
        assert!(loaded.rejections.is_empty());
    }

    #[test]
    fn missing_education_is_reported() {
        let mut r = raw("x");
        r.sections.remove("education");
        let f = write_lines(&[serde_json::to_string(&r).unwrap()]);
        let loaded = load_corpus(f.path(), CorpusFormat::JsonLines).unwrap();
        assert!(loaded.profiles.is_empty());
        assert_eq!(loaded.rejections[0].reason, RejectReason::MissingEssential);
        assert!(loaded.rejections[0].detail.contains("Education"));
    }

    #[test]
    fn composite_experience_is_split() {
        let mut r = raw("x");
        r.sections.insert("experience".into(), vec!["A; B".into()]);
        let f = write_lines(&[serde_json::to_string(&r).unwrap()]);
        let loaded = load_corpus(f.path(), CorpusFormat::JsonLines).unwrap();
        assert_eq!(loaded.profiles[0].entries(Tag::Experience), ["A", "B"]);
    }

    #[test]
    fn pipe_delimited_skills_split() {
        let mut r = raw("x");
        r.sections.insert("skills".into(), vec!["a|b|c".into()]);
        let p = clean_profile(&r).unwrap();
        assert_eq!(p.entries(Tag::Skills), ["a", "b", "c"]);
    }

    #[test]
    fn control_characters_stripped_from_name() {
        let mut r = raw("x");
        r.name = "Ada Lovelace\u{7}\u{0}\t".into();
        assert_eq!(clean_profile(&r).unwrap().name, "Ada Lovelace");
    }

    #[test]
    fn empty_location_rejected() {
        let mut r = raw("x");
        r.location = "  ".into();
        assert_eq!(clean_profile(&r).unwrap_err().reason, RejectReason::MissingEssential);
    }

    #[test]
    fn unknown_tag_and_label_rejected() {
        let mut r = raw("x");
        r.sections.insert("hobbies".into(), vec!["chess".into()]);
        assert_eq!(clean_profile(&r).unwrap_err().reason, RejectReason::UnknownTag);
        let mut r = raw("x");
        r.label = "BOT".into();
        assert_eq!(clean_profile(&r).unwrap_err().reason, RejectReason::UnknownLabel);
    }

    #[test]
    fn negative_count_rejected() {
        let mut r = raw("x");
        r.numeric.insert("followers".into(), -3);
        assert_eq!(clean_profile(&r).unwrap_err().reason, RejectReason::NegativeCount);
    }

    #[test]
    fn duplicates_and_garbage_land_in_ledger() {
        let good = serde_json::to_string(&raw("a")).unwrap();
        let f = write_lines(&[good.clone(), "{not json".into(), good]);
        let loaded = load_corpus(f.path(), CorpusFormat::JsonLines).unwrap();
        assert_eq!(loaded.profiles.len(), 1);
        let reasons: Vec<_> = loaded.rejections.iter().map(|r| (r.line, r.reason)).collect();
        assert_eq!(reasons, [(2, RejectReason::Schema), (3, RejectReason::Duplicate)]);
    }

    #[test]
    fn json_array_format() {
        let body = serde_json::to_string(&vec![raw("a"), raw("b")]).unwrap();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        let loaded = load_corpus(f.path(), CorpusFormat::JsonArray).unwrap();
        assert_eq!(loaded.profiles.len(), 2);
    }

    #[test]
    fn unreadable_file_is_fatal() {
        assert!(matches!(
            load_corpus("/nonexistent/corpus.jsonl", CorpusFormat::JsonLines),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn round_trip_through_file() {
        let mut r = raw("a");
        r.sections
            .insert("recommendations".into(), vec!["great | reliable".into()]);
        let p = clean_profile(&r).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_corpus(f.path(), std::slice::from_ref(&p)).unwrap();
        let back = load_corpus(f.path(), CorpusFormat::JsonLines).unwrap();
        assert_eq!(back.profiles, vec![p]);
    }

    fn population(n_per: usize) -> Vec<Profile> {
        let mut out = Vec::new();
        for label in Label::ALL {
            for i in 0..n_per {
                let mut r = raw(&format!("{label}-{i:04}"));
                r.label = label.as_str().into();
                out.push(clean_profile(&r).unwrap());
            }
        }
        out
    }

    #[test]
    fn split_exact_counts_table_one() {
        let mut profiles = population(0);
        for (label, n) in [(Label::Llp, 1800), (Label::Flp, 600)] {
            for i in 0..n {
                let mut r = raw(&format!("{label}-{i}"));
                r.label = label.as_str().into();
                profiles.push(clean_profile(&r).unwrap());
            }
        }
        let counts: SplitCounts = [(Label::Llp, (1260, 540)), (Label::Flp, (420, 180))].into();
        let split = stratified_split(&profiles, &counts, 11).unwrap();
        let count = |ids: &[String], prefix: &str| ids.iter().filter(|i| i.starts_with(prefix)).count();
        assert_eq!(count(&split.train, "LLP"), 1260);
        assert_eq!(count(&split.test, "LLP"), 540);
        assert_eq!(count(&split.train, "FLP"), 420);
        assert_eq!(count(&split.test, "FLP"), 180);
        let train: HashSet<_> = split.train.iter().collect();
        assert!(split.test.iter().all(|id| !train.contains(id)));
        assert_eq!(split, stratified_split(&profiles, &counts, 11).unwrap());
    }

    #[test]
    fn split_insufficient_class_names_it() {
        let profiles = population(5);
        let counts: SplitCounts = [(Label::Gpt4p, (4, 2))].into();
        match stratified_split(&profiles, &counts, 0) {
            Err(Error::InsufficientClass { class, .. }) => assert_eq!(class, "GPT4P"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_ignores_input_order() {
        let mut profiles = population(10);
        let counts: SplitCounts = [(Label::Llp, (6, 3)), (Label::Gpt35p, (5, 5))].into();
        let a = stratified_split(&profiles, &counts, 3).unwrap();
        profiles.reverse();
        assert_eq!(a, stratified_split(&profiles, &counts, 3).unwrap());
    }

    proptest! {
        #[test]
        fn cleaning_is_idempotent(
            name in "[ \\t\\x00-\\x08a-zA-Z]{0,20}",
            entry in "[ ;|\\na-z]{0,30}",
        ) {
            let mut r = raw("p");
            r.name = format!("N {name}");
            r.sections.insert("experience".into(), vec![format!("job {entry}")]);
            let once = clean_profile(&r).unwrap();
            let twice = clean_profile(&once.to_raw()).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
