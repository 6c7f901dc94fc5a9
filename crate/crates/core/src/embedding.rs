//! Section embeddings and Section Tag Embedding (STE) aggregation.
//!
//! A profile's STE vector is `F = (1/N) Σ_j (E_j − Em(tag_j))`: the mean over
//! its N present sections of the section-text embedding minus the embedding
//! of the section's tag. Section embeddings either come from the built-in
//! mean-of-word-vectors encoder or from an external interchange file.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Profile, Tag};
use crate::error::{Error, Result};

/// Encoder name recorded for embeddings produced by [`embed_profile`].
pub const BUILTIN_ENCODER: &str = "builtin-mean";

/// Static token → vector table in GloVe text layout.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectorTable {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
}

impl WordVectorTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    /// Insert or replace a token vector. Returns the previous vector.
    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<Option<Vec<f64>>> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        Ok(self.entries.insert(token.into(), vector))
    }

    /// Tokens in sorted order.
    pub fn tokens(&self) -> Vec<&str> {
        let mut t: Vec<&str> = self.entries.keys().map(String::as_str).collect();
        t.sort_unstable();
        t
    }

    /// Write in GloVe text format, tokens sorted.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for token in self.tokens() {
            let mut line = token.to_string();
            for v in &self.entries[token] {
                line.push(' ');
                line.push_str(&v.to_string());
            }
            line.push('\n');
            w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Load a GloVe-format text table. The first vector fixes the dimension;
/// later duplicates replace earlier ones.
pub fn load_word_vectors(path: impl AsRef<Path>) -> Result<WordVectorTable> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut table: Option<WordVectorTable> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let vector = parts
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Config(format!("{}:{lineno}: bad number: {e}", path.display())))?;
        let table = table.get_or_insert_with(|| WordVectorTable::new(vector.len()));
        if vector.is_empty() || vector.len() != table.dim {
            return Err(Error::VectorLength {
                line: lineno,
                expected: table.dim,
                found: vector.len(),
            });
        }
        if table.entries.insert(token.to_string(), vector).is_some() {
            log::warn!(
                "{}:{lineno}: duplicate token {token:?}, keeping the later vector",
                path.display()
            );
        }
    }
    table.filter(|t| !t.is_empty()).ok_or(Error::Empty("word-vector table"))
}

/// Lowercase and split on whitespace and punctuation.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Output of the built-in encoder for one piece of text.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbedding {
    pub values: Vec<f64>,
    /// Set when no token was in vocabulary; `values` is then all zeros.
    pub all_oov: bool,
}

/// Mean of the vectors of in-vocabulary tokens.
pub fn embed_section(text: &str, table: &WordVectorTable) -> TextEmbedding {
    let mut sum = vec![0.0; table.dim];
    let mut hits = 0usize;
    for token in tokenize(text) {
        if let Some(v) = table.get(&token) {
            sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
            hits += 1;
        }
    }
    if hits == 0 {
        return TextEmbedding {
            values: sum,
            all_oov: true,
        };
    }
    let n = hits as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    TextEmbedding {
        values: sum,
        all_oov: false,
    }
}

/// One section's text embedding and its tag embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionItem {
    #[serde(with = "tag_word")]
    pub tag: Tag,
    pub e: Vec<f64>,
    #[serde(default)]
    pub em_tag: Vec<f64>,
}

/// All section embeddings of one profile from one encoder. This is the
/// embedding interchange record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionEmbeddingSet {
    pub profile_id: String,
    pub encoder: String,
    #[serde(rename = "sections")]
    pub items: Vec<SectionItem>,
}

impl SectionEmbeddingSet {
    /// Common dimension of every vector, or the first disagreement.
    pub fn dim(&self) -> Result<usize> {
        let first = self.items.first().ok_or(Error::Empty("section embedding set"))?;
        let d = first.e.len();
        for item in &self.items {
            for v in [&item.e, &item.em_tag] {
                if v.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: v.len(),
                    });
                }
            }
        }
        Ok(d)
    }
}

/// Aggregated STE vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteVector {
    pub profile_id: String,
    pub values: Vec<f64>,
}

/// `F = (1/N) Σ (E_j − Em(tag_j))`.
pub fn ste_aggregate(set: &SectionEmbeddingSet) -> Result<SteVector> {
    let d = set.dim()?;
    let mut f = vec![0.0; d];
    for item in &set.items {
        for ((acc, e), m) in f.iter_mut().zip(&item.e).zip(&item.em_tag) {
            *acc += e - m;
        }
    }
    let n = set.items.len() as f64;
    f.iter_mut().for_each(|x| *x /= n);
    if f.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParam(format!(
            "non-finite STE component for profile {}",
            set.profile_id
        )));
    }
    Ok(SteVector {
        profile_id: set.profile_id.clone(),
        values: f,
    })
}

/// Built-in encoder over every present section. The tag embedding is the
/// encoding of the tag word itself.
pub fn embed_profile(profile: &Profile, table: &WordVectorTable) -> SectionEmbeddingSet {
    let items = profile
        .sections
        .iter()
        .map(|s| SectionItem {
            tag: s.tag,
            e: embed_section(&s.text(), table).values,
            em_tag: embed_section(s.tag.word(), table).values,
        })
        .collect();
    SectionEmbeddingSet {
        profile_id: profile.id.clone(),
        encoder: BUILTIN_ENCODER.to_string(),
        items,
    }
}

/// Interchange-file rejection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EmbeddingRejection {
    pub line: usize,
    pub profile_id: Option<String>,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct IngestedEmbeddings {
    pub sets: Vec<SectionEmbeddingSet>,
    pub rejections: Vec<EmbeddingRejection>,
}

impl IngestedEmbeddings {
    pub fn by_id(&self) -> HashMap<&str, &SectionEmbeddingSet> {
        self.sets.iter().map(|s| (s.profile_id.as_str(), s)).collect()
    }
}

fn validate_set(set: &SectionEmbeddingSet) -> std::result::Result<(), String> {
    if set.items.is_empty() {
        return Err("no sections".into());
    }
    let mut tags = HashSet::new();
    for item in &set.items {
        if item.em_tag.is_empty() {
            return Err(format!("missing tag vector for section {}", item.tag));
        }
        if !tags.insert(item.tag) {
            return Err(format!("section {} appears twice", item.tag));
        }
        if item.e.iter().chain(&item.em_tag).any(|x| !x.is_finite()) {
            return Err(format!("non-finite value in section {}", item.tag));
        }
    }
    set.dim().map(|_| ()).map_err(|e| e.to_string())
}

/// Read an embedding interchange file (JSON Lines).
pub fn ingest_external_embeddings(path: impl AsRef<Path>) -> Result<IngestedEmbeddings> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = IngestedEmbeddings::default();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let reject = |profile_id: Option<String>, detail: String| EmbeddingRejection {
            line: i + 1,
            profile_id,
            detail,
        };
        let set: SectionEmbeddingSet = match serde_json::from_str(&line) {
            Ok(s) => s,
            Err(e) => {
                out.rejections.push(reject(None, e.to_string()));
                continue;
            }
        };
        if let Err(detail) = validate_set(&set) {
            out.rejections.push(reject(Some(set.profile_id), detail));
            continue;
        }
        if !seen.insert(set.profile_id.clone()) {
            out.rejections
                .push(reject(Some(set.profile_id), "duplicate profile id".into()));
            continue;
        }
        out.sets.push(set);
    }
    for r in &out.rejections {
        log::warn!(
            "{}:{}: rejected embedding record {}: {}",
            path.display(),
            r.line,
            r.profile_id.as_deref().unwrap_or("?"),
            r.detail
        );
    }
    Ok(out)
}

pub fn write_embeddings(path: impl AsRef<Path>, sets: &[SectionEmbeddingSet]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in sets {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

mod tag_word {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::corpus::Tag;

    pub fn serialize<S: Serializer>(tag: &Tag, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(tag.word())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Tag, D::Error> {
        let word = String::deserialize(d)?;
        Tag::from_word(&word).ok_or_else(|| serde::de::Error::custom(format!("unknown tag {word:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table2() -> WordVectorTable {
        let mut t = WordVectorTable::new(2);
        t.insert("alpha", vec![1.0, 0.0]).unwrap();
        t.insert("beta", vec![0.0, 1.0]).unwrap();
        t
    }

    fn file_with(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_two_token_table() {
        let f = file_with("the 0.1 0.2 0.3\ncat 1 2 3\n");
        let t = load_word_vectors(f.path()).unwrap();
        assert_eq!((t.len(), t.dim()), (2, 3));
        assert_eq!(t.get("cat"), Some(&[1.0, 2.0, 3.0][..]));
    }

    #[test]
    fn short_vector_is_fatal_with_line() {
        let f = file_with("cat 1 2 3\nthe 0.1 0.2\n");
        match load_word_vectors(f.path()) {
            Err(Error::VectorLength { line, expected, found }) => {
                assert_eq!((line, expected, found), (2, 3, 2))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_fatal() {
        let f = file_with("");
        assert!(matches!(load_word_vectors(f.path()), Err(Error::Empty(_))));
    }

    #[test]
    fn duplicate_token_last_wins() {
        let f = file_with("cat 1 1\ncat 2 2\n");
        assert_eq!(load_word_vectors(f.path()).unwrap().get("cat"), Some(&[2.0, 2.0][..]));
    }

    #[test]
    fn save_load_round_trip() {
        let t = table2();
        let f = tempfile::NamedTempFile::new().unwrap();
        t.save(f.path()).unwrap();
        assert_eq!(load_word_vectors(f.path()).unwrap(), t);
    }

    #[test]
    fn single_token_is_identity() {
        let e = embed_section("Alpha", &table2());
        assert_eq!(e.values, vec![1.0, 0.0]);
        assert!(!e.all_oov);
    }

    #[test]
    fn two_tokens_average() {
        assert_eq!(embed_section("alpha, beta!", &table2()).values, vec![0.5, 0.5]);
    }

    #[test]
    fn all_oov_gives_flagged_zero() {
        let e = embed_section("gamma delta", &table2());
        assert_eq!(e.values, vec![0.0, 0.0]);
        assert!(e.all_oov);
        assert!(embed_section("", &table2()).all_oov);
    }

    fn set(items: Vec<(Tag, Vec<f64>, Vec<f64>)>) -> SectionEmbeddingSet {
        SectionEmbeddingSet {
            profile_id: "p".into(),
            encoder: "test".into(),
            items: items
                .into_iter()
                .map(|(tag, e, em_tag)| SectionItem { tag, e, em_tag })
                .collect(),
        }
    }

    #[test]
    fn ste_zero_when_section_equals_tag() {
        let s = set(vec![(Tag::Skills, vec![0.3, -2.0], vec![0.3, -2.0])]);
        assert_eq!(ste_aggregate(&s).unwrap().values, vec![0.0, 0.0]);
    }

    #[test]
    fn ste_two_sections_by_hand() {
        let s = set(vec![
            (Tag::Education, vec![2.0, 0.0], vec![1.0, 0.0]),
            (Tag::Skills, vec![0.0, 2.0], vec![0.0, 1.0]),
        ]);
        assert_eq!(ste_aggregate(&s).unwrap().values, vec![0.5, 0.5]);
    }

    #[test]
    fn ste_dimension_mismatch_is_fatal() {
        let s = set(vec![
            (Tag::Education, vec![2.0, 0.0], vec![1.0, 0.0]),
            (Tag::Skills, vec![0.0, 2.0, 1.0], vec![0.0, 1.0, 0.0]),
        ]);
        assert!(matches!(ste_aggregate(&s), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn all_oov_section_contributes_negative_tag() {
        let mut t = table2();
        t.insert("skills", vec![0.0, 4.0]).unwrap();
        let p = crate::corpus::clean_profile(&crate::corpus::RawProfile {
            id: "p".into(),
            label: "LLP".into(),
            name: "zzz".into(),
            location: "qqq".into(),
            summary: String::new(),
            sections: [
                ("education".to_string(), vec!["alpha".to_string()]),
                ("experience".to_string(), vec!["beta".to_string()]),
                ("skills".to_string(), vec!["unknown".to_string()]),
            ]
            .into(),
            numeric: Default::default(),
        })
        .unwrap();
        let s = embed_profile(&p, &t);
        // education, experience, skills, location, name
        assert_eq!(s.items.len(), 5);
        let f = ste_aggregate(&s).unwrap();
        assert_eq!(f.values, vec![(1.0 + 0.0) / 5.0, (1.0 - 4.0) / 5.0]);
    }

    fn interchange(lines: &[serde_json::Value]) -> tempfile::NamedTempFile {
        let body: String = lines.iter().map(|l| format!("{l}\n")).collect();
        file_with(&body)
    }

    #[test]
    fn ingest_valid_record() {
        let v: Vec<f64> = (0..768).map(|i| i as f64 * 1e-3).collect();
        let sections: Vec<_> = ["education", "experience", "skills"]
            .iter()
            .map(|t| serde_json::json!({"tag": t, "e": v, "em_tag": v}))
            .collect();
        let f = interchange(&[serde_json::json!({"profile_id": "a", "encoder": "roberta", "sections": sections})]);
        let got = ingest_external_embeddings(f.path()).unwrap();
        assert_eq!(got.sets.len(), 1);
        assert_eq!(got.sets[0].items.len(), 3);
        assert_eq!(got.sets[0].dim().unwrap(), 768);
    }

    #[test]
    fn ingest_rejects_mixed_dims_missing_tag_and_duplicates() {
        let ok = serde_json::json!({"profile_id": "a", "encoder": "x",
            "sections": [{"tag": "skills", "e": [1.0, 2.0], "em_tag": [0.0, 0.0]}]});
        let mixed = serde_json::json!({"profile_id": "b", "encoder": "x",
            "sections": [{"tag": "skills", "e": [1.0, 2.0], "em_tag": [0.0, 0.0]},
                         {"tag": "name", "e": [1.0], "em_tag": [0.0]}]});
        let no_tag = serde_json::json!({"profile_id": "c", "encoder": "x",
            "sections": [{"tag": "skills", "e": [1.0, 2.0]}]});
        let f = interchange(&[ok.clone(), mixed, no_tag, ok]);
        let got = ingest_external_embeddings(f.path()).unwrap();
        assert_eq!(got.sets.len(), 1);
        let rejected: Vec<_> = got.rejections.iter().map(|r| r.profile_id.clone().unwrap()).collect();
        assert_eq!(rejected, ["b", "c", "a"]);
        assert!(got.rejections[1].detail.contains("missing tag vector"));
        assert!(got.rejections[2].detail.contains("duplicate"));
    }

    #[test]
    fn interchange_round_trip() {
        let s = set(vec![(Tag::Name, vec![0.1, 0.2], vec![0.3, 0.4])]);
        let f = tempfile::NamedTempFile::new().unwrap();
        write_embeddings(f.path(), std::slice::from_ref(&s)).unwrap();
        assert_eq!(ingest_external_embeddings(f.path()).unwrap().sets, vec![s]);
    }

    fn arb_set() -> impl Strategy<Value = SectionEmbeddingSet> {
        (1usize..6, 1usize..=7).prop_flat_map(|(d, n)| {
            proptest::collection::vec(
                (
                    proptest::collection::vec(-10.0f64..10.0, d),
                    proptest::collection::vec(-10.0f64..10.0, d),
                ),
                n,
            )
            .prop_map(|vs| set(vs.into_iter().zip(Tag::ALL).map(|((e, m), t)| (t, e, m)).collect()))
        })
    }

    proptest! {
        #[test]
        fn ste_permutation_invariant(s in arb_set(), rot in 0usize..7) {
            let mut shuffled = s.clone();
            let k = rot % shuffled.items.len();
            shuffled.items.rotate_left(k);
            shuffled.items.reverse();
            let a = ste_aggregate(&s).unwrap().values;
            let b = ste_aggregate(&shuffled).unwrap().values;
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }

        #[test]
        fn ste_linear(s in arb_set(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let other = {
                let mut o = s.clone();
                for item in &mut o.items {
                    item.e.iter_mut().for_each(|x| *x = x.sin() * 5.0);
                    item.em_tag.iter_mut().for_each(|x| *x = x.cos());
                }
                o
            };
            let mut combo = s.clone();
            for (c, o) in combo.items.iter_mut().zip(&other.items) {
                for (x, y) in c.e.iter_mut().zip(&o.e) { *x = a * *x + b * y; }
                for (x, y) in c.em_tag.iter_mut().zip(&o.em_tag) { *x = a * *x + b * y; }
            }
            let fs = ste_aggregate(&s).unwrap().values;
            let fo = ste_aggregate(&other).unwrap().values;
            let fc = ste_aggregate(&combo).unwrap().values;
            for i in 0..fc.len() {
                let want = a * fs[i] + b * fo[i];
                prop_assert!((fc[i] - want).abs() <= 1e-9, "{} vs {}", fc[i], want);
            }
        }

        #[test]
        fn embed_ignores_order_and_spacing(words in proptest::collection::vec(
            prop_oneof![Just("alpha"), Just("beta"), Just("gamma")], 0..8)) {
            let t = table2();
            let joined = words.join(" ");
            let mut rev = words.clone();
            rev.reverse();
            let spaced = rev.join("   \t ");
            let a = embed_section(&joined, &t);
            let b = embed_section(&spaced, &t);
            prop_assert_eq!(a.all_oov, b.all_oov);
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() <= 1e-15);
            }
        }
    }
}
