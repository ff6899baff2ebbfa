//! Posts, labeled collections of posts, and the data-level operations the
//! pipeline runs before any model sees the text: ingestion, splitting,
//! class counting and up-sampling.

mod synthetic;

pub use synthetic::{generate_synthetic, NoiseCounts, SyntheticCorpus};

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: cannot read input: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("line {line}: duplicate post_id {post_id:?}")]
    Duplicate { line: u64, post_id: String },
    #[error("post {post_id:?} has no label")]
    Unlabeled { post_id: String },
    #[error("cannot balance: class {class} has no members")]
    Balancing { class: Label },
    #[error("invalid argument: {0}")]
    Argument(String),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// Binary relevance label. Serialized as the integers `1` and `0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Irrelevant,
    Relevant,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Irrelevant => 0,
            Label::Relevant => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Irrelevant),
            1 => Some(Label::Relevant),
            _ => None,
        }
    }

    pub fn as_f32(self) -> f32 {
        self.as_u8() as f32
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Irrelevant => write!(f, "irrelevant(0)"),
            Label::Relevant => write!(f, "relevant(1)"),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        Label::from_u8(v)
            .ok_or_else(|| serde::de::Error::custom(format!("label must be 0 or 1, got {v}")))
    }
}

/// One social-media item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocialPost {
    pub post_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author_handle: Option<String>,
    /// Carried through the pipeline but never used for features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

impl SocialPost {
    pub fn new(post_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            post_id: post_id.into(),
            text: text.into(),
            created_at: None,
            author_handle: None,
            image_ref: None,
            label: None,
        }
    }

    pub fn labeled(post_id: impl Into<String>, text: impl Into<String>, label: Label) -> Self {
        Self {
            label: Some(label),
            ..Self::new(post_id, text)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Train => "train",
            Role::Validation => "validation",
            Role::Test => "test",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// Guesses the format from a file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub n_positive: usize,
    pub n_negative: usize,
}

impl ClassCounts {
    pub fn new(n_positive: usize, n_negative: usize) -> Self {
        Self {
            n_positive,
            n_negative,
        }
    }

    pub fn total(&self) -> usize {
        self.n_positive + self.n_negative
    }
}

/// An ordered collection of posts with a declared role.
///
/// Construction validates that post ids are non-empty and unique, and that
/// train and validation corpora are fully labeled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    posts: Vec<SocialPost>,
    role: Role,
}

impl Corpus {
    pub fn new(role: Role, posts: Vec<SocialPost>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(posts.len());
        for (i, post) in posts.iter().enumerate() {
            if post.post_id.is_empty() {
                return Err(CorpusError::Malformed {
                    line: i as u64 + 1,
                    reason: "empty post_id".into(),
                });
            }
            if !seen.insert(post.post_id.as_str()) {
                return Err(CorpusError::Duplicate {
                    line: i as u64 + 1,
                    post_id: post.post_id.clone(),
                });
            }
        }
        let corpus = Self { posts, role };
        if matches!(role, Role::Train | Role::Validation) {
            corpus.require_labeled()?;
        }
        Ok(corpus)
    }

    pub fn posts(&self) -> &[SocialPost] {
        &self.posts
    }

    pub fn into_posts(self) -> Vec<SocialPost> {
        self.posts
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn all_labeled(&self) -> bool {
        self.posts.iter().all(|p| p.label.is_some())
    }

    pub fn texts(&self) -> Vec<&str> {
        self.posts.iter().map(|p| p.text.as_str()).collect()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.posts.iter().map(|p| p.post_id.as_str()).collect()
    }

    /// Labels in post order, failing on the first unlabeled post.
    pub fn labels(&self) -> Result<Vec<Label>> {
        self.posts
            .iter()
            .map(|p| {
                p.label.ok_or_else(|| CorpusError::Unlabeled {
                    post_id: p.post_id.clone(),
                })
            })
            .collect()
    }

    /// Gold labels keyed by post id.
    pub fn gold(&self) -> Result<HashMap<String, Label>> {
        self.posts
            .iter()
            .map(|p| {
                p.label
                    .map(|l| (p.post_id.clone(), l))
                    .ok_or_else(|| CorpusError::Unlabeled {
                        post_id: p.post_id.clone(),
                    })
            })
            .collect()
    }

    /// Same posts under a different role.
    pub fn with_role(self, role: Role) -> Result<Self> {
        Corpus::new(role, self.posts)
    }

    /// Replaces every post's text, keeping ids, metadata and labels.
    pub fn map_texts<F: FnMut(&SocialPost) -> String>(&self, mut f: F) -> Corpus {
        let posts = self
            .posts
            .iter()
            .map(|p| SocialPost {
                text: f(p),
                ..p.clone()
            })
            .collect();
        Corpus {
            posts,
            role: self.role,
        }
    }

    fn require_labeled(&self) -> Result<()> {
        match self.posts.iter().find(|p| p.label.is_none()) {
            Some(p) => Err(CorpusError::Unlabeled {
                post_id: p.post_id.clone(),
            }),
            None => Ok(()),
        }
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let io_err = |source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut out = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
        self.write_jsonl_to(&mut out).map_err(io_err)?;
        out.flush().map_err(io_err)
    }

    pub fn write_jsonl_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for post in &self.posts {
            serde_json::to_writer(&mut w, post)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    post_id: Option<String>,
    text: Option<String>,
    #[serde(default)]
    created_at: Option<String>,
    #[serde(default)]
    author_handle: Option<String>,
    #[serde(default)]
    image_ref: Option<String>,
    #[serde(default)]
    label: Option<serde_json::Value>,
}

fn parse_label(value: &serde_json::Value) -> std::result::Result<Option<Label>, String> {
    use serde_json::Value;
    let v = match value {
        Value::Null => return Ok(None),
        Value::Number(n) => n.as_u64(),
        Value::String(s) if s.trim().is_empty() => return Ok(None),
        Value::String(s) => s.trim().parse::<u64>().ok(),
        Value::Bool(b) => Some(*b as u64),
        _ => None,
    };
    v.and_then(|v| u8::try_from(v).ok())
        .and_then(Label::from_u8)
        .map(Some)
        .ok_or_else(|| format!("label must be 0 or 1, got {value}"))
}

fn non_empty(s: Option<String>) -> Option<String> {
    s.filter(|s| !s.is_empty())
}

impl RawRecord {
    fn into_post(self, line: u64) -> Result<SocialPost> {
        let malformed = |reason: &str| CorpusError::Malformed {
            line,
            reason: reason.to_string(),
        };
        let post_id = non_empty(self.post_id).ok_or_else(|| malformed("missing post_id"))?;
        let text = self.text.ok_or_else(|| malformed("missing text"))?;
        let label = match &self.label {
            Some(v) => parse_label(v).map_err(|r| malformed(&r))?,
            None => None,
        };
        Ok(SocialPost {
            post_id,
            text,
            created_at: non_empty(self.created_at),
            author_handle: non_empty(self.author_handle),
            image_ref: non_empty(self.image_ref),
            label,
        })
    }
}

/// Reads a corpus from a JSONL or CSV file, preserving file order.
///
/// Line numbers in errors are 1-based physical lines of the file (the CSV
/// header is line 1).
pub fn ingest(path: &Path, format: Format, role: Role) -> Result<Corpus> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let records = match format {
        Format::Jsonl => read_jsonl(BufReader::new(file), path)?,
        Format::Csv => read_csv(file)?,
    };

    let mut seen: HashMap<String, u64> = HashMap::with_capacity(records.len());
    let mut posts = Vec::with_capacity(records.len());
    for (line, post) in records {
        if seen.insert(post.post_id.clone(), line).is_some() {
            return Err(CorpusError::Duplicate {
                line,
                post_id: post.post_id,
            });
        }
        posts.push(post);
    }
    Corpus::new(role, posts)
}

fn read_jsonl<R: BufRead>(reader: R, path: &Path) -> Result<Vec<(u64, SocialPost)>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                line: line_no,
                reason: e.to_string(),
            })?;
        out.push((line_no, raw.into_post(line_no)?));
    }
    Ok(out)
}

fn read_csv<R: std::io::Read>(reader: R) -> Result<Vec<(u64, SocialPost)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::Malformed {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    for required in ["post_id", "text"] {
        if !headers.iter().any(|h| h == required) {
            return Err(CorpusError::Malformed {
                line: 1,
                reason: format!("header is missing column {required:?}"),
            });
        }
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CorpusError::Malformed {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .and_then(|i| rec.get(i))
                .map(str::to_string)
        };
        let raw = RawRecord {
            post_id: field("post_id"),
            text: field("text"),
            created_at: field("created_at"),
            author_handle: field("author_handle"),
            image_ref: field("image_ref"),
            label: field("label").map(serde_json::Value::String),
        };
        out.push((line, raw.into_post(line)?));
    }
    Ok(out)
}

pub fn count_classes(corpus: &Corpus) -> Result<ClassCounts> {
    let mut counts = ClassCounts::default();
    for label in corpus.labels()? {
        match label {
            Label::Relevant => counts.n_positive += 1,
            Label::Irrelevant => counts.n_negative += 1,
        }
    }
    Ok(counts)
}

/// Splits a labeled corpus into `(train, validation)`.
///
/// Uniform sampling without replacement by default; with `stratified` the
/// validation quota is allocated per class proportionally (largest
/// remainder). Each output keeps the input's relative order.
pub fn split(
    corpus: &Corpus,
    validation_size: usize,
    seed: u64,
    stratified: bool,
) -> Result<(Corpus, Corpus)> {
    if validation_size >= corpus.len() {
        return Err(CorpusError::Argument(format!(
            "validation_size {validation_size} must be smaller than the corpus ({} posts)",
            corpus.len()
        )));
    }
    let labels = corpus.labels()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut in_validation = vec![false; corpus.len()];
    if stratified {
        let pos: Vec<usize> = (0..labels.len())
            .filter(|&i| labels[i] == Label::Relevant)
            .collect();
        let neg: Vec<usize> = (0..labels.len())
            .filter(|&i| labels[i] == Label::Irrelevant)
            .collect();
        let exact_pos = validation_size as f64 * pos.len() as f64 / corpus.len() as f64;
        let mut take_pos = exact_pos.floor() as usize;
        let mut take_neg = validation_size - take_pos;
        if take_neg > neg.len() {
            take_neg = neg.len();
            take_pos = validation_size - take_neg;
        } else if exact_pos.fract() >= 0.5 && take_neg > 0 && take_pos < pos.len() {
            take_pos += 1;
            take_neg -= 1;
        }
        for (group, take) in [(pos, take_pos), (neg, take_neg)] {
            for &i in group.choose_multiple(&mut rng, take) {
                in_validation[i] = true;
            }
        }
    } else {
        let mut idx: Vec<usize> = (0..corpus.len()).collect();
        idx.shuffle(&mut rng);
        for &i in &idx[..validation_size] {
            in_validation[i] = true;
        }
    }

    let (mut train, mut validation) = (Vec::new(), Vec::new());
    for (post, is_val) in corpus.posts.iter().zip(in_validation) {
        if is_val {
            validation.push(post.clone());
        } else {
            train.push(post.clone());
        }
    }
    Ok((
        Corpus::new(Role::Train, train)?,
        Corpus::new(Role::Validation, validation)?,
    ))
}

/// Balances classes by duplicating minority posts, sampled with replacement,
/// until both classes reach the majority count.
///
/// Originals come first in their input order, then the duplicates in sampling
/// order. The k-th copy of post `x` gets id `x#dup<k>`.
pub fn upsample(corpus: &Corpus, seed: u64) -> Result<Corpus> {
    let labels = corpus.labels()?;
    let counts = count_classes(corpus)?;
    if counts.n_positive == 0 {
        return Err(CorpusError::Balancing {
            class: Label::Relevant,
        });
    }
    if counts.n_negative == 0 {
        return Err(CorpusError::Balancing {
            class: Label::Irrelevant,
        });
    }
    if counts.n_positive == counts.n_negative {
        return Ok(corpus.clone());
    }
    let (minority, deficit) = if counts.n_positive < counts.n_negative {
        (Label::Relevant, counts.n_negative - counts.n_positive)
    } else {
        (Label::Irrelevant, counts.n_positive - counts.n_negative)
    };
    let pool: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i] == minority)
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut copies: HashMap<usize, usize> = HashMap::new();
    let mut posts = corpus.posts.clone();
    posts.reserve(deficit);
    for _ in 0..deficit {
        let src = pool[rng.gen_range(0..pool.len())];
        let k = copies.entry(src).or_insert(0);
        *k += 1;
        let original = &corpus.posts[src];
        posts.push(SocialPost {
            post_id: format!("{}#dup{}", original.post_id, k),
            ..original.clone()
        });
    }
    Corpus::new(corpus.role, posts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(labels: &[u8]) -> Corpus {
        let posts = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| SocialPost::labeled(format!("p{i}"), format!("text {i}"), Label::from_u8(l).unwrap()))
            .collect();
        Corpus::new(Role::Train, posts).unwrap()
    }

    fn write_tmp(contents: &str, suffix: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn ingest_jsonl_keeps_file_order() {
        let f = write_tmp(
            "{\"post_id\":\"b\",\"text\":\"second\",\"label\":1}\n\
             {\"post_id\":\"a\",\"text\":\"first\",\"author_handle\":\"@x\",\"label\":0}\n\
             {\"post_id\":\"c\",\"text\":\"third\",\"label\":1,\"extra\":{\"nested\":true}}\n",
            ".jsonl",
        );
        let c = ingest(f.path(), Format::Jsonl, Role::Train).unwrap();
        assert_eq!(c.ids(), vec!["b", "a", "c"]);
        assert_eq!(c.posts()[1].author_handle.as_deref(), Some("@x"));
        assert_eq!(c.posts()[0].created_at, None);
    }

    #[test]
    fn ingest_reports_duplicate_on_second_occurrence() {
        let f = write_tmp(
            "{\"post_id\":\"1\",\"text\":\"a\"}\n\
             {\"post_id\":\"42\",\"text\":\"b\"}\n\
             {\"post_id\":\"3\",\"text\":\"c\"}\n\
             {\"post_id\":\"4\",\"text\":\"d\"}\n\
             {\"post_id\":\"42\",\"text\":\"e\"}\n",
            ".jsonl",
        );
        match ingest(f.path(), Format::Jsonl, Role::Test) {
            Err(CorpusError::Duplicate { line, post_id }) => {
                assert_eq!(line, 5);
                assert_eq!(post_id, "42");
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn ingest_malformed_names_line() {
        let f = write_tmp("{\"post_id\":\"1\",\"text\":\"a\"}\n{\"text\":\"no id\"}\n", ".jsonl");
        let err = ingest(f.path(), Format::Jsonl, Role::Test).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("line 2"));

        let f = write_tmp("{\"post_id\":\"1\",\"text\":\"a\",\"label\":3}\n", ".jsonl");
        let err = ingest(f.path(), Format::Jsonl, Role::Test).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 1, .. }));
    }

    #[test]
    fn ingest_csv_and_count() {
        let f = write_tmp("post_id,text,label\n1,brown water again,1\n2,great match today,0\n", ".csv");
        let c = ingest(f.path(), Format::Csv, Role::Train).unwrap();
        assert_eq!(count_classes(&c).unwrap(), ClassCounts::new(1, 1));
        assert_eq!(c.posts()[0].image_ref, None);
    }

    #[test]
    fn ingest_csv_missing_optional_fields_are_absent() {
        let f = write_tmp("post_id,text,author_handle,label\n1,\"hi, there\",,\n", ".csv");
        let c = ingest(f.path(), Format::Csv, Role::Test).unwrap();
        assert_eq!(c.posts()[0].text, "hi, there");
        assert_eq!(c.posts()[0].author_handle, None);
        assert_eq!(c.posts()[0].label, None);
        assert!(!c.all_labeled());
    }

    #[test]
    fn train_role_requires_labels() {
        let f = write_tmp("{\"post_id\":\"1\",\"text\":\"a\"}\n", ".jsonl");
        let err = ingest(f.path(), Format::Jsonl, Role::Train).unwrap_err();
        assert!(matches!(err, CorpusError::Unlabeled { .. }));
    }

    #[test]
    fn count_examples() {
        assert_eq!(count_classes(&labeled(&[1, 1, 0])).unwrap(), ClassCounts::new(2, 1));
        assert_eq!(count_classes(&labeled(&[])).unwrap(), ClassCounts::new(0, 0));
        let balanced: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        assert_eq!(count_classes(&labeled(&balanced)).unwrap(), ClassCounts::new(10, 10));
    }

    #[test]
    fn count_unlabeled_names_post() {
        let c = Corpus::new(
            Role::Test,
            vec![SocialPost::labeled("a", "x", Label::Relevant), SocialPost::new("b", "y")],
        )
        .unwrap();
        match count_classes(&c) {
            Err(CorpusError::Unlabeled { post_id }) => assert_eq!(post_id, "b"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn split_is_deterministic_partition() {
        let c = labeled(&[1, 0, 1, 0, 0, 0, 1, 0, 0, 1]);
        let (t1, v1) = split(&c, 3, 7, false).unwrap();
        let (t2, v2) = split(&c, 3, 7, false).unwrap();
        assert_eq!((&t1, &v1), (&t2, &v2));
        assert_eq!(v1.len(), 3);
        assert_eq!(t1.len(), 7);
        let mut all: Vec<&str> = t1.ids().into_iter().chain(v1.ids()).collect();
        all.sort();
        let mut orig = c.ids();
        orig.sort();
        assert_eq!(all, orig);
        assert_eq!(v1.role(), Role::Validation);
    }

    #[test]
    fn split_boundary_is_error() {
        let c = labeled(&[1, 0, 1, 0, 0, 0, 1, 0, 0, 1]);
        assert!(matches!(split(&c, 10, 7, false), Err(CorpusError::Argument(_))));
    }

    #[test]
    fn split_validation_of_1810() {
        let labels: Vec<u8> = (0..10_000).map(|i| (i % 3 == 0) as u8).collect();
        let c = labeled(&labels);
        let (t, v) = split(&c, 1810, 3, false).unwrap();
        assert_eq!(v.len(), 1810);
        assert_eq!(t.len(), 8190);
    }

    #[test]
    fn stratified_split_keeps_ratio() {
        let labels: Vec<u8> = (0..100).map(|i| (i < 30) as u8).collect();
        let c = labeled(&labels);
        let (_, v) = split(&c, 20, 11, true).unwrap();
        assert_eq!(count_classes(&v).unwrap(), ClassCounts::new(6, 14));
    }

    #[test]
    fn upsample_examples() {
        let mut labels = vec![0u8; 30];
        labels.extend([1u8; 10]);
        let c = labeled(&labels);
        let up = upsample(&c, 5).unwrap();
        assert_eq!(count_classes(&up).unwrap(), ClassCounts::new(30, 30));
        assert_eq!(up.len(), 60);
        assert_eq!(&up.posts()[..40], c.posts());
        assert!(up.posts()[40..].iter().all(|p| p.post_id.contains("#dup")));

        let balanced = labeled(&[1, 0, 1, 0, 1, 0, 1, 0, 1, 0]);
        assert_eq!(upsample(&balanced, 5).unwrap(), balanced);

        let one_class = labeled(&[1, 1, 1, 1]);
        assert!(matches!(
            upsample(&one_class, 5),
            Err(CorpusError::Balancing { class: Label::Irrelevant })
        ));
    }

    #[test]
    fn upsample_dup_ids_count_per_original() {
        let c = labeled(&[1, 0, 0, 0, 0, 0]);
        let up = upsample(&c, 1).unwrap();
        let dups: Vec<&str> = up.posts()[6..].iter().map(|p| p.post_id.as_str()).collect();
        assert_eq!(dups, vec!["p0#dup1", "p0#dup2", "p0#dup3", "p0#dup4"]);
    }
}
