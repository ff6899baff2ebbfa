//! Text cleaning applied to every post before a backend sees it.
//!
//! The rules run in a fixed order: URLs, account handles, emoji code points,
//! punctuation, whitespace. Every removed item is replaced by a space and
//! whitespace is collapsed at the end, so removal never glues two words
//! together. The whole pass is repeated until the text stops changing, which
//! makes [`Cleaner::clean`] idempotent even when a removal exposes a new match
//! (`_www.x.org` only becomes a URL once `_` is stripped).

use std::ops::AddAssign;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;

pub const DEFAULT_KEEP_PUNCT: &str = ".,!?'-";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanConfig {
    pub lowercase: bool,
    pub keep_punct: String,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self {
            lowercase: false,
            keep_punct: DEFAULT_KEEP_PUNCT.to_string(),
        }
    }
}

/// Per-category removal counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removed {
    pub urls: usize,
    pub handles: usize,
    pub emojis: usize,
    pub punctuation_runs: usize,
}

impl Removed {
    pub fn is_zero(&self) -> bool {
        *self == Removed::default()
    }
}

impl AddAssign for Removed {
    fn add_assign(&mut self, rhs: Self) {
        self.urls += rhs.urls;
        self.handles += rhs.handles;
        self.emojis += rhs.emojis;
        self.punctuation_runs += rhs.punctuation_runs;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanText {
    pub text: String,
    pub removed: Removed,
}

impl CleanText {
    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }
}

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)(?:https?://|\bwww\.)\S+").unwrap())
}

fn handle_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"@\w+").unwrap())
}

/// Pictographic code points: Emoticons, Misc Symbols & Pictographs,
/// Transport & Map, Supplemental Symbols & Pictographs, Dingbats.
pub fn is_pictograph(c: char) -> bool {
    matches!(c as u32,
        0x1F600..=0x1F64F
        | 0x1F300..=0x1F5FF
        | 0x1F680..=0x1F6FF
        | 0x1F900..=0x1F9FF
        | 0x2700..=0x27BF)
}

/// Variation selectors and the zero-width joiner: removed with emojis but
/// not counted.
fn is_emoji_glue(c: char) -> bool {
    matches!(c as u32, 0xFE00..=0xFE0F | 0x200D)
}

/// ASCII punctuation plus the General Punctuation block and a few common
/// non-ASCII marks.
pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c as u32, 0x2010..=0x2027 | 0x2030..=0x205E)
        || matches!(c, '¡' | '¿' | '«' | '»' | '·' | '§' | '¶')
}

#[derive(Debug, Clone)]
pub struct Cleaner {
    config: CleanConfig,
}

impl Default for Cleaner {
    fn default() -> Self {
        Self::new(CleanConfig::default())
    }
}

impl Cleaner {
    pub fn new(config: CleanConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &CleanConfig {
        &self.config
    }

    pub fn clean(&self, raw: &str) -> CleanText {
        let mut removed = Removed::default();
        let mut text = raw.to_string();
        loop {
            let (next, pass) = self.pass(&text);
            removed += pass;
            if next == text {
                break;
            }
            text = next;
        }
        CleanText { text, removed }
    }

    fn pass(&self, input: &str) -> (String, Removed) {
        let mut removed = Removed {
            urls: url_re().find_iter(input).count(),
            ..Removed::default()
        };
        let text = url_re().replace_all(input, " ");

        removed.handles = handle_re().find_iter(&text).count();
        let text = handle_re().replace_all(&text, " ");

        let mut no_emoji = String::with_capacity(text.len());
        for c in text.chars() {
            if is_pictograph(c) {
                removed.emojis += 1;
                no_emoji.push(' ');
            } else if is_emoji_glue(c) {
                no_emoji.push(' ');
            } else {
                no_emoji.push(c);
            }
        }

        let (text, runs) = self.punctuation(&no_emoji);
        removed.punctuation_runs = runs;

        let mut text = text.split_whitespace().collect::<Vec<_>>().join(" ");
        if self.config.lowercase {
            text = text.to_lowercase();
        }
        (text, removed)
    }

    /// Strips non-kept marks, then collapses runs of an identical kept mark.
    /// Returns the number of maximal same-character runs that changed.
    fn punctuation(&self, text: &str) -> (String, usize) {
        let keep = |c: char| self.config.keep_punct.contains(c);
        let mut changed_runs = 0;

        let mut stripped = String::with_capacity(text.len());
        let mut prev: Option<char> = None;
        for c in text.chars() {
            if is_punctuation(c) && !keep(c) {
                if prev != Some(c) {
                    changed_runs += 1;
                }
                prev = Some(c);
                continue;
            }
            prev = Some(c);
            stripped.push(c);
        }

        let mut out = String::with_capacity(stripped.len());
        let mut chars = stripped.chars().peekable();
        while let Some(c) = chars.next() {
            out.push(c);
            if is_punctuation(c) && chars.peek() == Some(&c) {
                changed_runs += 1;
                while chars.peek() == Some(&c) {
                    chars.next();
                }
            }
        }
        (out, changed_runs)
    }

    /// Cleans every post; posts whose cleaned text is empty are kept and
    /// listed in the report.
    pub fn clean_corpus(&self, corpus: &Corpus) -> CleanedCorpus {
        let mut totals = Removed::default();
        let mut empty = Vec::new();
        let cleaned = corpus.map_texts(|post| {
            let ct = self.clean(&post.text);
            totals += ct.removed;
            if ct.is_empty() {
                empty.push(post.post_id.clone());
            }
            ct.text
        });
        CleanedCorpus {
            corpus: cleaned,
            report: CleanReport {
                empty_post_ids: empty,
                removed: totals,
            },
        }
    }
}

pub fn clean(raw: &str) -> CleanText {
    Cleaner::default().clean(raw)
}

pub fn clean_corpus(corpus: &Corpus) -> CleanedCorpus {
    Cleaner::default().clean_corpus(corpus)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub empty_post_ids: Vec<String>,
    pub removed: Removed,
}

#[derive(Debug, Clone)]
pub struct CleanedCorpus {
    pub corpus: Corpus,
    pub report: CleanReport,
}
