//! Seeded synthetic corpus of water-quality posts.
//!
//! Relevant posts talk about the color, smell, taste of water or illnesses it
//! caused; irrelevant posts are drawn from an unrelated vocabulary. Both
//! classes get the same kinds of noise (URLs, handles, emojis, hashtags,
//! punctuation runs, gibberish tokens) and the generator records exactly
//! what it injected so the cleaner's counts can be checked against it.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, Label, Result, Role, SocialPost};

const WATER_SUBJECTS: &[&str] = &[
    "the tap water",
    "our drinking water",
    "the water from the faucet",
    "water in my building",
    "the city water supply",
    "the well water",
    "water at the school fountain",
];

const WATER_ISSUES: &[&str] = &[
    // color
    "looks brown",
    "is yellow",
    "came out murky",
    "has a rusty color",
    "turned cloudy",
    "looks greenish",
    // smell
    "smells like sewage",
    "smells of chlorine",
    "has a rotten egg smell",
    "stinks of sulfur",
    // taste
    "tastes metallic",
    "tastes bitter",
    "has a bad taste",
    "tastes salty",
    // illness
    "gave my kids diarrhea",
    "made us sick",
    "caused stomach cramps",
    "left everyone with rashes",
];

const OTHER_SUBJECTS: &[&str] = &[
    "the concert",
    "my new phone",
    "the football game",
    "this pizza",
    "the traffic downtown",
    "our team",
    "the movie",
    "my morning run",
];

const OTHER_PREDICATES: &[&str] = &[
    "was amazing",
    "is so slow",
    "was sold out",
    "won again",
    "made me laugh",
    "is overpriced",
    "runs late every day",
    "deserves an award",
    "was boring",
];

const TAILS: &[&str] = &[
    "",
    "again today",
    "since monday",
    "this morning",
    "and nobody cares",
    "honestly",
    "right now",
];

const EMOJIS: &[char] = &[
    '\u{1F4A7}', // droplet
    '\u{1F922}', // nauseated face
    '\u{1F621}', // pouting face
    '\u{1F602}', // tears of joy
    '\u{1F697}', // automobile
    '\u{1F355}', // pizza
    '\u{2728}',  // sparkles
    '\u{1F3B5}', // musical note
];

const PUNCT_RUNS: &[&str] = &["!!", "!!!", "??", "...", "?????", ",,"];

/// What the generator injected into one post (or a whole corpus).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseCounts {
    pub urls: usize,
    pub handles: usize,
    pub emojis: usize,
    pub punctuation_runs: usize,
}

impl std::ops::AddAssign for NoiseCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.urls += rhs.urls;
        self.handles += rhs.handles;
        self.emojis += rhs.emojis;
        self.punctuation_runs += rhs.punctuation_runs;
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    /// Injected noise per post, in corpus order.
    pub ledger: Vec<NoiseCounts>,
}

impl SyntheticCorpus {
    pub fn total_noise(&self) -> NoiseCounts {
        let mut total = NoiseCounts::default();
        for n in &self.ledger {
            total += *n;
        }
        total
    }
}

fn alnum(rng: &mut ChaCha8Rng, len: usize) -> String {
    const CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";
    (0..len)
        .map(|_| CHARS[rng.gen_range(0..CHARS.len())] as char)
        .collect()
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &[&'a str]) -> &'a str {
    items[rng.gen_range(0..items.len())]
}

fn base_sentence(rng: &mut ChaCha8Rng, label: Label) -> Vec<String> {
    let (subject, middle) = match label {
        Label::Relevant => (pick(rng, WATER_SUBJECTS), pick(rng, WATER_ISSUES)),
        Label::Irrelevant => (pick(rng, OTHER_SUBJECTS), pick(rng, OTHER_PREDICATES)),
    };
    let tail = pick(rng, TAILS);
    let mut words: Vec<String> = [subject, middle, tail]
        .iter()
        .flat_map(|s| s.split_whitespace())
        .map(str::to_string)
        .collect();
    if rng.gen_bool(0.5) {
        if let Some(first) = words.first_mut() {
            let mut chars = first.chars();
            if let Some(c) = chars.next() {
                *first = c.to_uppercase().collect::<String>() + chars.as_str();
            }
        }
    }
    words
}

fn noisy_post(rng: &mut ChaCha8Rng, label: Label) -> (String, NoiseCounts) {
    let mut noise = NoiseCounts::default();
    let mut words = base_sentence(rng, label);

    if rng.gen_bool(0.25) {
        let i = rng.gen_range(0..words.len());
        words[i].insert(0, '#');
        noise.punctuation_runs += 1;
    }
    if rng.gen_bool(0.35) {
        let i = rng.gen_range(0..words.len());
        words[i].push_str(pick(rng, PUNCT_RUNS));
        noise.punctuation_runs += 1;
    }
    if rng.gen_bool(0.2) {
        let i = rng.gen_range(0..words.len());
        words[i].push(*EMOJIS.choose(rng).unwrap());
        noise.emojis += 1;
    }

    let mut extra: Vec<String> = Vec::new();
    for _ in 0..rng.gen_range(0..=2) {
        extra.push(if rng.gen_bool(0.7) {
            format!("https://t.co/{}", alnum(rng, 8))
        } else {
            format!("www.{}.com/{}", alnum(rng, 5), alnum(rng, 3))
        });
        noise.urls += 1;
    }
    for _ in 0..rng.gen_range(0..=2) {
        extra.push(format!("@{}_{}", alnum(rng, 5), rng.gen_range(0..100)));
        noise.handles += 1;
    }
    for _ in 0..rng.gen_range(0..=2) {
        let n = rng.gen_range(1..=2);
        extra.push((0..n).map(|_| *EMOJIS.choose(rng).unwrap()).collect());
        noise.emojis += n;
    }
    for _ in 0..rng.gen_range(0..=1) {
        let len = rng.gen_range(3..=7);
        extra.push(alnum(rng, len));
    }
    for token in extra {
        let at = rng.gen_range(0..=words.len());
        words.insert(at, token);
    }
    (words.join(" "), noise)
}

/// Generates `n_posts` posts of which `round(n_posts * positive_fraction)`
/// (clamped so both classes are non-empty) are relevant.
pub fn generate_synthetic(
    n_posts: usize,
    positive_fraction: f64,
    seed: u64,
) -> Result<SyntheticCorpus> {
    if n_posts < 2 {
        return Err(CorpusError::Argument(format!(
            "n_posts must be at least 2, got {n_posts}"
        )));
    }
    if !(positive_fraction > 0.0 && positive_fraction < 1.0) {
        return Err(CorpusError::Argument(format!(
            "positive_fraction must lie in (0, 1), got {positive_fraction}"
        )));
    }
    let n_pos = ((n_posts as f64 * positive_fraction).round() as usize).clamp(1, n_posts - 1);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<Label> = (0..n_posts)
        .map(|i| {
            if i < n_pos {
                Label::Relevant
            } else {
                Label::Irrelevant
            }
        })
        .collect();
    labels.shuffle(&mut rng);

    let mut posts = Vec::with_capacity(n_posts);
    let mut ledger = Vec::with_capacity(n_posts);
    for (i, label) in labels.into_iter().enumerate() {
        let (text, noise) = noisy_post(&mut rng, label);
        let day = rng.gen_range(1..=28);
        let hour = rng.gen_range(0..24);
        let minute = rng.gen_range(0..60);
        posts.push(SocialPost {
            post_id: format!("syn{i:06}"),
            text,
            created_at: Some(format!("2021-10-{day:02}T{hour:02}:{minute:02}:00Z")),
            author_handle: Some(format!("user{}", rng.gen_range(0..500))),
            image_ref: None,
            label: Some(label),
        });
        ledger.push(noise);
    }
    Ok(SyntheticCorpus {
        corpus: Corpus::new(Role::Train, posts)?,
        ledger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{count_classes, ClassCounts};
    use crate::textprep::Cleaner;

    #[test]
    fn class_counts_follow_fraction() {
        let s = generate_synthetic(100, 0.3, 1).unwrap();
        assert_eq!(count_classes(&s.corpus).unwrap(), ClassCounts::new(30, 70));
    }

    #[test]
    fn byte_identical_for_same_seed() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        generate_synthetic(100, 0.3, 1).unwrap().corpus.write_jsonl_to(&mut a).unwrap();
        generate_synthetic(100, 0.3, 1).unwrap().corpus.write_jsonl_to(&mut b).unwrap();
        assert_eq!(a, b);
        let mut c = Vec::new();
        generate_synthetic(100, 0.3, 2).unwrap().corpus.write_jsonl_to(&mut c).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn argument_errors() {
        assert!(matches!(generate_synthetic(1, 0.3, 1), Err(CorpusError::Argument(_))));
        assert!(matches!(generate_synthetic(10, 0.0, 1), Err(CorpusError::Argument(_))));
        assert!(matches!(generate_synthetic(10, 1.0, 1), Err(CorpusError::Argument(_))));
        assert!(matches!(generate_synthetic(10, f64::NAN, 1), Err(CorpusError::Argument(_))));
    }

    #[test]
    fn per_post_noise_matches_cleaner() {
        let s = generate_synthetic(300, 0.4, 9).unwrap();
        let cleaner = Cleaner::default();
        for (post, noise) in s.corpus.posts().iter().zip(&s.ledger) {
            let r = cleaner.clean(&post.text).removed;
            assert_eq!(
                (r.urls, r.handles, r.emojis, r.punctuation_runs),
                (noise.urls, noise.handles, noise.emojis, noise.punctuation_runs),
                "post {:?}",
                post.text
            );
        }
    }
}
