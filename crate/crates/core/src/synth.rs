//! Synthetic corpora with known structure, for end-to-end checks.
//!
//! * [`subword_sharing`]: every sentence holds two aspect nouns of different
//!   classes and two candidate opinion words. A candidate's class is carried
//!   only by its suffix piece (`##ly` or `##ish`); its stem is random. The
//!   gold opinion is the candidate whose class matches the aspect. Dev and
//!   test candidates use stems never seen in training, so only the shared
//!   suffix piece identifies them.
//! * [`coreference`]: `the N was X`, a run of fillers, then `it is Y`. `X`
//!   is a class-neutral opinion. `Y` is a class-specific adjective and is an
//!   opinion on the aspect `N` only when the classes agree, so tagging it
//!   needs the aspect's identity carried across the gap. An optional second
//!   noun clause of another class acts as a distractor.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dataset, SentenceExample, Span, Split};
use crate::subword::Vocabulary;

/// Generated splits and a WordPiece vocabulary covering them.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
    pub vocab: Vocabulary,
}

const CONSONANTS: &[u8] = b"bdfgkmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn syllables(rng: &mut ChaCha8Rng, n: usize) -> String {
    let mut s = String::with_capacity(2 * n);
    for _ in 0..n {
        s.push(*CONSONANTS.choose(rng).unwrap() as char);
        s.push(*VOWELS.choose(rng).unwrap() as char);
    }
    s
}

/// `count` distinct pseudo-words of `n` consonant-vowel syllables, none in `taken`.
fn fresh_words(rng: &mut ChaCha8Rng, count: usize, n: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let w = syllables(rng, n);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn split_sizes(total: usize) -> (usize, usize) {
    let dev = total / 10;
    let test = total / 10;
    (total - dev - test, dev)
}

fn dataset(examples: Vec<SentenceExample>, split: Split) -> Dataset {
    Dataset::new(examples, split).expect("generated examples are valid")
}

#[derive(Debug, Clone, Copy)]
pub struct SubwordSharingConfig {
    pub sentences: usize,
    pub seed: u64,
    pub train_stems: usize,
    pub heldout_stems: usize,
    pub fillers: usize,
    pub nouns_per_class: usize,
}

impl Default for SubwordSharingConfig {
    fn default() -> Self {
        SubwordSharingConfig {
            sentences: 2000,
            seed: 17,
            train_stems: 120,
            heldout_stems: 40,
            fillers: 40,
            nouns_per_class: 8,
        }
    }
}

pub const SHARED_SUFFIXES: [&str; 2] = ["ly", "ish"];

/// Sentences are 80/10/10 train/dev/test.
pub fn subword_sharing(config: &SubwordSharingConfig) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut taken = BTreeSet::new();
    // Fillers have 3 syllables and stems 2, so no filler is a stem prefix.
    let fillers = fresh_words(&mut rng, config.fillers, 3, &mut taken);
    let train_stems = fresh_words(&mut rng, config.train_stems, 2, &mut taken);
    let heldout_stems = fresh_words(&mut rng, config.heldout_stems, 2, &mut taken);
    let nouns: Vec<Vec<String>> = (0..2)
        .map(|_| {
            fresh_words(&mut rng, config.nouns_per_class, 2, &mut taken)
                .into_iter()
                .map(|w| format!("{w}n"))
                .collect()
        })
        .collect();
    let intensifier = "so".to_string();

    let (n_train, n_dev) = split_sizes(config.sentences);
    let mut splits = [Vec::new(), Vec::new(), Vec::new()];
    for i in 0..config.sentences {
        let split = if i < n_train {
            0
        } else if i < n_train + n_dev {
            1
        } else {
            2
        };
        let stems = if split == 0 { &train_stems } else { &heldout_stems };

        // Items: (words, class of noun, class of opinion)
        let mut items: Vec<(Vec<String>, Option<usize>, Option<usize>)> = Vec::new();
        for class in 0..2 {
            items.push((vec![nouns[class].choose(&mut rng).unwrap().clone()], Some(class), None));
            let word = format!("{}{}", stems.choose(&mut rng).unwrap(), SHARED_SUFFIXES[class]);
            let phrase = if rng.gen_bool(0.3) {
                vec![intensifier.clone(), word]
            } else {
                vec![word]
            };
            items.push((phrase, None, Some(class)));
        }
        for _ in 0..rng.gen_range(2..=6) {
            items.push((vec![fillers.choose(&mut rng).unwrap().clone()], None, None));
        }
        items.shuffle(&mut rng);

        let aspect_class = rng.gen_range(0..2);
        let mut words = Vec::new();
        let mut aspect = None;
        let mut opinion = None;
        for (phrase, noun, op) in items {
            let span = Span::new(words.len(), words.len() + phrase.len() - 1);
            if noun == Some(aspect_class) {
                aspect = Some(span);
            }
            if op == Some(aspect_class) {
                opinion = Some(span);
            }
            words.extend(phrase);
        }
        let ex = SentenceExample::new(
            format!("sw{i}"),
            words,
            aspect.unwrap(),
            vec![opinion.unwrap()],
        )
        .expect("generated example is valid");
        splits[split].push(ex);
    }

    let mut pieces: Vec<String> = fillers;
    pieces.extend(nouns.into_iter().flatten());
    pieces.extend(train_stems);
    pieces.extend(heldout_stems);
    pieces.push(intensifier);
    pieces.extend(SHARED_SUFFIXES.iter().map(|s| format!("##{s}")));
    let [train, dev, test] = splits;
    SyntheticCorpus {
        train: dataset(train, Split::Train),
        dev: dataset(dev, Split::Dev),
        test: dataset(test, Split::Test),
        vocab: Vocabulary::with_specials(pieces),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CoreferenceConfig {
    pub sentences: usize,
    pub seed: u64,
    pub classes: usize,
    pub nouns_per_class: usize,
    pub adjectives_per_class: usize,
    pub fillers: usize,
    /// Inclusive range of filler words before the pronoun clause.
    pub min_gap: usize,
    pub max_gap: usize,
    /// Probability that the pronoun clause uses the aspect's class.
    pub match_rate: f64,
    /// Adds a second noun clause of another class.
    pub distractor: bool,
}

impl Default for CoreferenceConfig {
    fn default() -> Self {
        CoreferenceConfig {
            sentences: 2000,
            seed: 23,
            classes: 3,
            nouns_per_class: 2,
            adjectives_per_class: 2,
            fillers: 10,
            min_gap: 0,
            max_gap: 12,
            match_rate: 0.5,
            distractor: false,
        }
    }
}

const NEUTRAL_OPINIONS: [&str; 6] = ["good", "bad", "nice", "poor", "great", "awful"];

/// Sentences are 80/10/10 train/dev/test.
pub fn coreference(config: &CoreferenceConfig) -> SyntheticCorpus {
    assert!(config.classes >= 2, "at least two noun classes are needed");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut taken: BTreeSet<String> = NEUTRAL_OPINIONS.iter().map(|s| s.to_string()).collect();
    for w in ["the", "was", "and", "it", "is"] {
        taken.insert(w.to_string());
    }
    let fillers = fresh_words(&mut rng, config.fillers, 3, &mut taken);
    let nouns: Vec<Vec<String>> = (0..config.classes)
        .map(|_| fresh_words(&mut rng, config.nouns_per_class, 2, &mut taken))
        .collect();
    let adjectives: Vec<Vec<String>> = (0..config.classes)
        .map(|_| fresh_words(&mut rng, config.adjectives_per_class, 4, &mut taken))
        .collect();

    let (n_train, n_dev) = split_sizes(config.sentences);
    let mut splits = [Vec::new(), Vec::new(), Vec::new()];
    for i in 0..config.sentences {
        let split = if i < n_train {
            0
        } else if i < n_train + n_dev {
            1
        } else {
            2
        };
        let aspect_class = rng.gen_range(0..config.classes);
        let other_class = (aspect_class + rng.gen_range(1..config.classes)) % config.classes;
        let pronoun_class = if rng.gen_bool(config.match_rate) {
            aspect_class
        } else {
            (aspect_class + rng.gen_range(1..config.classes)) % config.classes
        };

        let clause = |rng: &mut ChaCha8Rng, class: usize| -> Vec<String> {
            vec![
                "the".to_string(),
                nouns[class].choose(rng).unwrap().clone(),
                "was".to_string(),
                NEUTRAL_OPINIONS.choose(rng).unwrap().to_string(),
            ]
        };
        let aspect_clause = clause(&mut rng, aspect_class);
        let other_clause = clause(&mut rng, other_class);
        let aspect_first = rng.gen_bool(0.5);

        let mut words: Vec<String> = Vec::new();
        let mut aspect = Span::new(0, 0);
        let mut opinions = Vec::new();
        let (first, second) = if aspect_first {
            (&aspect_clause, &other_clause)
        } else {
            (&other_clause, &aspect_clause)
        };
        let clauses: Vec<&Vec<String>> = if config.distractor {
            vec![first, second]
        } else {
            vec![&aspect_clause]
        };
        let aspect_first = aspect_first || !config.distractor;
        for (k, c) in clauses.into_iter().enumerate() {
            if k == 1 {
                words.push("and".to_string());
            }
            let base = words.len();
            if (k == 0) == aspect_first {
                aspect = Span::new(base + 1, base + 1);
                opinions.push(Span::new(base + 3, base + 3));
            }
            words.extend(c.iter().cloned());
        }
        for _ in 0..rng.gen_range(config.min_gap..=config.max_gap) {
            words.push(fillers.choose(&mut rng).unwrap().clone());
        }
        words.push("it".to_string());
        words.push("is".to_string());
        if pronoun_class == aspect_class {
            opinions.push(Span::new(words.len(), words.len()));
        }
        words.push(adjectives[pronoun_class].choose(&mut rng).unwrap().clone());

        let ex = SentenceExample::new(format!("cr{i}"), words, aspect, opinions)
            .expect("generated example is valid");
        splits[split].push(ex);
    }

    let mut pieces: Vec<String> = ["the", "was", "and", "it", "is"].map(String::from).to_vec();
    pieces.extend(NEUTRAL_OPINIONS.iter().map(|s| s.to_string()));
    pieces.extend(fillers);
    pieces.extend(nouns.into_iter().flatten());
    pieces.extend(adjectives.into_iter().flatten());
    let [train, dev, test] = splits;
    SyntheticCorpus {
        train: dataset(train, Split::Train),
        dev: dataset(dev, Split::Dev),
        test: dataset(test, Split::Test),
        vocab: Vocabulary::with_specials(pieces),
    }
}
