use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use super::vocab::{Vocabulary, CONTINUATION_PREFIX, UNK};
use crate::error::{Error, Result};

/// Ordered merge list; a merge's rank is its position.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MergeTable {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
}

/// Symbol produced by merging `left` with the continuation symbol `right`.
pub fn merged_symbol(left: &str, right: &str) -> String {
    let tail = right.strip_prefix(CONTINUATION_PREFIX).unwrap_or(right);
    let mut s = String::with_capacity(left.len() + tail.len());
    s.push_str(left);
    s.push_str(tail);
    s
}

/// Initial symbol sequence: first character bare, the rest `##`-prefixed.
pub fn initial_symbols(word: &str) -> Vec<String> {
    word.chars()
        .enumerate()
        .map(|(i, c)| {
            if i == 0 {
                c.to_string()
            } else {
                format!("{CONTINUATION_PREFIX}{c}")
            }
        })
        .collect()
}

impl MergeTable {
    pub fn new(merges: Vec<(String, String)>) -> Result<Self> {
        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, (left, right)) in merges.iter().enumerate() {
            if left.is_empty() || !right.starts_with(CONTINUATION_PREFIX) || right.len() <= 2 {
                return Err(Error::MalformedMerge {
                    line: rank,
                    message: format!("({left:?}, {right:?}) is not a symbol/continuation pair"),
                });
            }
            if ranks.insert((left.clone(), right.clone()), rank).is_some() {
                return Err(Error::MalformedMerge {
                    line: rank,
                    message: format!("duplicate pair ({left} {right})"),
                });
            }
        }
        Ok(MergeTable { merges, ranks })
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn rank(&self, left: &str, right: &str) -> Option<usize> {
        // HashMap<(String, String)> cannot be queried with borrowed pairs.
        self.ranks.get(&(left.to_string(), right.to_string())).copied()
    }
}

fn merge_in_place(symbols: &mut Vec<String>, left: &str, right: &str) -> bool {
    let mut changed = false;
    let mut i = 0;
    while i + 1 < symbols.len() {
        if symbols[i] == left && symbols[i + 1] == right {
            symbols[i] = merged_symbol(left, right);
            symbols.remove(i + 1);
            changed = true;
        }
        i += 1;
    }
    changed
}

/// Learns up to `num_merges` merges from word frequencies.
///
/// Each round merges the adjacent pair with the highest weighted count; ties
/// go to the lexicographically smallest `(left, right)` pair. Training stops
/// early once no adjacent pairs remain.
pub fn train_bpe<I, S>(corpus: I, num_merges: usize) -> Result<(MergeTable, Vocabulary)>
where
    I: IntoIterator<Item = (S, u64)>,
    S: AsRef<str>,
{
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for (word, freq) in corpus {
        let word = word.as_ref();
        if !word.is_empty() && freq > 0 {
            *counts.entry(word.to_string()).or_default() += freq;
        }
    }
    if counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let mut words: Vec<(Vec<String>, u64)> = counts
        .iter()
        .map(|(w, &f)| (initial_symbols(w), f))
        .collect();
    let alphabet: BTreeSet<String> = words.iter().flat_map(|(s, _)| s.iter().cloned()).collect();

    let mut merges = Vec::with_capacity(num_merges);
    for _ in 0..num_merges {
        let mut pair_counts: BTreeMap<(&str, &str), u64> = BTreeMap::new();
        for (symbols, freq) in &words {
            for pair in symbols.windows(2) {
                *pair_counts.entry((&pair[0], &pair[1])).or_default() += freq;
            }
        }
        let mut best: Option<((&str, &str), u64)> = None;
        for (pair, count) in pair_counts {
            if best.map_or(true, |(_, c)| count > c) {
                best = Some((pair, count));
            }
        }
        let Some(((left, right), _)) = best else {
            break;
        };
        let (left, right) = (left.to_string(), right.to_string());
        for (symbols, _) in &mut words {
            merge_in_place(symbols, &left, &right);
        }
        merges.push((left, right));
    }

    let merged: Vec<String> = merges.iter().map(|(l, r)| merged_symbol(l, r)).collect();
    let vocab = Vocabulary::with_specials(alphabet.into_iter().chain(merged));
    Ok((MergeTable::new(merges)?, vocab))
}

/// Applies the lowest-ranked applicable merge until none applies. A word
/// with any character outside the vocabulary maps to `[UNK]`.
pub fn bpe_tokenize(word: &str, merges: &MergeTable, vocab: &Vocabulary) -> Vec<String> {
    let mut symbols = initial_symbols(word);
    if symbols.is_empty() || symbols.iter().any(|s| !vocab.contains(s)) {
        return vec![UNK.to_string()];
    }
    loop {
        let best = symbols
            .windows(2)
            .filter_map(|p| merges.rank(&p[0], &p[1]))
            .min();
        let Some(rank) = best else {
            break;
        };
        let (left, right) = &merges.merges()[rank];
        merge_in_place(&mut symbols, left, right);
    }
    symbols
}

/// Writes one merge per line, the two symbols separated by a space.
pub fn save_merges(merges: &MergeTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for (l, r) in merges.merges() {
        text.push_str(l);
        text.push(' ');
        text.push_str(r);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_merges(path: impl AsRef<Path>) -> Result<MergeTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut merges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(l), Some(r), None) => merges.push((l.to_string(), r.to_string())),
            _ => {
                return Err(Error::MalformedMerge {
                    line: i,
                    message: format!("expected two space-separated symbols in {line:?}"),
                })
            }
        }
    }
    MergeTable::new(merges)
}
