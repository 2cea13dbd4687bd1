//! Independent reference implementations used as test oracles. They share
//! no code with the library beyond its plain data types.
#![allow(dead_code)]

use std::collections::BTreeMap;

use towe_core::corpus::{Span, WordLabel};

/// WordPiece by scanning the whole vocabulary at every position and keeping
/// the longest entry that matches there. No backtracking; a position with no
/// match turns the word into `[UNK]`.
pub fn wordpiece_reference(word: &str, pieces: &[String]) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    if chars.len() > 100 {
        return vec!["[UNK]".into()];
    }
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < chars.len() {
        let rest: String = chars[pos..].iter().collect();
        let mut best: Option<&String> = None;
        for p in pieces {
            let body = if pos == 0 {
                if p.starts_with("##") {
                    continue;
                }
                p.as_str()
            } else {
                match p.strip_prefix("##") {
                    Some(b) => b,
                    None => continue,
                }
            };
            if body.is_empty() || p.starts_with('[') && p.ends_with(']') {
                continue;
            }
            if rest.starts_with(body)
                && best.map_or(true, |b| body.chars().count() > strip(b).chars().count())
            {
                best = Some(p);
            }
        }
        match best {
            Some(p) => {
                pos += strip(p).chars().count();
                out.push(p.clone());
            }
            None => return vec!["[UNK]".into()],
        }
    }
    out
}

fn strip(p: &str) -> &str {
    p.strip_prefix("##").unwrap_or(p)
}

/// BPE merge sequence by recounting every adjacent pair from scratch each
/// round. Ties go to the smallest `(left, right)` pair.
pub fn bpe_reference_merges(corpus: &[(&str, u64)], num_merges: usize) -> Vec<(String, String)> {
    let mut words: Vec<(Vec<String>, u64)> = corpus
        .iter()
        .map(|&(w, f)| {
            let syms = w
                .chars()
                .enumerate()
                .map(|(i, c)| if i == 0 { c.to_string() } else { format!("##{c}") })
                .collect();
            (syms, f)
        })
        .collect();
    let mut merges = Vec::new();
    for _ in 0..num_merges {
        let mut counts: Vec<((String, String), u64)> = Vec::new();
        for (syms, f) in &words {
            for k in 1..syms.len() {
                let pair = (syms[k - 1].clone(), syms[k].clone());
                match counts.iter_mut().find(|(p, _)| *p == pair) {
                    Some((_, c)) => *c += f,
                    None => counts.push((pair, *f)),
                }
            }
        }
        let Some(max) = counts.iter().map(|(_, c)| *c).max() else {
            break;
        };
        let mut best: Vec<(String, String)> = counts
            .into_iter()
            .filter(|(_, c)| *c == max)
            .map(|(p, _)| p)
            .collect();
        best.sort();
        let (l, r) = best.swap_remove(0);
        let joined = format!("{l}{}", &r[2..]);
        for (syms, _) in &mut words {
            let mut k = 1;
            while k < syms.len() {
                if syms[k - 1] == l && syms[k] == r {
                    syms[k - 1] = joined.clone();
                    syms.remove(k);
                } else {
                    k += 1;
                }
            }
        }
        merges.push((l, r));
    }
    merges
}

/// IOB decode stated position by position: a tag opens a span when it is B,
/// or when it is I after O or at the start; the span closes before the next
/// tag that is not I.
pub fn decode_reference(tags: &[WordLabel]) -> Vec<Span> {
    let mut spans = Vec::new();
    for i in 0..tags.len() {
        let opens = match tags[i] {
            WordLabel::B => true,
            WordLabel::I => i == 0 || tags[i - 1] == WordLabel::O,
            WordLabel::O => false,
        };
        if opens {
            let mut end = i;
            while end + 1 < tags.len() && tags[end + 1] == WordLabel::I {
                end += 1;
            }
            spans.push(Span::new(i, end));
        }
    }
    spans
}

/// `(true positives, predicted, gold)` by comparing every predicted span of
/// an example with every gold span of the same example.
pub fn span_counts_reference(pred: &[Vec<Span>], gold: &[Vec<Span>]) -> (usize, usize, usize) {
    let mut tp = 0;
    for (p, g) in pred.iter().zip(gold) {
        for a in p {
            if g.iter().any(|b| a.start == b.start && a.end == b.end) {
                tp += 1;
            }
        }
    }
    let np = pred.iter().map(Vec::len).sum();
    let ng = gold.iter().map(Vec::len).sum();
    (tp, np, ng)
}

/// Word labels written out from spans without going through the library.
pub fn labels_reference(len: usize, spans: &[Span]) -> Vec<WordLabel> {
    let mut tags = vec![WordLabel::O; len];
    for s in spans {
        tags[s.start] = WordLabel::B;
        for t in &mut tags[s.start + 1..=s.end] {
            *t = WordLabel::I;
        }
    }
    tags
}

/// Counts of pieces per key, sorted, for comparing multisets.
pub fn multiset<T: Ord + Clone>(items: &[T]) -> BTreeMap<T, usize> {
    let mut m = BTreeMap::new();
    for i in items {
        *m.entry(i.clone()).or_insert(0) += 1;
    }
    m
}
