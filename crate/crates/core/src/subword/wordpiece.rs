use super::vocab::{Vocabulary, CONTINUATION_PREFIX, UNK};

/// Words longer than this (in characters) become [UNK] without matching.
pub const MAX_WORD_CHARS: usize = 100;

/// Greedy longest-match-first decomposition of a single word.
///
/// At each position the longest vocabulary prefix is taken, with `##`
/// prepended after the first piece. If some position has no match the whole
/// word maps to `[UNK]`.
pub fn wordpiece_tokenize(word: &str, vocab: &Vocabulary) -> Vec<String> {
    let chars: Vec<(usize, char)> = word.char_indices().collect();
    if chars.is_empty() || chars.len() > MAX_WORD_CHARS {
        return vec![UNK.to_string()];
    }
    let byte_at = |ci: usize| chars.get(ci).map_or(word.len(), |&(b, _)| b);

    let mut pieces = Vec::new();
    let mut start = 0;
    let mut candidate = String::with_capacity(word.len() + CONTINUATION_PREFIX.len());
    while start < chars.len() {
        let mut end = chars.len();
        let mut found = None;
        while end > start {
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION_PREFIX);
            }
            candidate.push_str(&word[byte_at(start)..byte_at(end)]);
            if vocab.contains(&candidate) {
                found = Some(candidate.clone());
                break;
            }
            end -= 1;
        }
        match found {
            Some(piece) => {
                pieces.push(piece);
                start = end;
            }
            None => return vec![UNK.to_string()],
        }
    }
    pieces
}
