//! Subword tokenization with word alignment.
//!
//! Both WordPiece and BPE mark word-internal pieces with `##`, so a
//! [`Tokenization`] looks the same whichever tokenizer produced it.

mod bpe;
mod vocab;
mod wordpiece;

pub use bpe::{
    bpe_tokenize, initial_symbols, load_merges, merged_symbol, save_merges, train_bpe, MergeTable,
};
pub use vocab::{
    load_vocab, save_vocab, Vocabulary, CLS, CONTINUATION_PREFIX, MASK, PAD, SEP, SPECIAL_TOKENS,
    UNK,
};
pub use wordpiece::{wordpiece_tokenize, MAX_WORD_CHARS};

use crate::corpus::Span;

/// A vocabulary together with the algorithm that splits words against it.
#[derive(Debug, Clone)]
pub enum Tokenizer {
    WordPiece(Vocabulary),
    Bpe { merges: MergeTable, vocab: Vocabulary },
}

impl Tokenizer {
    pub fn vocab(&self) -> &Vocabulary {
        match self {
            Tokenizer::WordPiece(v) => v,
            Tokenizer::Bpe { vocab, .. } => vocab,
        }
    }

    pub fn tokenize_word(&self, word: &str) -> Vec<String> {
        match self {
            Tokenizer::WordPiece(v) => wordpiece_tokenize(word, v),
            Tokenizer::Bpe { merges, vocab } => bpe_tokenize(word, merges, vocab),
        }
    }
}

/// Subword pieces of a sentence, aligned back to words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenization {
    pub pieces: Vec<String>,
    /// Source word of each piece; non-decreasing.
    pub word_index: Vec<usize>,
    /// True iff the piece starts its word.
    pub is_first: Vec<bool>,
    /// Pieces covering the aspect words.
    pub aspect_piece_span: Span,
}

impl Tokenization {
    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn word_count(&self) -> usize {
        self.word_index.last().map_or(0, |w| w + 1)
    }

    pub fn aspect_pieces(&self) -> &[String] {
        &self.pieces[self.aspect_piece_span.start..=self.aspect_piece_span.end]
    }

    /// Piece index of each word's first piece.
    pub fn first_piece_positions(&self) -> Vec<usize> {
        self.is_first
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect()
    }
}

/// Tokenizes each word in order and records the alignment.
///
/// Panics if `aspect_span` does not index into `words`.
pub fn tokenize_sentence(words: &[String], tokenizer: &Tokenizer, aspect_span: Span) -> Tokenization {
    assert!(
        aspect_span.start <= aspect_span.end && aspect_span.end < words.len(),
        "aspect span {aspect_span} out of range for {} words",
        words.len()
    );
    let mut pieces = Vec::new();
    let mut word_index = Vec::new();
    let mut is_first = Vec::new();
    let mut aspect_start = 0;
    let mut aspect_end = 0;
    for (w, word) in words.iter().enumerate() {
        if w == aspect_span.start {
            aspect_start = pieces.len();
        }
        for (k, piece) in tokenizer.tokenize_word(word).into_iter().enumerate() {
            pieces.push(piece);
            word_index.push(w);
            is_first.push(k == 0);
        }
        if w == aspect_span.end {
            aspect_end = pieces.len() - 1;
        }
    }
    Tokenization {
        pieces,
        word_index,
        is_first,
        aspect_piece_span: Span::new(aspect_start, aspect_end),
    }
}

/// Strips `##` from continuation pieces and joins. Inverse of tokenization
/// for words that did not map to `[UNK]`.
pub fn detokenize_word(pieces: &[String]) -> String {
    pieces
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if i > 0 {
                p.strip_prefix(CONTINUATION_PREFIX).unwrap_or(p)
            } else {
                p.as_str()
            }
        })
        .collect()
}
