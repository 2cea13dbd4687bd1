//! Model inputs: `[CLS] T [SEP]` and `[CLS] T [SEP] t_a [SEP]`, labels on
//! first pieces, relative positions and aspect masking.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{derive_word_labels, SentenceExample, Span, WordLabel};
use crate::error::{Error, Result};
use crate::subword::{tokenize_sentence, Tokenization, Tokenizer, Vocabulary};

/// Input layout: the sentence alone, or the sentence followed by the aspect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    S,
    SA,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::S => "S",
            Variant::SA => "SA",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "S" => Ok(Variant::S),
            "SA" | "S,A" => Ok(Variant::SA),
            other => Err(Error::Config(format!("unknown variant {other:?} (expected S or SA)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeConfig {
    /// Relative positions are clipped to `[-window, window]`.
    pub window: usize,
    /// Longer inputs are rejected.
    pub max_len: usize,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        EncodeConfig {
            window: 50,
            max_len: 256,
        }
    }
}

/// One model-ready input. All per-position vectors have equal length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedInput {
    pub token_ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    pub position_ids: Vec<i32>,
    /// `None` marks a position that carries no label (SKIP).
    pub label_ids: Vec<Option<WordLabel>>,
    pub loss_mask: Vec<bool>,
    /// Positions of the sentence pieces, between `[CLS]` and the first `[SEP]`.
    pub sentence_region: Span,
    /// Aspect pieces inside the sentence region, in input positions.
    pub aspect_piece_span: Span,
    pub variant: Variant,
}

impl EncodedInput {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Positions that predict a word: first pieces inside the sentence region.
    pub fn word_positions(&self) -> Vec<usize> {
        self.label_ids
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|_| i))
            .collect()
    }

    pub fn labeled_count(&self) -> usize {
        self.loss_mask.iter().filter(|&&m| m).count()
    }

    /// Token ids of the sentence pieces, without specials or the aspect tail.
    pub fn sentence_token_ids(&self) -> &[u32] {
        &self.token_ids[self.sentence_region.start..=self.sentence_region.end]
    }
}

/// First piece of each word carries the word's label; other pieces are SKIP.
/// Returned vectors are indexed by piece.
pub fn project_labels_to_pieces(
    word_labels: &[WordLabel],
    tok: &Tokenization,
) -> (Vec<Option<WordLabel>>, Vec<bool>) {
    assert_eq!(
        word_labels.len(),
        tok.word_count(),
        "one label per word is required"
    );
    let labels: Vec<Option<WordLabel>> = tok
        .word_index
        .iter()
        .zip(&tok.is_first)
        .map(|(&w, &first)| first.then(|| word_labels[w]))
        .collect();
    let mask = labels.iter().map(Option::is_some).collect();
    (labels, mask)
}

/// Signed distance of each piece to the nearest aspect piece, clipped to
/// `[-window, window]`. Aspect pieces get 0.
pub fn relative_position_ids(tok: &Tokenization, window: usize) -> Vec<i32> {
    let Span { start, end } = tok.aspect_piece_span;
    let w = window as i64;
    (0..tok.len())
        .map(|i| {
            let offset = if i < start {
                i as i64 - start as i64
            } else if i > end {
                (i - end) as i64
            } else {
                0
            };
            offset.clamp(-w, w) as i32
        })
        .collect()
}

fn build(
    tok: &Tokenization,
    vocab: &Vocabulary,
    word_labels: &[WordLabel],
    config: &EncodeConfig,
    variant: Variant,
) -> Result<EncodedInput> {
    let n = tok.len();
    let tail = match variant {
        Variant::S => 0,
        Variant::SA => tok.aspect_piece_span.len() + 1,
    };
    let len = n + 2 + tail;
    if len > config.max_len {
        return Err(Error::InputTooLong {
            len,
            cap: config.max_len,
        });
    }
    let (piece_labels, piece_mask) = project_labels_to_pieces(word_labels, tok);
    let rel = relative_position_ids(tok, config.window);

    let mut token_ids = Vec::with_capacity(len);
    let mut segment_ids = Vec::with_capacity(len);
    let mut position_ids = Vec::with_capacity(len);
    let mut label_ids = Vec::with_capacity(len);
    let mut loss_mask = Vec::with_capacity(len);
    let mut push = |id: u32, seg: u8, pos: i32, label: Option<WordLabel>, mask: bool| {
        token_ids.push(id);
        segment_ids.push(seg);
        position_ids.push(pos);
        label_ids.push(label);
        loss_mask.push(mask);
    };

    push(vocab.cls_id(), 0, 0, None, false);
    for i in 0..n {
        push(vocab.id_or_unk(&tok.pieces[i]), 0, rel[i], piece_labels[i], piece_mask[i]);
    }
    push(vocab.sep_id(), 0, 0, None, false);
    if variant == Variant::SA {
        for piece in tok.aspect_pieces() {
            push(vocab.id_or_unk(piece), 1, 0, None, false);
        }
        push(vocab.sep_id(), 1, 0, None, false);
    }

    Ok(EncodedInput {
        token_ids,
        segment_ids,
        position_ids,
        label_ids,
        loss_mask,
        sentence_region: Span::new(1, n),
        aspect_piece_span: Span::new(tok.aspect_piece_span.start + 1, tok.aspect_piece_span.end + 1),
        variant,
    })
}

/// `[CLS] T [SEP]`, all segment ids 0.
pub fn format_sentence_input(
    tok: &Tokenization,
    vocab: &Vocabulary,
    word_labels: &[WordLabel],
    config: &EncodeConfig,
) -> Result<EncodedInput> {
    build(tok, vocab, word_labels, config, Variant::S)
}

/// `[CLS] T [SEP] t_a [SEP]`; the tail has segment id 1 and never carries loss.
pub fn format_sentence_aspect_input(
    tok: &Tokenization,
    vocab: &Vocabulary,
    word_labels: &[WordLabel],
    config: &EncodeConfig,
) -> Result<EncodedInput> {
    build(tok, vocab, word_labels, config, Variant::SA)
}

/// Replaces the aspect ids inside the sentence region with `[MASK]`.
/// The aspect tail of an SA input is left untouched.
pub fn mask_aspect(enc: &EncodedInput, vocab: &Vocabulary) -> EncodedInput {
    let mut out = enc.clone();
    let Span { start, end } = enc.aspect_piece_span;
    for id in &mut out.token_ids[start..=end] {
        *id = vocab.mask_id();
    }
    out
}

/// Tokenizes, labels and formats one example.
pub fn encode_example(
    example: &SentenceExample,
    tokenizer: &Tokenizer,
    variant: Variant,
    mask: bool,
    config: &EncodeConfig,
) -> Result<EncodedInput> {
    let tok = tokenize_sentence(&example.words, tokenizer, example.aspect_span);
    let labels = derive_word_labels(example);
    let vocab = tokenizer.vocab();
    let enc = match variant {
        Variant::S => format_sentence_input(&tok, vocab, &labels, config),
        Variant::SA => format_sentence_aspect_input(&tok, vocab, &labels, config),
    }
    .map_err(|e| match e {
        Error::InputTooLong { len, cap } => Error::InvalidExample {
            id: example.id.clone(),
            message: format!("encoded length {len} exceeds cap {cap}"),
        },
        other => other,
    })?;
    Ok(if mask { mask_aspect(&enc, vocab) } else { enc })
}

/// One line of the prepared-input dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreparedRecord {
    pub id: String,
    pub pieces: Vec<String>,
    #[serde(flatten)]
    pub input: EncodedInput,
}

pub fn write_prepared(records: &[PreparedRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("serializing a record cannot fail");
        out.push(b'\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}

pub fn read_prepared(path: impl AsRef<Path>) -> Result<Vec<PreparedRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::MalformedLine {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use WordLabel::*;

    fn vocab() -> Vocabulary {
        Vocabulary::with_specials(["such", "an", "awesome", "surf", "snow", "##board", "great", "a"])
    }

    fn surfboard() -> (Tokenization, Vec<WordLabel>) {
        let words: Vec<String> = ["such", "an", "awesome", "surfboard"].map(String::from).to_vec();
        let tok = tokenize_sentence(&words, &Tokenizer::WordPiece(vocab()), Span::new(3, 3));
        (tok, vec![O, O, B, O])
    }

    fn ids(v: &Vocabulary, pieces: &[&str]) -> Vec<u32> {
        pieces.iter().map(|p| v.id(p).unwrap()).collect()
    }

    #[test]
    fn sentence_format() {
        let v = vocab();
        let (tok, labels) = surfboard();
        let enc = format_sentence_input(&tok, &v, &labels, &EncodeConfig::default()).unwrap();
        assert_eq!(
            enc.token_ids,
            ids(&v, &["[CLS]", "such", "an", "awesome", "surf", "##board", "[SEP]"])
        );
        assert_eq!(enc.segment_ids, vec![0; 7]);
        assert_eq!(enc.label_ids, vec![None, Some(O), Some(O), Some(B), Some(O), None, None]);
        assert_eq!(enc.loss_mask, [false, true, true, true, true, false, false]);
        assert_eq!(enc.sentence_region, Span::new(1, 5));
        assert_eq!(enc.aspect_piece_span, Span::new(4, 5));
        assert_eq!(enc.position_ids, [0, -3, -2, -1, 0, 0, 0]);
    }

    #[test]
    fn sentence_aspect_format() {
        let v = vocab();
        let (tok, labels) = surfboard();
        let cfg = EncodeConfig::default();
        let s = format_sentence_input(&tok, &v, &labels, &cfg).unwrap();
        let sa = format_sentence_aspect_input(&tok, &v, &labels, &cfg).unwrap();
        assert_eq!(
            sa.token_ids,
            ids(
                &v,
                &["[CLS]", "such", "an", "awesome", "surf", "##board", "[SEP]", "surf", "##board", "[SEP]"]
            )
        );
        assert_eq!(sa.len(), s.len() + 2 + 1);
        assert_eq!(&sa.segment_ids[7..], &[1, 1, 1]);
        assert!(sa.loss_mask[7..].iter().all(|m| !m));
        assert_eq!(sa.variant, Variant::SA);
    }

    #[test]
    fn single_piece_aspect_has_two_tail_positions() {
        let v = vocab();
        let words: Vec<String> = ["great", "snow"].map(String::from).to_vec();
        let tok = tokenize_sentence(&words, &Tokenizer::WordPiece(v.clone()), Span::new(1, 1));
        let cfg = EncodeConfig::default();
        let s = format_sentence_input(&tok, &v, &[B, O], &cfg).unwrap();
        let sa = format_sentence_aspect_input(&tok, &v, &[B, O], &cfg).unwrap();
        assert_eq!(sa.len() - s.len(), 2);
    }

    #[test]
    fn one_word_sentence_is_three_positions() {
        let v = vocab();
        let words = vec!["great".to_string()];
        let tok = tokenize_sentence(&words, &Tokenizer::WordPiece(v.clone()), Span::new(0, 0));
        let enc = format_sentence_input(&tok, &v, &[O], &EncodeConfig::default()).unwrap();
        assert_eq!(enc.len(), 3);
    }

    #[test]
    fn projection_rules() {
        let (tok, labels) = surfboard();
        let (l, m) = project_labels_to_pieces(&labels, &tok);
        assert_eq!(l, [Some(O), Some(O), Some(B), Some(O), None]);
        assert_eq!(m, [true, true, true, true, false]);

        let v = Vocabulary::with_specials(["x", "##y", "##z"]);
        let words = vec!["xyz".to_string(), "x".to_string()];
        let tok = tokenize_sentence(&words, &Tokenizer::WordPiece(v), Span::new(1, 1));
        let (l, _) = project_labels_to_pieces(&[I, O], &tok);
        assert_eq!(l, [Some(I), None, None, Some(O)]);
    }

    #[test]
    fn positions_clip_to_window() {
        let v = Vocabulary::with_specials(["w"]);
        let words = vec!["w".to_string(); 20];
        let tok = tokenize_sentence(&words, &Tokenizer::WordPiece(v), Span::new(0, 0));
        let pos = relative_position_ids(&tok, 12);
        assert_eq!(pos[0], 0);
        assert_eq!(pos[5], 5);
        assert_eq!(pos[19], 12);
        let (tok, _) = surfboard();
        assert_eq!(relative_position_ids(&tok, 50)[2], -1);
    }

    #[test]
    fn too_long_input_is_rejected() {
        let v = vocab();
        let (tok, labels) = surfboard();
        let cfg = EncodeConfig { window: 50, max_len: 9 };
        assert!(format_sentence_input(&tok, &v, &labels, &cfg).is_ok());
        assert!(matches!(
            format_sentence_aspect_input(&tok, &v, &labels, &cfg),
            Err(Error::InputTooLong { len: 10, cap: 9 })
        ));
    }

    #[test]
    fn masking_touches_only_sentence_aspect() {
        let v = vocab();
        let (tok, labels) = surfboard();
        let sa = format_sentence_aspect_input(&tok, &v, &labels, &EncodeConfig::default()).unwrap();
        let masked = mask_aspect(&sa, &v);
        let m = v.mask_id();
        assert_eq!(masked.token_ids[4], m);
        assert_eq!(masked.token_ids[5], m);
        for i in (0..sa.len()).filter(|i| !(4..=5).contains(i)) {
            assert_eq!(masked.token_ids[i], sa.token_ids[i]);
        }
        assert_eq!(masked.label_ids, sa.label_ids);
        assert_eq!(mask_aspect(&masked, &v), masked);
    }

    #[test]
    fn prepared_dump_round_trips() {
        let v = vocab();
        let (tok, labels) = surfboard();
        let enc = format_sentence_aspect_input(&tok, &v, &labels, &EncodeConfig::default()).unwrap();
        let rec = PreparedRecord {
            id: "e1".into(),
            pieces: tok.pieces.clone(),
            input: enc,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prep.jsonl");
        write_prepared(std::slice::from_ref(&rec), &path).unwrap();
        assert_eq!(read_prepared(&path).unwrap(), vec![rec]);
    }
}
