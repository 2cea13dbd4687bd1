use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const MASK: &str = "[MASK]";

pub const SPECIAL_TOKENS: [&str; 5] = [PAD, UNK, CLS, SEP, MASK];

/// Marks a piece that continues a word rather than starting one.
pub const CONTINUATION_PREFIX: &str = "##";

/// Dense piece inventory; a piece's id is its position in `pieces`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    pieces: Vec<String>,
    index: HashMap<String, u32>,
    cls: u32,
    sep: u32,
    pad: u32,
    unk: u32,
    mask: u32,
}

impl Vocabulary {
    /// Fails on a duplicate piece (reported with its 0-based line) or when a
    /// special token is absent.
    pub fn new(pieces: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(pieces.len());
        for (i, piece) in pieces.iter().enumerate() {
            if index.insert(piece.clone(), i as u32).is_some() {
                return Err(Error::DuplicatePiece {
                    line: i,
                    piece: piece.clone(),
                });
            }
        }
        let find = |tok: &'static str| index.get(tok).copied().ok_or(Error::MissingSpecial(tok));
        let (cls, sep, pad, unk, mask) = (find(CLS)?, find(SEP)?, find(PAD)?, find(UNK)?, find(MASK)?);
        Ok(Vocabulary {
            pieces,
            index,
            cls,
            sep,
            pad,
            unk,
            mask,
        })
    }

    /// Special tokens first, then `pieces` in order with duplicates dropped.
    pub fn with_specials<I, S>(pieces: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut seen: std::collections::HashSet<String> = all.iter().cloned().collect();
        for p in pieces {
            let p = p.into();
            if seen.insert(p.clone()) {
                all.push(p);
            }
        }
        Vocabulary::new(all).expect("specials present and pieces deduplicated")
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn contains(&self, piece: &str) -> bool {
        self.index.contains_key(piece)
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.index.get(piece).copied()
    }

    /// Id of `piece`, or the [UNK] id when absent.
    pub fn id_or_unk(&self, piece: &str) -> u32 {
        self.id(piece).unwrap_or(self.unk)
    }

    pub fn piece(&self, id: u32) -> Option<&str> {
        self.pieces.get(id as usize).map(String::as_str)
    }

    pub fn cls_id(&self) -> u32 {
        self.cls
    }
    pub fn sep_id(&self) -> u32 {
        self.sep
    }
    pub fn pad_id(&self) -> u32 {
        self.pad
    }
    pub fn unk_id(&self) -> u32 {
        self.unk
    }
    pub fn mask_id(&self) -> u32 {
        self.mask
    }

    /// FNV-1a over the file representation; identifies a vocabulary across tools.
    pub fn checksum(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for piece in &self.pieces {
            for b in piece.bytes().chain(std::iter::once(b'\n')) {
                hash ^= u64::from(b);
                hash = hash.wrapping_mul(0x0100_0000_01b3);
            }
        }
        hash
    }
}

/// Reads one piece per line; the 0-based line number is the id.
pub fn load_vocab(path: impl AsRef<Path>) -> Result<Vocabulary> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let pieces = text
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
        .collect::<Vec<_>>();
    // A single trailing newline does not introduce an empty piece.
    let pieces = match pieces.split_last() {
        Some((last, rest)) if last.is_empty() => rest.to_vec(),
        _ => pieces,
    };
    Vocabulary::new(pieces)
}

pub fn save_vocab(vocab: &Vocabulary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for piece in vocab.pieces() {
        text.push_str(piece);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
