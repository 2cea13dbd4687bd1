use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use towe_core::encoding::Variant;
use towe_core::model::{load_checkpoint, load_external_features, FeatureStore, Hyperparameters};
use towe_core::subword::{load_merges, load_vocab, Tokenizer};
use towe_core::Parameters64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerKind {
    Wordpiece,
    Bpe,
}

pub fn load_tokenizer(vocab: &Path, merges: Option<&Path>) -> Result<Tokenizer> {
    let v = load_vocab(vocab).with_context(|| format!("vocabulary {}", vocab.display()))?;
    Ok(match merges {
        None => Tokenizer::WordPiece(v),
        Some(m) => Tokenizer::Bpe {
            merges: load_merges(m).with_context(|| format!("merges {}", m.display()))?,
            vocab: v,
        },
    })
}

pub fn tokenizer_kind(t: &Tokenizer) -> TokenizerKind {
    match t {
        Tokenizer::WordPiece(_) => TokenizerKind::Wordpiece,
        Tokenizer::Bpe { .. } => TokenizerKind::Bpe,
    }
}

pub fn checksum_hex(t: &Tokenizer) -> String {
    format!("{:016x}", t.vocab().checksum())
}

pub fn load_features(path: Option<&Path>) -> Result<Option<FeatureStore>> {
    path.map(|p| load_external_features(p).with_context(|| format!("features {}", p.display())))
        .transpose()
}

/// Sidecar written next to every checkpoint: what the matrices alone do
/// not say.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub variant: Variant,
    pub mask_aspect: bool,
    pub max_len: usize,
    pub tokenizer: TokenizerKind,
    pub vocab_checksum: String,
    pub hyperparameters: Hyperparameters,
}

pub fn meta_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub struct LoadedModel {
    pub path: PathBuf,
    pub params: Parameters64,
    pub meta: CheckpointMeta,
}

/// Loads a checkpoint and its sidecar and checks both against `tokenizer`.
pub fn load_model(path: &Path, tokenizer: &Tokenizer) -> Result<LoadedModel> {
    let params: Parameters64 =
        load_checkpoint(path).with_context(|| format!("checkpoint {}", path.display()))?;
    let mp = meta_path(path);
    let text = std::fs::read_to_string(&mp)
        .with_context(|| format!("checkpoint metadata {}", mp.display()))?;
    let meta: CheckpointMeta =
        serde_json::from_str(&text).with_context(|| format!("checkpoint metadata {}", mp.display()))?;
    params
        .check_shapes(&meta.hyperparameters)
        .with_context(|| format!("checkpoint {} disagrees with its metadata", path.display()))?;
    if meta.tokenizer != tokenizer_kind(tokenizer) {
        bail!(
            "checkpoint {} was trained with {:?} tokenization",
            path.display(),
            meta.tokenizer
        );
    }
    if meta.vocab_checksum != checksum_hex(tokenizer) {
        bail!(
            "checkpoint {} does not match the vocabulary (checksum {} vs {})",
            path.display(),
            meta.vocab_checksum,
            checksum_hex(tokenizer)
        );
    }
    Ok(LoadedModel {
        path: path.to_path_buf(),
        params,
        meta,
    })
}

/// Expands a comma-separated list where each item is a checkpoint file or a
/// training output directory (all `*.ckpt` inside, by name).
pub fn expand_checkpoints(list: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let p = PathBuf::from(item);
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(&p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "ckpt"))
                .collect();
            if found.is_empty() {
                bail!("no checkpoints in {}", p.display());
            }
            found.sort_by_key(|f| seed_order(f));
            out.extend(found);
        } else {
            out.push(p);
        }
    }
    if out.is_empty() {
        bail!("no checkpoints given");
    }
    Ok(out)
}

/// `seed-10.ckpt` sorts after `seed-9.ckpt`.
fn seed_order(p: &Path) -> (u64, String) {
    let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let n = stem
        .rsplit('-')
        .next()
        .and_then(|d| d.parse().ok())
        .unwrap_or(u64::MAX);
    (n, stem.to_string())
}

pub fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
