//! Binary checkpoint (`TOWE`) and external feature (`TFEA`) files.
//!
//! Checkpoint layout, all integers little-endian:
//!
//! ```text
//! b"TOWE" | version: u32 | 11 × (rows: u32 | cols: u32 | rows*cols × f64)
//! ```
//!
//! Matrices appear in [`TENSOR_NAMES`] order. Feature files hold
//!
//! ```text
//! b"TFEA" | version: u32 | count: u32 |
//!     count × (id_len: u16 | id bytes | rows: u32 | cols: u32 | rows*cols × f32)
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use super::matrix::Matrix;
use super::params::{Hyperparameters, LstmWeights, Parameters, TENSOR_NAMES};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TOWE";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const FEATURE_MAGIC: &[u8; 4] = b"TFEA";
pub const FEATURE_VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    cur: Cursor<&'a [u8]>,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader {
            cur: Cursor::new(bytes),
        }
    }

    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.cur
            .read_exact(&mut b)
            .map_err(|_| Error::Format(format!("truncated file while reading {what}")))?;
        Ok(b)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(what)?))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(what)?))
    }

    fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let remaining = self.remaining();
        if n > remaining {
            return Err(Error::Format(format!("truncated file while reading {what}")));
        }
        let mut b = vec![0u8; n];
        self.cur.read_exact(&mut b).expect("length checked");
        Ok(b)
    }

    fn remaining(&self) -> usize {
        self.cur.get_ref().len() - self.cur.position() as usize
    }
}

pub fn checkpoint_bytes<T: Scalar>(params: &Parameters<T>) -> Vec<u8> {
    let mut buf = Vec::with_capacity(8 + params.scalar_count() * 8 + 11 * 8);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut buf, CHECKPOINT_VERSION);
    for m in params.tensors() {
        put_u32(&mut buf, m.rows() as u32);
        put_u32(&mut buf, m.cols() as u32);
        for v in m.as_slice() {
            let v = v.to_f64().expect("float converts to f64");
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

pub fn save_checkpoint<T: Scalar>(params: &Parameters<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint_bytes(params)).map_err(|e| Error::io(path, e))
}

/// Shapes in a checkpoint determine vocabulary size, dimensions and window;
/// the remaining hyperparameters are copied from `template`.
pub fn hyperparameters_from<T: Scalar>(
    params: &Parameters<T>,
    template: &Hyperparameters,
) -> Result<Hyperparameters> {
    let rows = params.position_embedding.rows();
    if rows % 2 == 0 {
        return Err(Error::Format(format!("position table has even row count {rows}")));
    }
    let hp = Hyperparameters {
        vocab_size: params.token_embedding.rows(),
        embed_dim: params.embed_dim(),
        hidden_dim: params.hidden_dim(),
        window: (rows - 1) / 2,
        ..*template
    };
    params.check_shapes(&hp)?;
    Ok(hp)
}

pub fn parse_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Parameters<T>> {
    let mut r = Reader::new(bytes);
    if &r.take::<4>("magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut tensors = Vec::with_capacity(TENSOR_NAMES.len());
    for name in TENSOR_NAMES {
        let rows = r.u32(name)? as usize;
        let cols = r.u32(name)? as usize;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n * 8 <= r.remaining())
            .ok_or_else(|| Error::Format(format!("truncated file while reading {name}")))?;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(T::from_f64_lossy(f64::from_le_bytes(r.take(name)?)));
        }
        tensors.push(Matrix::from_vec(rows, cols, data));
    }
    if r.remaining() != 0 {
        return Err(Error::Format("trailing bytes after last matrix".into()));
    }
    let mut it = tensors.into_iter();
    let mut next = || it.next().expect("eleven tensors read");
    let params = Parameters {
        token_embedding: next(),
        position_embedding: next(),
        segment_embedding: next(),
        forward: LstmWeights {
            w_ih: next(),
            w_hh: next(),
            bias: next(),
        },
        backward: LstmWeights {
            w_ih: next(),
            w_hh: next(),
            bias: next(),
        },
        classifier_weight: next(),
        classifier_bias: next(),
    };
    hyperparameters_from(&params, &Hyperparameters::new(1))?;
    Ok(params)
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Parameters<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes)
}

/// Per-example contextual feature matrices keyed by example id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureStore {
    ids: Vec<String>,
    matrices: HashMap<String, Matrix<f32>>,
}

impl FeatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fails if the id is already present or the column count differs from
    /// earlier entries.
    pub fn insert(&mut self, id: impl Into<String>, matrix: Matrix<f32>) -> Result<()> {
        let id = id.into();
        if let Some(dim) = self.dim() {
            if matrix.cols() != dim {
                return Err(Error::Dimension(format!(
                    "example {id:?} has {} columns, expected {dim}",
                    matrix.cols()
                )));
            }
        }
        if self.matrices.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.ids.push(id.clone());
        self.matrices.insert(id, matrix);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Column count shared by every matrix.
    pub fn dim(&self) -> Option<usize> {
        self.ids.first().map(|id| self.matrices[id].cols())
    }

    pub fn get(&self, id: &str) -> Option<&Matrix<f32>> {
        self.matrices.get(id)
    }

    /// Checks that every `(id, encoded length)` pair has a matrix with that
    /// many rows and `dim` columns.
    pub fn check_alignment<'a>(
        &self,
        expected: impl IntoIterator<Item = (&'a str, usize)>,
        dim: usize,
    ) -> Result<()> {
        if let Some(d) = self.dim() {
            if d != dim {
                return Err(Error::Dimension(format!("feature dimension {d}, model expects {dim}")));
            }
        }
        for (id, len) in expected {
            let m = self
                .get(id)
                .ok_or_else(|| Error::MissingFeatures(id.to_string()))?;
            if m.rows() != len {
                return Err(Error::Dimension(format!(
                    "example {id:?}: {} feature rows for {len} input positions",
                    m.rows()
                )));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(FEATURE_MAGIC);
        put_u32(&mut buf, FEATURE_VERSION);
        put_u32(&mut buf, self.ids.len() as u32);
        for id in &self.ids {
            let m = &self.matrices[id];
            buf.extend_from_slice(&(id.len() as u16).to_le_bytes());
            buf.extend_from_slice(id.as_bytes());
            put_u32(&mut buf, m.rows() as u32);
            put_u32(&mut buf, m.cols() as u32);
            for v in m.as_slice() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if &r.take::<4>("magic")? != FEATURE_MAGIC {
            return Err(Error::Format("not a feature file (bad magic)".into()));
        }
        let version = r.u32("version")?;
        if version != FEATURE_VERSION {
            return Err(Error::Format(format!("unsupported feature file version {version}")));
        }
        let count = r.u32("example count")?;
        let mut store = FeatureStore::new();
        for _ in 0..count {
            let id_len = r.u16("id length")? as usize;
            let id = String::from_utf8(r.bytes(id_len, "id")?)
                .map_err(|_| Error::Format("example id is not UTF-8".into()))?;
            let rows = r.u32("rows")? as usize;
            let cols = r.u32("cols")? as usize;
            let n = rows
                .checked_mul(cols)
                .filter(|n| n * 4 <= r.remaining())
                .ok_or_else(|| Error::Format(format!("truncated matrix for {id:?}")))?;
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(f32::from_le_bytes(r.take("feature")?));
            }
            store.insert(id, Matrix::from_vec(rows, cols, data))?;
        }
        if r.remaining() != 0 {
            return Err(Error::Format("trailing bytes after last example".into()));
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

pub fn load_external_features(path: impl AsRef<Path>) -> Result<FeatureStore> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureStore::from_bytes(&bytes)
}
