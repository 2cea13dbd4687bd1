//! Target-oriented opinion word extraction without syntax trees.
//!
//! The pipeline tokenizes a pre-split sentence into subword pieces
//! ([`subword`]), lays it out as `[CLS] T [SEP]` or `[CLS] T [SEP] t_a [SEP]`
//! ([`encoding`]), tags each word's first piece with a BiLSTM ([`model`],
//! [`train`]) and scores decoded spans by exact-match micro F1 ([`eval`]).
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix the
//! element type for the common cases.

pub mod corpus;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod model;
pub mod scalar;
pub mod subword;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Parameters64 = model::Parameters<f64>;
pub type Parameters32 = model::Parameters<f32>;
pub type ForwardTrace64 = model::ForwardTrace<f64>;
pub type ForwardTrace32 = model::ForwardTrace<f32>;
pub type AdamState64 = train::AdamState<f64>;
pub type AdamState32 = train::AdamState<f32>;
pub type MultiRun64 = train::MultiRun<f64>;
