use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Where per-position input vectors come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// A token embedding table trained with the rest of the model.
    LearnedEmbeddings,
    /// Precomputed contextual vectors, one row per input position.
    ExternalFeatures,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// Hidden size of each LSTM direction.
    pub hidden_dim: usize,
    pub window: usize,
    pub use_position: bool,
    pub use_segment: bool,
    pub feature_mode: FeatureMode,
    pub seed: u64,
}

impl Hyperparameters {
    pub fn new(vocab_size: usize) -> Self {
        Hyperparameters {
            vocab_size,
            embed_dim: 64,
            hidden_dim: 64,
            window: 50,
            use_position: false,
            use_segment: false,
            feature_mode: FeatureMode::LearnedEmbeddings,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config(
                "vocab_size, embed_dim and hidden_dim must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn position_rows(&self) -> usize {
        2 * self.window + 1
    }
}

/// Weights of one LSTM direction. Gate blocks are stacked in the order
/// input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights<T> {
    /// 4h × d
    pub w_ih: Matrix<T>,
    /// 4h × h
    pub w_hh: Matrix<T>,
    /// 1 × 4h
    pub bias: Matrix<T>,
}

impl<T: Scalar> LstmWeights<T> {
    fn zeros(input: usize, hidden: usize) -> Self {
        LstmWeights {
            w_ih: Matrix::zeros(4 * hidden, input),
            w_hh: Matrix::zeros(4 * hidden, hidden),
            bias: Matrix::zeros(1, 4 * hidden),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<T> {
    /// vocab_size × d
    pub token_embedding: Matrix<T>,
    /// (2W+1) × d, row `offset + W`
    pub position_embedding: Matrix<T>,
    /// 2 × d
    pub segment_embedding: Matrix<T>,
    pub forward: LstmWeights<T>,
    pub backward: LstmWeights<T>,
    /// 3 × 2h
    pub classifier_weight: Matrix<T>,
    /// 1 × 3
    pub classifier_bias: Matrix<T>,
}

/// Tensor names in serialization order.
pub const TENSOR_NAMES: [&str; 11] = [
    "token_embedding",
    "position_embedding",
    "segment_embedding",
    "forward.w_ih",
    "forward.w_hh",
    "forward.bias",
    "backward.w_ih",
    "backward.w_hh",
    "backward.bias",
    "classifier.weight",
    "classifier.bias",
];

impl<T: Scalar> Parameters<T> {
    /// All-zero parameters shaped for `hp`; also the gradient accumulator shape.
    pub fn zeros(hp: &Hyperparameters) -> Self {
        let (d, h) = (hp.embed_dim, hp.hidden_dim);
        Parameters {
            token_embedding: Matrix::zeros(hp.vocab_size, d),
            position_embedding: Matrix::zeros(hp.position_rows(), d),
            segment_embedding: Matrix::zeros(2, d),
            forward: LstmWeights::zeros(d, h),
            backward: LstmWeights::zeros(d, h),
            classifier_weight: Matrix::zeros(crate::corpus::WordLabel::COUNT, 2 * h),
            classifier_bias: Matrix::zeros(1, crate::corpus::WordLabel::COUNT),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(Matrix::fill_zero);
        z
    }

    pub fn tensors(&self) -> [&Matrix<T>; 11] {
        [
            &self.token_embedding,
            &self.position_embedding,
            &self.segment_embedding,
            &self.forward.w_ih,
            &self.forward.w_hh,
            &self.forward.bias,
            &self.backward.w_ih,
            &self.backward.w_hh,
            &self.backward.bias,
            &self.classifier_weight,
            &self.classifier_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix<T>; 11] {
        [
            &mut self.token_embedding,
            &mut self.position_embedding,
            &mut self.segment_embedding,
            &mut self.forward.w_ih,
            &mut self.forward.w_hh,
            &mut self.forward.bias,
            &mut self.backward.w_ih,
            &mut self.backward.w_hh,
            &mut self.backward.bias,
            &mut self.classifier_weight,
            &mut self.classifier_bias,
        ]
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors().iter().map(|m| m.as_slice().len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|m| m.as_slice().iter().all(|v| v.is_finite()))
    }

    /// Name of the first tensor holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.tensors()
            .iter()
            .zip(TENSOR_NAMES)
            .find(|(m, _)| m.as_slice().iter().any(|v| !v.is_finite()))
            .map(|(_, name)| name)
    }

    pub fn hidden_dim(&self) -> usize {
        self.forward.w_hh.cols()
    }

    pub fn embed_dim(&self) -> usize {
        self.token_embedding.cols()
    }

    /// Checks shapes against `hp`.
    pub fn check_shapes(&self, hp: &Hyperparameters) -> Result<()> {
        let expected = Parameters::<T>::zeros(hp);
        for ((have, want), name) in self.tensors().iter().zip(expected.tensors()).zip(TENSOR_NAMES) {
            if have.shape() != want.shape() {
                return Err(Error::Dimension(format!(
                    "{name}: expected {:?}, found {:?}",
                    want.shape(),
                    have.shape()
                )));
            }
        }
        Ok(())
    }
}

fn glorot<T: Scalar>(m: &mut Matrix<T>, rng: &mut ChaCha8Rng) {
    let (rows, cols) = m.shape();
    let s = (6.0 / (rows + cols) as f64).sqrt();
    for v in m.as_mut_slice() {
        *v = T::from_f64_lossy(rng.gen_range(-s..=s));
    }
}

/// Glorot-uniform weights from `hp.seed`; zero biases except the forget-gate
/// block of each LSTM bias, which is 1.
pub fn init_parameters<T: Scalar>(hp: &Hyperparameters) -> Parameters<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut p = Parameters::zeros(hp);
    glorot(&mut p.token_embedding, &mut rng);
    glorot(&mut p.position_embedding, &mut rng);
    glorot(&mut p.segment_embedding, &mut rng);
    let h = hp.hidden_dim;
    for dir in [&mut p.forward, &mut p.backward] {
        glorot(&mut dir.w_ih, &mut rng);
        glorot(&mut dir.w_hh, &mut rng);
        for v in &mut dir.bias.as_mut_slice()[h..2 * h] {
            *v = T::one();
        }
    }
    glorot(&mut p.classifier_weight, &mut rng);
    p
}
