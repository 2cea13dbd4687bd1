//! BiLSTM tagger: input vectors → two LSTM passes → per-position softmax.

use super::matrix::Matrix;
use super::params::{FeatureMode, Hyperparameters, LstmWeights, Parameters};
use crate::corpus::WordLabel;
use crate::encoding::EncodedInput;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Cached activations of one LSTM direction, indexed by input position.
#[derive(Debug, Clone)]
pub struct DirectionTrace<T> {
    /// Post-activation gates `[i, f, g, o]`, T × 4h.
    pub gates: Matrix<T>,
    /// Cell state, T × h.
    pub cell: Matrix<T>,
    /// Hidden state, T × h.
    pub hidden: Matrix<T>,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    /// Summed input vectors, T × d.
    pub inputs: Matrix<T>,
    pub forward: DirectionTrace<T>,
    pub backward: DirectionTrace<T>,
    /// T × 3
    pub logits: Matrix<T>,
    /// T × 3, rows sum to one.
    pub probs: Matrix<T>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn len(&self) -> usize {
        self.logits.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.rows() == 0
    }
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Softmax with the row maximum subtracted first.
pub fn stable_softmax<T: Scalar>(logits: &[T], out: &mut [T]) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum = sum + *o;
    }
    for o in out.iter_mut() {
        *o = *o / sum;
    }
}

fn position_row(offset: i32, window: usize) -> usize {
    (offset + window as i32) as usize
}

fn check_input(enc: &EncodedInput, hp: &Hyperparameters) -> Result<()> {
    let n = enc.len();
    if [
        enc.segment_ids.len(),
        enc.position_ids.len(),
        enc.label_ids.len(),
        enc.loss_mask.len(),
    ]
    .iter()
    .any(|&l| l != n)
    {
        return Err(Error::Dimension("per-position fields differ in length".into()));
    }
    if hp.feature_mode == FeatureMode::LearnedEmbeddings {
        if let Some(&id) = enc.token_ids.iter().find(|&&id| id as usize >= hp.vocab_size) {
            return Err(Error::Dimension(format!(
                "token id {id} outside vocabulary of {}",
                hp.vocab_size
            )));
        }
    }
    if hp.use_position {
        let w = hp.window as i32;
        if let Some(p) = enc.position_ids.iter().find(|p| p.abs() > w) {
            return Err(Error::Dimension(format!("position id {p} outside window {w}")));
        }
    }
    if enc.segment_ids.iter().any(|&s| s > 1) {
        return Err(Error::Dimension("segment id must be 0 or 1".into()));
    }
    Ok(())
}

fn build_inputs<T: Scalar>(
    enc: &EncodedInput,
    params: &Parameters<T>,
    hp: &Hyperparameters,
    features: Option<&Matrix<f32>>,
) -> Result<Matrix<T>> {
    let n = enc.len();
    let d = hp.embed_dim;
    let mut inputs = match (hp.feature_mode, features) {
        (FeatureMode::LearnedEmbeddings, _) => {
            let mut m = Matrix::zeros(n, d);
            for (t, &id) in enc.token_ids.iter().enumerate() {
                m.row_mut(t).copy_from_slice(params.token_embedding.row(id as usize));
            }
            m
        }
        (FeatureMode::ExternalFeatures, None) => {
            return Err(Error::Dimension(
                "external feature mode requires a feature matrix".into(),
            ))
        }
        (FeatureMode::ExternalFeatures, Some(f)) => {
            if f.shape() != (n, d) {
                return Err(Error::Dimension(format!(
                    "feature matrix is {:?}, input needs ({n}, {d})",
                    f.shape()
                )));
            }
            f.map(|v| T::from_f64_lossy(f64::from(v)))
        }
    };
    for t in 0..n {
        let row = inputs.row_mut(t);
        if hp.use_position {
            let p = params
                .position_embedding
                .row(position_row(enc.position_ids[t], hp.window));
            row.iter_mut().zip(p).for_each(|(x, &v)| *x = *x + v);
        }
        if hp.use_segment {
            let s = params.segment_embedding.row(enc.segment_ids[t] as usize);
            row.iter_mut().zip(s).for_each(|(x, &v)| *x = *x + v);
        }
    }
    Ok(inputs)
}

fn run_direction<T: Scalar>(
    weights: &LstmWeights<T>,
    inputs: &Matrix<T>,
    hidden_dim: usize,
    reverse: bool,
) -> DirectionTrace<T> {
    let n = inputs.rows();
    let h = hidden_dim;
    let mut gates = Matrix::zeros(n, 4 * h);
    let mut cell = Matrix::zeros(n, h);
    let mut hidden = Matrix::zeros(n, h);
    let mut h_prev = vec![T::zero(); h];
    let mut c_prev = vec![T::zero(); h];
    let mut z = vec![T::zero(); 4 * h];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..n).rev())
    } else {
        Box::new(0..n)
    };
    for t in order {
        z.copy_from_slice(weights.bias.as_slice());
        weights.w_ih.mul_vec_add(inputs.row(t), &mut z);
        weights.w_hh.mul_vec_add(&h_prev, &mut z);
        let g_row = gates.row_mut(t);
        for k in 0..h {
            g_row[k] = sigmoid(z[k]);
            g_row[h + k] = sigmoid(z[h + k]);
            g_row[2 * h + k] = z[2 * h + k].tanh();
            g_row[3 * h + k] = sigmoid(z[3 * h + k]);
        }
        let g_row = gates.row(t);
        let c_row = cell.row_mut(t);
        for k in 0..h {
            c_row[k] = g_row[h + k] * c_prev[k] + g_row[k] * g_row[2 * h + k];
        }
        c_prev.copy_from_slice(c_row);
        let h_row = hidden.row_mut(t);
        for k in 0..h {
            h_row[k] = g_row[3 * h + k] * c_prev[k].tanh();
        }
        h_prev.copy_from_slice(h_row);
    }
    DirectionTrace {
        gates,
        cell,
        hidden,
    }
}

/// Runs the tagger over one input.
///
/// In external-feature mode `features` must hold one row per position; in
/// learned-embedding mode it is ignored.
pub fn forward<T: Scalar>(
    enc: &EncodedInput,
    params: &Parameters<T>,
    hp: &Hyperparameters,
    features: Option<&Matrix<f32>>,
) -> Result<ForwardTrace<T>> {
    check_input(enc, hp)?;
    let inputs = build_inputs(enc, params, hp, features)?;
    let h = hp.hidden_dim;
    let fwd = run_direction(&params.forward, &inputs, h, false);
    let bwd = run_direction(&params.backward, &inputs, h, true);

    let n = enc.len();
    let classes = WordLabel::COUNT;
    let mut logits = Matrix::zeros(n, classes);
    let mut probs = Matrix::zeros(n, classes);
    let mut state = vec![T::zero(); 2 * h];
    for t in 0..n {
        state[..h].copy_from_slice(fwd.hidden.row(t));
        state[h..].copy_from_slice(bwd.hidden.row(t));
        let row = logits.row_mut(t);
        row.copy_from_slice(params.classifier_bias.as_slice());
        params.classifier_weight.mul_vec_add(&state, row);
        stable_softmax(logits.row(t), probs.row_mut(t));
    }
    Ok(ForwardTrace {
        inputs,
        forward: fwd,
        backward: bwd,
        logits,
        probs,
    })
}

fn backprop_direction<T: Scalar>(
    weights: &LstmWeights<T>,
    grads: &mut LstmWeights<T>,
    trace: &DirectionTrace<T>,
    inputs: &Matrix<T>,
    d_hidden_out: &Matrix<T>,
    d_inputs: &mut Matrix<T>,
    reverse: bool,
) {
    let n = inputs.rows();
    let h = trace.hidden.cols();
    let zero = vec![T::zero(); h];
    let mut dh_next = vec![T::zero(); h];
    let mut dc_next = vec![T::zero(); h];
    let mut dz = vec![T::zero(); 4 * h];
    // Visit positions in the opposite order to the forward pass.
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new(0..n)
    } else {
        Box::new((0..n).rev())
    };
    for t in order {
        let prev = if reverse {
            (t + 1 < n).then_some(t + 1)
        } else {
            t.checked_sub(1)
        };
        let (h_prev, c_prev) = match prev {
            Some(p) => (trace.hidden.row(p), trace.cell.row(p)),
            None => (zero.as_slice(), zero.as_slice()),
        };
        let g = trace.gates.row(t);
        let c = trace.cell.row(t);
        let dh_out = d_hidden_out.row(t);
        for k in 0..h {
            let (i, f, gg, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
            let tc = c[k].tanh();
            let dh = dh_out[k] + dh_next[k];
            let d_o = dh * tc;
            let dc = dh * o * (T::one() - tc * tc) + dc_next[k];
            let di = dc * gg;
            let dg = dc * i;
            let df = dc * c_prev[k];
            dc_next[k] = dc * f;
            dz[k] = di * i * (T::one() - i);
            dz[h + k] = df * f * (T::one() - f);
            dz[2 * h + k] = dg * (T::one() - gg * gg);
            dz[3 * h + k] = d_o * o * (T::one() - o);
        }
        grads.w_ih.add_outer(&dz, inputs.row(t));
        grads.w_hh.add_outer(&dz, h_prev);
        grads
            .bias
            .as_mut_slice()
            .iter_mut()
            .zip(&dz)
            .for_each(|(b, &v)| *b = *b + v);
        weights.w_ih.mul_vec_t_add(&dz, d_inputs.row_mut(t));
        dh_next.iter_mut().for_each(|v| *v = T::zero());
        weights.w_hh.mul_vec_t_add(&dz, &mut dh_next);
    }
}

/// Gradient of the mean masked cross-entropy with respect to every parameter.
///
/// Returns all zeros when no position is labeled.
pub fn backward<T: Scalar>(
    trace: &ForwardTrace<T>,
    enc: &EncodedInput,
    params: &Parameters<T>,
    hp: &Hyperparameters,
) -> Parameters<T> {
    let mut grads = params.zeros_like();
    let labeled = enc.labeled_count();
    if labeled == 0 {
        return grads;
    }
    let n = enc.len();
    let h = hp.hidden_dim;
    let scale = T::one() / T::from_usize(labeled).expect("count fits in scalar");

    let mut d_fwd_hidden = Matrix::zeros(n, h);
    let mut d_bwd_hidden = Matrix::zeros(n, h);
    let mut state = vec![T::zero(); 2 * h];
    let mut d_logits = vec![T::zero(); WordLabel::COUNT];
    let mut d_state = vec![T::zero(); 2 * h];
    for t in 0..n {
        let label = match (enc.loss_mask[t], enc.label_ids[t]) {
            (true, Some(l)) => l,
            _ => continue,
        };
        for (c, dl) in d_logits.iter_mut().enumerate() {
            let target = if c == label.id() { T::one() } else { T::zero() };
            *dl = (trace.probs[(t, c)] - target) * scale;
        }
        state[..h].copy_from_slice(trace.forward.hidden.row(t));
        state[h..].copy_from_slice(trace.backward.hidden.row(t));
        grads.classifier_weight.add_outer(&d_logits, &state);
        grads
            .classifier_bias
            .as_mut_slice()
            .iter_mut()
            .zip(&d_logits)
            .for_each(|(b, &v)| *b = *b + v);
        d_state.iter_mut().for_each(|v| *v = T::zero());
        params.classifier_weight.mul_vec_t_add(&d_logits, &mut d_state);
        d_fwd_hidden.row_mut(t).copy_from_slice(&d_state[..h]);
        d_bwd_hidden.row_mut(t).copy_from_slice(&d_state[h..]);
    }

    let mut d_inputs = Matrix::zeros(n, hp.embed_dim);
    backprop_direction(
        &params.forward,
        &mut grads.forward,
        &trace.forward,
        &trace.inputs,
        &d_fwd_hidden,
        &mut d_inputs,
        false,
    );
    backprop_direction(
        &params.backward,
        &mut grads.backward,
        &trace.backward,
        &trace.inputs,
        &d_bwd_hidden,
        &mut d_inputs,
        true,
    );

    for t in 0..n {
        let dx = d_inputs.row(t);
        if hp.feature_mode == FeatureMode::LearnedEmbeddings {
            let row = grads.token_embedding.row_mut(enc.token_ids[t] as usize);
            row.iter_mut().zip(dx).for_each(|(g, &v)| *g = *g + v);
        }
        if hp.use_position {
            let row = grads
                .position_embedding
                .row_mut(position_row(enc.position_ids[t], hp.window));
            row.iter_mut().zip(dx).for_each(|(g, &v)| *g = *g + v);
        }
        if hp.use_segment {
            let row = grads.segment_embedding.row_mut(enc.segment_ids[t] as usize);
            row.iter_mut().zip(dx).for_each(|(g, &v)| *g = *g + v);
        }
    }
    grads
}

/// Arg-max tag at each word's first piece, in word order.
pub fn predict_word_labels<T: Scalar>(trace: &ForwardTrace<T>, enc: &EncodedInput) -> Vec<WordLabel> {
    enc.word_positions()
        .into_iter()
        .map(|t| {
            let row = trace.probs.row(t);
            let mut best = 0;
            for c in 1..row.len() {
                if row[c] > row[best] {
                    best = c;
                }
            }
            WordLabel::from_id(best).expect("three classes")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Span;
    use crate::encoding::Variant;
    use crate::model::init_parameters;

    fn hp() -> Hyperparameters {
        Hyperparameters {
            embed_dim: 4,
            hidden_dim: 3,
            window: 3,
            use_position: true,
            use_segment: true,
            seed: 11,
            ..Hyperparameters::new(8)
        }
    }

    fn input(ids: &[u32]) -> EncodedInput {
        let n = ids.len();
        EncodedInput {
            token_ids: ids.to_vec(),
            segment_ids: vec![0; n],
            position_ids: (0..n as i32).map(|p| (p - 1).clamp(-3, 3)).collect(),
            label_ids: vec![Some(WordLabel::O); n],
            loss_mask: vec![true; n],
            sentence_region: Span::new(0, n - 1),
            aspect_piece_span: Span::new(1, 1),
            variant: Variant::S,
        }
    }

    #[test]
    fn softmax_rows_normalized() {
        let p = init_parameters::<f64>(&hp());
        let trace = forward(&input(&[1, 2, 3]), &p, &hp(), None).unwrap();
        assert_eq!(trace.logits.shape(), (3, 3));
        for t in 0..3 {
            let s: f64 = trace.probs.row(t).iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(trace.probs.row(t).iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let mut out = [0.0f64; 3];
        stable_softmax(&[1000.0, 1000.0, -1000.0], &mut out);
        assert!((out[0] - 0.5).abs() < 1e-12 && out[2] == 0.0);
    }

    #[test]
    fn zero_classifier_gives_uniform() {
        let mut p = init_parameters::<f64>(&hp());
        p.classifier_weight.fill_zero();
        let trace = forward(&input(&[1, 2, 3, 4]), &p, &hp(), None).unwrap();
        assert!(trace.probs.as_slice().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn reversal_swaps_directions() {
        // With identical weights in both directions and no position/segment
        // features, reversing the sequence swaps the two hidden-state tracks.
        let cfg = Hyperparameters {
            use_position: false,
            use_segment: false,
            ..hp()
        };
        let mut p = init_parameters::<f64>(&cfg);
        p.backward = p.forward.clone();
        let ids = [1, 5, 2, 7];
        let rev: Vec<u32> = ids.iter().rev().copied().collect();
        let a = forward(&input(&ids), &p, &cfg, None).unwrap();
        let b = forward(&input(&rev), &p, &cfg, None).unwrap();
        for t in 0..4 {
            for (x, y) in a.forward.hidden.row(t).iter().zip(b.backward.hidden.row(3 - t)) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rejects_out_of_range_ids() {
        let p = init_parameters::<f64>(&hp());
        assert!(forward(&input(&[1, 99]), &p, &hp(), None).is_err());
        let mut enc = input(&[1, 2]);
        enc.position_ids[0] = 9;
        assert!(forward(&enc, &p, &hp(), None).is_err());
    }

    #[test]
    fn external_features_dimension_checked() {
        let cfg = Hyperparameters {
            feature_mode: FeatureMode::ExternalFeatures,
            ..hp()
        };
        let p = init_parameters::<f64>(&cfg);
        let enc = input(&[1, 2, 3]);
        assert!(forward(&enc, &p, &cfg, None).is_err());
        let bad = Matrix::<f32>::zeros(3, 5);
        assert!(forward(&enc, &p, &cfg, Some(&bad)).is_err());
        let good = Matrix::<f32>::from_fn(3, 4, |r, c| (r * 4 + c) as f32 * 0.1);
        assert!(forward(&enc, &p, &cfg, Some(&good)).is_ok());
    }

    #[test]
    fn zero_mask_gives_zero_gradients() {
        let p = init_parameters::<f64>(&hp());
        let mut enc = input(&[1, 2, 3]);
        enc.loss_mask = vec![false; 3];
        let trace = forward(&enc, &p, &hp(), None).unwrap();
        let g = backward(&trace, &enc, &p, &hp());
        assert!(g.tensors().iter().all(|m| m.as_slice().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn single_position_logit_gradient() {
        let p = init_parameters::<f64>(&hp());
        let mut enc = input(&[1, 2, 3]);
        enc.loss_mask = vec![false, true, false];
        enc.label_ids[1] = Some(WordLabel::B);
        let trace = forward(&enc, &p, &hp(), None).unwrap();
        let g = backward(&trace, &enc, &p, &hp());
        // classifier bias gradient equals dL/dlogits at the labeled position
        let expected: Vec<f64> = (0..3)
            .map(|c| trace.probs[(1, c)] - if c == 1 { 1.0 } else { 0.0 })
            .collect();
        for (a, b) in g.classifier_bias.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
