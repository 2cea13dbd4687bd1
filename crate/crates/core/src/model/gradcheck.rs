use super::bilstm::{backward, forward, ForwardTrace};
use super::matrix::Matrix;
use super::params::{Hyperparameters, Parameters};
use crate::encoding::EncodedInput;
use crate::error::Result;
use crate::scalar::Scalar;
use crate::train::cross_entropy_loss;

/// Loss of `params` on one input.
pub fn loss_at<T: Scalar>(
    enc: &EncodedInput,
    params: &Parameters<T>,
    hp: &Hyperparameters,
    features: Option<&Matrix<f32>>,
) -> Result<T> {
    let trace = forward(enc, params, hp, features)?;
    Ok(cross_entropy_loss(&trace, enc))
}

/// `loss(plus) - loss(minus)` without subtracting two O(1) losses.
///
/// Per labeled position, `lse(z⁺) - lse(z⁻) = ln Σ_c softmax(z⁻)_c · exp(z⁺_c - z⁻_c)`,
/// evaluated with `ln_1p`/`exp_m1` on the logit deltas. The result only
/// carries the rounding error of the logits, not of the losses.
pub fn loss_difference<T: Scalar>(
    plus: &ForwardTrace<T>,
    minus: &ForwardTrace<T>,
    enc: &EncodedInput,
) -> T {
    let mut total = T::zero();
    let mut count = 0usize;
    for (t, (&masked, label)) in enc.loss_mask.iter().zip(&enc.label_ids).enumerate() {
        let Some(label) = label.filter(|_| masked) else {
            continue;
        };
        let (zp, zm, pm) = (plus.logits.row(t), minus.logits.row(t), minus.probs.row(t));
        let mut shift = T::zero();
        for c in 0..zp.len() {
            shift = shift + pm[c] * (zp[c] - zm[c]).exp_m1();
        }
        let y = label.id();
        total = total + (shift.ln_1p() - (zp[y] - zm[y]));
        count += 1;
    }
    if count == 0 {
        T::zero()
    } else {
        total / T::from_usize(count).expect("count fits in scalar")
    }
}

/// Worst relative disagreement between the analytic gradient and central
/// differences over every scalar parameter:
/// `|g_a - g_n| / max(|g_a|, |g_n|, 1e-8)`.
pub fn finite_difference_check<T: Scalar>(
    enc: &EncodedInput,
    params: &Parameters<T>,
    hp: &Hyperparameters,
    epsilon: T,
    features: Option<&Matrix<f32>>,
) -> Result<T> {
    assert!(epsilon > T::zero(), "epsilon must be positive");
    let trace = forward(enc, params, hp, features)?;
    let analytic = backward(&trace, enc, params, hp);
    let floor = T::from_f64_lossy(1e-8);
    let two = T::one() + T::one();

    let mut probe = params.clone();
    let mut worst = T::zero();
    for k in 0..analytic.tensors().len() {
        let len = analytic.tensors()[k].as_slice().len();
        for i in 0..len {
            let original = probe.tensors()[k].as_slice()[i];
            probe.tensors_mut()[k].as_mut_slice()[i] = original + epsilon;
            let plus = forward(enc, &probe, hp, features)?;
            probe.tensors_mut()[k].as_mut_slice()[i] = original - epsilon;
            let minus = forward(enc, &probe, hp, features)?;
            probe.tensors_mut()[k].as_mut_slice()[i] = original;

            let numeric = loss_difference(&plus, &minus, enc) / (two * epsilon);
            let exact = analytic.tensors()[k].as_slice()[i];
            let denom = exact.abs().max(numeric.abs()).max(floor);
            let err = (exact - numeric).abs() / denom;
            if err > worst {
                worst = err;
            }
        }
    }
    Ok(worst)
}
