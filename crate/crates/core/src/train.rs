//! Masked cross-entropy, Adam, early stopping on dev F1 and the multi-seed
//! protocol.
//!
//! A run's seed feeds one ChaCha generator family: stream 0 initializes the
//! parameters, stream 1 drives the per-epoch shuffles.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Span};
use crate::encoding::{encode_example, EncodeConfig, EncodedInput, Variant};
use crate::error::{Error, Result};
use crate::eval::{decode_spans, micro_f1, EvalReport, ExampleSpans};
use crate::model::{
    backward, forward, init_parameters, predict_word_labels, FeatureMode, FeatureStore,
    ForwardTrace, Hyperparameters, Matrix, Parameters,
};
use crate::scalar::Scalar;
use crate::subword::Tokenizer;

/// Mean of `-ln p(label)` over positions with `loss_mask` set; 0 when none are.
/// Computed from logits with log-sum-exp.
pub fn cross_entropy_loss<T: Scalar>(trace: &ForwardTrace<T>, enc: &EncodedInput) -> T {
    let mut total = T::zero();
    let mut count = 0usize;
    for (t, (&masked, label)) in enc.loss_mask.iter().zip(&enc.label_ids).enumerate() {
        let Some(label) = label.filter(|_| masked) else {
            continue;
        };
        let row = trace.logits.row(t);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&l| (l - max).exp()).sum::<T>().ln();
        total = total + (lse - row[label.id()]);
        count += 1;
    }
    if count == 0 {
        T::zero()
    } else {
        total / T::from_usize(count).expect("count fits in scalar")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    /// Evaluations without dev improvement before stopping.
    pub patience: usize,
    pub seeds: Vec<u64>,
    pub eval_every: usize,
    pub variant: Variant,
    pub mask_aspect: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 50,
            patience: 5,
            seeds: vec![1, 2, 3, 4, 5],
            eval_every: 1,
            variant: Variant::SA,
            mask_aspect: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub first_moment: Parameters<T>,
    pub second_moment: Parameters<T>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &Parameters<T>) -> Self {
        AdamState {
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
        }
    }
}

/// Bias-corrected Adam update for step `t` (1-based). Parameters are left
/// untouched if any gradient entry is not finite.
pub fn adam_step<T: Scalar>(
    params: &mut Parameters<T>,
    grads: &Parameters<T>,
    state: &mut AdamState<T>,
    config: &TrainConfig,
    t: u64,
) -> Result<()> {
    assert!(t >= 1, "adam steps are 1-based");
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::NonFiniteGradient(name));
    }
    let b1 = T::from_f64_lossy(config.beta1);
    let b2 = T::from_f64_lossy(config.beta2);
    let one = T::one();
    let lr = T::from_f64_lossy(config.learning_rate);
    let eps = T::from_f64_lossy(config.epsilon);
    let exp = i32::try_from(t).unwrap_or(i32::MAX);
    let c1 = one - b1.powi(exp);
    let c2 = one - b2.powi(exp);

    let p = params.tensors_mut();
    let g = grads.tensors();
    let m = state.first_moment.tensors_mut();
    let v = state.second_moment.tensors_mut();
    for (((p, g), m), v) in p.into_iter().zip(g).zip(m).zip(v) {
        for (((p, &g), m), v) in p
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(m.as_mut_slice())
            .zip(v.as_mut_slice())
        {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    if let Some(name) = params.first_non_finite() {
        return Err(Error::Config(format!("update produced non-finite values in {name}")));
    }
    Ok(())
}

/// An encoded example with its gold spans and, in external-feature mode,
/// its feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    pub input: EncodedInput,
    pub gold: Vec<Span>,
    pub features: Option<Matrix<f32>>,
}

pub fn prepare_instances(
    dataset: &Dataset,
    tokenizer: &Tokenizer,
    variant: Variant,
    mask_aspect: bool,
    config: &EncodeConfig,
    features: Option<&FeatureStore>,
) -> Result<Vec<Instance>> {
    dataset
        .examples
        .iter()
        .map(|ex| {
            let input = encode_example(ex, tokenizer, variant, mask_aspect, config)?;
            let features = match features {
                Some(store) => {
                    let m = store
                        .get(&ex.id)
                        .ok_or_else(|| Error::MissingFeatures(ex.id.clone()))?;
                    if m.rows() != input.len() {
                        return Err(Error::Dimension(format!(
                            "example {:?}: {} feature rows for {} positions",
                            ex.id,
                            m.rows(),
                            input.len()
                        )));
                    }
                    Some(m.clone())
                }
                None => None,
            };
            Ok(Instance {
                id: ex.id.clone(),
                input,
                gold: ex.opinion_spans.clone(),
                features,
            })
        })
        .collect()
}

fn check_features(hp: &Hyperparameters, instances: &[Instance]) -> Result<()> {
    if hp.feature_mode == FeatureMode::ExternalFeatures {
        if let Some(inst) = instances.iter().find(|i| i.features.is_none()) {
            return Err(Error::MissingFeatures(inst.id.clone()));
        }
    }
    Ok(())
}

/// Predicted opinion spans for each instance, in input order.
pub fn predict_spans<T: Scalar>(
    params: &Parameters<T>,
    hp: &Hyperparameters,
    instances: &[Instance],
) -> Result<Vec<ExampleSpans>> {
    check_features(hp, instances)?;
    instances
        .par_iter()
        .map(|inst| {
            let trace = forward(&inst.input, params, hp, inst.features.as_ref())?;
            let labels = predict_word_labels(&trace, &inst.input);
            Ok((inst.id.clone(), decode_spans(&labels)))
        })
        .collect()
}

pub fn evaluate<T: Scalar>(
    params: &Parameters<T>,
    hp: &Hyperparameters,
    instances: &[Instance],
) -> Result<EvalReport> {
    let predicted = predict_spans(params, hp, instances)?;
    let gold: Vec<ExampleSpans> = instances
        .iter()
        .map(|i| (i.id.clone(), i.gold.clone()))
        .collect();
    micro_f1(&predicted, &gold)
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub seed: u64,
    pub epoch: usize,
    pub loss: f64,
    pub dev_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept; 0 if no evaluation ran.
    pub best_epoch: usize,
    pub best_dev_f1: f64,
}

/// Per-epoch visiting order of the training examples, drawn from stream 1
/// of the seed's generator.
#[derive(Debug, Clone)]
pub struct EpochOrder {
    rng: ChaCha8Rng,
    order: Vec<usize>,
}

impl EpochOrder {
    pub fn new(seed: u64, len: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        EpochOrder {
            rng,
            order: (0..len).collect(),
        }
    }

    /// A fresh permutation of `0..len`.
    pub fn next_epoch(&mut self) -> &[usize] {
        self.order.sort_unstable();
        self.order.shuffle(&mut self.rng);
        &self.order
    }
}

/// Trains one model with early stopping and returns the best-dev parameters.
pub fn train_one<T: Scalar>(
    train: &[Instance],
    dev: &[Instance],
    hp: &Hyperparameters,
    config: &TrainConfig,
    seed: u64,
) -> Result<(Parameters<T>, TrainHistory)> {
    train_one_observed(train, dev, hp, config, seed, &|_| {})
}

/// [`train_one`] with a callback invoked after every epoch.
pub fn train_one_observed<T: Scalar>(
    train: &[Instance],
    dev: &[Instance],
    hp: &Hyperparameters,
    config: &TrainConfig,
    seed: u64,
    on_epoch: &(dyn Fn(&EpochRecord) + Sync),
) -> Result<(Parameters<T>, TrainHistory)> {
    config.validate()?;
    hp.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::Config("training and dev sets must be non-empty".into()));
    }
    check_features(hp, train)?;
    check_features(hp, dev)?;

    let hp = Hyperparameters { seed, ..*hp };
    let mut params: Parameters<T> = init_parameters(&hp);
    let mut state = AdamState::new(&params);
    let mut order = EpochOrder::new(seed, train.len());
    let mut step = 0u64;
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        best_dev_f1: f64::NEG_INFINITY,
    };
    let mut best: Option<Parameters<T>> = None;
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        let mut total = 0.0;
        for &i in order.next_epoch() {
            let inst = &train[i];
            let trace = forward(&inst.input, &params, &hp, inst.features.as_ref())?;
            total += cross_entropy_loss(&trace, &inst.input).to_f64().unwrap_or(f64::NAN);
            let grads = backward(&trace, &inst.input, &params, &hp);
            step += 1;
            adam_step(&mut params, &grads, &mut state, config, step).map_err(|e| {
                Error::Config(format!("seed {seed}, epoch {epoch}, example {:?}: {e}", inst.id))
            })?;
        }
        let loss = total / train.len() as f64;

        let dev_f1 = if epoch % config.eval_every == 0 {
            Some(evaluate(&params, &hp, dev)?.f1)
        } else {
            None
        };
        let record = EpochRecord {
            seed,
            epoch,
            loss,
            dev_f1,
        };
        on_epoch(&record);
        history.epochs.push(record);

        if let Some(f1) = dev_f1 {
            if f1 > history.best_dev_f1 {
                history.best_dev_f1 = f1;
                history.best_epoch = epoch;
                best = Some(params.clone());
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        }
    }
    if history.best_dev_f1 == f64::NEG_INFINITY {
        history.best_dev_f1 = 0.0;
    }
    Ok((best.unwrap_or(params), history))
}

#[derive(Debug, Clone)]
pub struct SeedRun<T> {
    pub seed: u64,
    pub params: Parameters<T>,
    pub history: TrainHistory,
    pub test: EvalReport,
}

#[derive(Debug, Clone)]
pub struct MultiRun<T> {
    pub runs: Vec<SeedRun<T>>,
    pub mean_f1: f64,
}

/// Trains once per configured seed (in parallel) and scores each best-dev
/// model on `test`. Any failing seed fails the whole protocol.
pub fn train_multi<T: Scalar>(
    train: &[Instance],
    dev: &[Instance],
    test: &[Instance],
    hp: &Hyperparameters,
    config: &TrainConfig,
    on_epoch: &(dyn Fn(&EpochRecord) + Sync),
) -> Result<MultiRun<T>> {
    config.validate()?;
    let runs: Vec<SeedRun<T>> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let (params, history) = train_one_observed(train, dev, hp, config, seed, on_epoch)?;
            let run_hp = Hyperparameters { seed, ..*hp };
            let test = evaluate(&params, &run_hp, test)?;
            Ok(SeedRun {
                seed,
                params,
                history,
                test,
            })
        })
        .collect::<Result<_>>()?;
    let f1s: Vec<f64> = runs.iter().map(|r| r.test.f1).collect();
    Ok(MultiRun {
        mean_f1: crate::eval::average_runs(&f1s),
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::WordLabel;
    use crate::model::DirectionTrace;

    fn trace_with_logits(rows: &[[f64; 3]]) -> ForwardTrace<f64> {
        let n = rows.len();
        let logits = Matrix::from_fn(n, 3, |r, c| rows[r][c]);
        let mut probs = Matrix::zeros(n, 3);
        for t in 0..n {
            crate::model::stable_softmax(logits.row(t), probs.row_mut(t));
        }
        let empty = DirectionTrace {
            gates: Matrix::zeros(n, 0),
            cell: Matrix::zeros(n, 0),
            hidden: Matrix::zeros(n, 0),
        };
        ForwardTrace {
            inputs: Matrix::zeros(n, 0),
            forward: empty.clone(),
            backward: empty,
            logits,
            probs,
        }
    }

    fn enc(labels: &[Option<WordLabel>], mask: &[bool]) -> EncodedInput {
        let n = labels.len();
        EncodedInput {
            token_ids: vec![0; n],
            segment_ids: vec![0; n],
            position_ids: vec![0; n],
            label_ids: labels.to_vec(),
            loss_mask: mask.to_vec(),
            sentence_region: Span::new(0, n - 1),
            aspect_piece_span: Span::new(0, 0),
            variant: Variant::S,
        }
    }

    #[test]
    fn uniform_loss_is_ln3() {
        let t = trace_with_logits(&[[0.3, 0.3, 0.3], [-2.0, -2.0, -2.0]]);
        let e = enc(&[Some(WordLabel::B), Some(WordLabel::O)], &[true, true]);
        assert!((cross_entropy_loss(&t, &e) - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_mask_loss_is_zero() {
        let t = trace_with_logits(&[[1.0, 2.0, 3.0]]);
        let e = enc(&[Some(WordLabel::B)], &[false]);
        assert_eq!(cross_entropy_loss(&t, &e), 0.0);
    }

    #[test]
    fn hand_built_two_position_loss() {
        // p = (0.5, 0.25, 0.25); labels O (p=0.5) and B (p=0.25)
        let row = [0.5f64.ln(), 0.25f64.ln(), 0.25f64.ln()];
        let t = trace_with_logits(&[row, row]);
        let e = enc(&[Some(WordLabel::O), Some(WordLabel::B)], &[true, true]);
        let expected = -(0.5f64.ln() + 0.25f64.ln()) / 2.0;
        assert!((cross_entropy_loss(&t, &e) - expected).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_loss_near_zero() {
        let t = trace_with_logits(&[[0.0, 800.0, 0.0]]);
        let e = enc(&[Some(WordLabel::B)], &[true]);
        assert_eq!(cross_entropy_loss(&t, &e), 0.0);
    }

    fn tiny_params() -> (Parameters<f64>, Hyperparameters) {
        let hp = Hyperparameters {
            embed_dim: 2,
            hidden_dim: 2,
            window: 1,
            ..Hyperparameters::new(3)
        };
        (init_parameters(&hp), hp)
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let (p0, _) = tiny_params();
        let g = p0.zeros_like();
        let mut p = p0.clone();
        let mut state = AdamState::new(&p);
        adam_step(&mut p, &g, &mut state, &TrainConfig::default(), 1).unwrap();
        assert_eq!(p, p0);

        let mut state = AdamState::new(&p0);
        state.first_moment.classifier_bias.as_mut_slice()[0] = 0.5;
        state.second_moment.classifier_bias.as_mut_slice()[0] = 0.5;
        adam_step(&mut p, &g, &mut state, &TrainConfig::default(), 2).unwrap();
        assert!((state.first_moment.classifier_bias.as_slice()[0] - 0.45).abs() < 1e-15);
        assert!((state.second_moment.classifier_bias.as_slice()[0] - 0.4995).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_closed_form() {
        let (mut p, _) = tiny_params();
        let before = p.clone();
        let mut g = p.zeros_like();
        for m in g.tensors_mut() {
            m.as_mut_slice().iter_mut().enumerate().for_each(|(i, v)| *v = 0.3 - 0.1 * i as f64);
        }
        let cfg = TrainConfig::default();
        let mut state = AdamState::new(&p);
        adam_step(&mut p, &g, &mut state, &cfg, 1).unwrap();
        for ((a, b), g) in p.tensors().iter().zip(before.tensors()).zip(g.tensors()) {
            for ((&a, &b), &g) in a.as_slice().iter().zip(b.as_slice()).zip(g.as_slice()) {
                let expected = b - cfg.learning_rate * g / (g.abs() + cfg.epsilon);
                assert!((a - expected).abs() < 1e-15, "{a} vs {expected}");
            }
        }
    }

    #[test]
    fn adam_is_deterministic_and_rejects_nan() {
        let (p0, _) = tiny_params();
        let mut g = p0.zeros_like();
        g.classifier_weight.as_mut_slice()[1] = 0.7;
        let cfg = TrainConfig::default();
        let run = || {
            let mut p = p0.clone();
            let mut s = AdamState::new(&p);
            adam_step(&mut p, &g, &mut s, &cfg, 1).unwrap();
            (p, s)
        };
        assert_eq!(run(), run());
        let mut bad = g.clone();
        bad.forward.w_hh.as_mut_slice()[0] = f64::NAN;
        let mut p = p0.clone();
        let mut s = AdamState::new(&p);
        assert!(matches!(
            adam_step(&mut p, &bad, &mut s, &cfg, 1),
            Err(Error::NonFiniteGradient("forward.w_hh"))
        ));
        assert_eq!(p, p0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { patience: 0, ..Default::default() },
            TrainConfig { seeds: vec![], ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }
}
